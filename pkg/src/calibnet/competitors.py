"""Same-trace competitor generation and local minimality probes."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .energy import PolygonalPartition, interface_energy, l1_distance, same_trace, verify_energy_identity
from .fixtures import hexagon_network
from .geometry import Segment, segment_distance
from .partition import FlatPartition

MODES = ("vertex-jitter", "interface-bump", "phase-nucleation", "junction-slide")
VIOLATION_TOL = 1e-7


class RejectionBudgetExceeded(ValueError):
    pass


@dataclass(frozen=True)
class PerturbationSpec:
    amplitude: float
    mode: str = "vertex-jitter"
    seed: int = 0
    refinement: int = 4
    trial: int = 0
    max_rejections: int = 100

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown perturbation mode {self.mode!r}")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.refinement < 1:
            raise ValueError("refinement must be at least 1")

    def to_json(self) -> dict:
        return {"amplitude": self.amplitude, "mode": self.mode, "seed": self.seed,
                "refinement": self.refinement, "trial": self.trial}


def rng_for(seed: int, trial: int, entity: int) -> np.random.Generator:
    """Counter-style generator: the stream depends only on the key."""
    return np.random.default_rng([int(seed), int(trial), int(entity)])


def _network(p, verts, segs) -> PolygonalPartition:
    return PolygonalPartition(p.domain, p.tensions, verts, segs)


def subdivide(p, n: int) -> PolygonalPartition:
    """Split every segment into n equal pieces."""
    verts = [v for v in p.vertices]
    segs = []
    for s in p.segments:
        a, b = p.vertices[s.a], p.vertices[s.b]
        ids = [s.a]
        for k in range(1, n):
            verts.append(a + (b - a) * (k / n))
            ids.append(len(verts) - 1)
        ids.append(s.b)
        segs.extend(Segment(ids[k], ids[k + 1], s.left, s.right) for k in range(n))
    return _network(p, verts, segs)


def _acceptable(q: PolygonalPartition, p) -> bool:
    return not q.validation_errors() and same_trace(q, p)


def _jitter(p, spec, rng):
    base = subdivide(p, spec.refinement)
    V = np.array(base.vertices)
    for v in range(len(V)):
        if base.is_boundary_vertex(v):
            continue
        ang = rng.uniform(0, 2 * math.pi)
        rad = spec.amplitude * math.sqrt(rng.uniform())
        V[v] += rad * np.array([math.cos(ang), math.sin(ang)])
    return _network(p, V, base.segments)


def _bump(p, spec, rng):
    a_ = spec.amplitude
    c = int(rng.integers(len(p.segments)))
    s = p.segments[c]
    a, b = p.seg_points(c)
    L = float(p.seg_arrays[2][c])
    if L <= 4 * a_:
        return None
    u = rng.uniform(2 * a_, L - 2 * a_)
    t = (b - a) / L
    nu = np.array([-t[1], t[0]]) * (1.0 if rng.uniform() < 0.5 else -1.0)
    m1 = a + (u - a_) * t
    m2 = a + (u + a_) * t
    apex = a + u * t + a_ * nu
    verts = list(p.vertices) + [m1, apex, m2]
    n = len(p.vertices)
    segs = [x for k, x in enumerate(p.segments) if k != c]
    segs += [Segment(s.a, n, s.left, s.right), Segment(n, n + 1, s.left, s.right),
             Segment(n + 1, n + 2, s.left, s.right), Segment(n + 2, s.b, s.left, s.right)]
    return _network(p, verts, segs)


def square_nucleus(p, center, side: float, phase: int, angle: float = 0.0):
    """Add an isolated square of the given phase centred at ``center``."""
    host = int(p.locate(np.asarray(center, float)[None])[0])
    if host == 0 or host == phase:
        raise ValueError("nucleus must sit inside a face of another phase")
    c = np.asarray(center, float)
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    corners = [c + R @ (0.5 * side * np.array(v)) for v in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    n = len(p.vertices)
    verts = list(p.vertices) + corners
    segs = list(p.segments) + [Segment(n + k, n + (k + 1) % 4, phase, host) for k in range(4)]
    return _network(p, verts, segs)


def _nucleate(p, spec, rng):
    s = spec.amplitude
    dom = p.domain
    ang = rng.uniform(0, 2 * math.pi)
    rad = dom.radius * math.sqrt(rng.uniform())
    x = dom.center + rad * np.array([math.cos(ang), math.sin(ang)])
    if dom.dist_to_boundary(x[None])[0] <= s:
        return None
    A, B, _ = p.seg_arrays
    for k in range(len(A)):
        if segment_distance(x[None], A[k], B[k])[0][0] <= s:
            return None
    host = int(p.locate(x[None])[0])
    others = [i for i in p.phases if i != host]
    if host == 0 or not others:
        return None
    phase = int(others[int(rng.integers(len(others)))])
    return square_nucleus(p, x, s, phase, rng.uniform(0, math.pi / 2))


def junctions(p) -> list[int]:
    return [v for v, inc in enumerate(p.incidence) if len(inc) >= 3 and not p.is_boundary_vertex(v)]


def slide_junction(p, v: int, displacement) -> PolygonalPartition:
    """Translate one interior vertex; incident segments stay straight."""
    V = np.array(p.vertices)
    V[v] = V[v] + np.asarray(displacement, float)
    return _network(p, V, p.segments)


def _slide(p, spec, rng):
    js = junctions(p)
    if not js:
        return None
    v = js[int(rng.integers(len(js)))]
    ang = rng.uniform(0, 2 * math.pi)
    return slide_junction(p, v, spec.amplitude * np.array([math.cos(ang), math.sin(ang)]))


_GENERATORS = {"vertex-jitter": _jitter, "interface-bump": _bump,
               "phase-nucleation": _nucleate, "junction-slide": _slide}


def applicable_modes(p) -> list[str]:
    return [m for m in MODES if m != "junction-slide" or junctions(p)]


def perturb_with_stats(p, spec: PerturbationSpec) -> tuple[PolygonalPartition, int]:
    """Competitor and the number of rejected samples."""
    if spec.amplitude == 0:
        return _network(p, p.vertices, p.segments), 0
    if spec.mode == "junction-slide" and not junctions(p):
        raise ValueError("partition has no interior junction to slide")
    gen = _GENERATORS[spec.mode]
    for attempt in range(spec.max_rejections + 1):
        q = gen(p, spec, rng_for(spec.seed, spec.trial, attempt))
        if q is not None and _acceptable(q, p):
            return q, attempt
    raise RejectionBudgetExceeded(
        f"{spec.mode} at amplitude {spec.amplitude}: no admissible competitor after "
        f"{spec.max_rejections} resamples")


def perturb(p, spec: PerturbationSpec) -> PolygonalPartition:
    return perturb_with_stats(p, spec)[0]


# ----------------------------------------------------------- hexagon family

def hexagon_family(t: float, outer_radius: float = 2.0) -> FlatPartition:
    """Hexagon network with inner circumradius rho = t * outer_radius / 2."""
    if not 0 < t <= 1:
        raise ValueError("family parameter t must lie in (0, 1]")
    return hexagon_network(t * outer_radius / 2.0, outer_radius)


def hexagon_valley_competitor(rho: float, dt: float, outer_radius: float = 2.0) -> PolygonalPartition:
    """All six junctions slid radially by dt: the neighbouring family member."""
    q = hexagon_network(rho + dt, outer_radius)
    return _network(q, q.vertices, q.segments)


# -------------------------------------------------------------------- probe

@dataclass
class ProbeReport:
    n_trials: int
    min_delta_E: float
    records: list
    violations: list
    rejections: int
    declared_amplitude_bound: float
    seed: int
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"status": "PASSED" if self.passed else "VIOLATION", "n_trials": self.n_trials,
                "min_delta_E": self.min_delta_E, "violations": self.violations,
                "rejections": self.rejections, "declared_amplitude_bound": self.declared_amplitude_bound,
                "seed": self.seed, "records": self.records, **self.extra}


def default_schedule(r_bar: float) -> list[float]:
    return [f * r_bar for f in (0.01, 0.02, 0.05, 0.1)]


def _trial(p, fld, spec, E0, arc_tol, identity_quad):
    try:
        q, rej = perturb_with_stats(p, spec)
    except RejectionBudgetExceeded as exc:
        return {"trial": spec.trial, "spec": spec.to_json(), "rejected": True, "message": str(exc),
                "rejections": spec.max_rejections + 1}
    dE = interface_energy(q, ordered=False) - E0
    l1 = max(l1_distance(q, p, arc_tol).values())
    rec = {"trial": spec.trial, "spec": spec.to_json(), "delta_E": dE, "l1": l1, "rejections": rej}
    if identity_quad is not None and fld is not None:
        rep = verify_energy_identity(q, fld, identity_quad)
        rec["identity_residual"] = rep.identity_residual
        rec["relative_energy"] = rep.relative_energy
        rec["bulk_term"] = rep.bulk_term
    return rec


def minimality_probe(p, fld=None, n_trials: int = 100, amplitude_schedule=None, seed: int = 0,
                     modes=None, refinement: int = 4, declared_amplitude_bound: float | None = None,
                     identity_quad=None, arc_tol: float = 1e-6, threads: int = 1) -> ProbeReport:
    """Generate same-trace competitors and record Delta E = E[q] - E[p] (physical
    lengths) and the largest per-phase L1 distance.  With ``identity_quad`` the
    energy identity residual is recorded as well.  Trials are independent and
    keyed by (seed, trial), so the report does not depend on ``threads``."""
    r_bar = fld.scales.r_bar if fld is not None else 1.0
    sched = list(amplitude_schedule) if amplitude_schedule is not None else default_schedule(r_bar)
    bound = declared_amplitude_bound if declared_amplitude_bound is not None else max(sched)
    modes = [m for m in (modes or applicable_modes(p)) if m in applicable_modes(p)]
    if not modes:
        raise ValueError("no applicable perturbation mode")
    E0 = interface_energy(p, ordered=False)
    specs = [PerturbationSpec(sched[(t // len(modes)) % len(sched)], modes[t % len(modes)], seed, refinement, t)
             for t in range(n_trials)]

    def run(spec):
        return _trial(p, fld, spec, E0, arc_tol, identity_quad)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(run, specs))
    else:
        records = [run(s) for s in specs]
    violations = [{"trial": r["trial"], "spec": r["spec"], "delta_E": r["delta_E"], "l1": r["l1"],
                   "within_declared_amplitude": r["spec"]["amplitude"] <= bound}
                  for r in records if "delta_E" in r and r["delta_E"] < -VIOLATION_TOL]
    rej_total = sum(r["rejections"] for r in records)
    dEs = [r["delta_E"] for r in records if "delta_E" in r]
    return ProbeReport(n_trials, min(dEs) if dEs else math.nan, records, violations, rej_total, bound, seed)
