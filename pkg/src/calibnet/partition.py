"""Regular flat partitions of a disc: validation, Herring residuals, feature
decomposition, localization scales and dumbbell neighbourhoods."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely

from .geometry import (DiscDomain, InvalidNetwork, PlanarNetwork, Segment, segment_distance,
                       segment_segment_distance)
from .tensions import NotAdmissible, SurfaceTensionMatrix, embed_simplex

HERRING_TOL = 1e-9


class NoAdmissibleScales(ValueError):
    pass


class FlatPartition(PlanarNetwork):
    """A network meant to be a regular flat partition (see validate_flat_partition)."""

    @cached_property
    def features(self) -> "FeatureDecomposition":
        return decompose_features(self)


@dataclass
class Violation:
    clause: str
    entity: str
    message: str

    def to_json(self):
        return {"clause": self.clause, "entity": self.entity, "message": self.message}


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    herring: dict[int, float] = field(default_factory=dict)
    face_area_error: float = 0.0

    @property
    def valid(self) -> bool:
        return not self.violations

    def add(self, clause, entity, message):
        self.violations.append(Violation(clause, entity, message))

    def clauses(self) -> set[str]:
        return {v.clause for v in self.violations}

    def to_json(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [v.to_json() for v in self.violations],
            "herring_residuals": {str(k): v for k, v in sorted(self.herring.items())},
            "face_area_relative_error": self.face_area_error,
            "herring_tolerance": HERRING_TOL,
        }


def _outgoing_sorted(p: PlanarNetwork, v: int):
    """Incident segments of v sorted counterclockwise by outgoing angle."""
    inc = p.incidence[v]
    return sorted(inc, key=lambda k: (math.atan2(*p.outgoing(v, k)[::-1]) % (2 * math.pi), k))


def _left_of_outgoing(p: PlanarNetwork, v: int, k: int) -> int:
    s = p.segments[k]
    return s.left if s.a == v else s.right


def _right_of_outgoing(p: PlanarNetwork, v: int, k: int) -> int:
    s = p.segments[k]
    return s.right if s.a == v else s.left


def herring_residual(p: PlanarNetwork, junction: int) -> float:
    """|sigma_ij n_ij + sigma_jk n_jk + sigma_ki n_ki| at an interior degree-3 vertex."""
    inc = p.incidence[junction]
    if len(inc) != 3 or p.is_boundary_vertex(junction):
        raise ValueError(f"vertex {junction} is not a triple junction")
    tot = np.zeros(2)
    for k in inc:
        tot += p.sigma_seg(k) * p.outgoing(junction, k)
    return float(np.hypot(*tot))


def validate_flat_partition(p: PlanarNetwork) -> ValidationReport:
    rep = ValidationReport()
    dom = p.domain
    R = dom.radius
    try:
        embed_simplex(p.tensions)
    except NotAdmissible as exc:
        rep.add("tensions", "sigma", str(exc))

    tol = 1e-9 * R
    d = dom.dist_to_boundary(p.vertices) if len(p.vertices) else np.zeros(0)
    for v in np.nonzero(d < -tol)[0]:
        rep.add("ii", f"vertex {v}", "vertex lies outside the domain")

    for k, s in enumerate(p.segments):
        if s.a == s.b or p.seg_arrays[2][k] <= tol:
            rep.add("ii", f"segment {k}", "degenerate segment of zero length")
        if s.left == s.right:
            rep.add("i", f"segment {k}", f"both sides carry phase {s.left}")
        for ph in (s.left, s.right):
            if not 1 <= ph <= p.P:
                rep.add("i", f"segment {k}", f"phase {ph} outside 1..{p.P}")
    if rep.violations:
        return rep

    for k, m in p.crossing_pairs(tol):
        rep.add("iii", f"segments {k},{m}", "segments intersect away from a shared endpoint")

    for v in range(len(p.vertices)):
        inc = p.incidence[v]
        if not inc:
            continue
        if p.is_boundary_vertex(v):
            if len(inc) != 1:
                rep.add("iv", f"vertex {v}", f"boundary vertex with {len(inc)} incident segments")
                continue
            dvec = p.outgoing(v, inc[0])
            inward = (dom.center - p.vertices[v]) / R
            if float(dvec @ inward) <= 1e-12:
                rep.add("iv", f"vertex {v}", "segment does not meet the boundary at an angle in (0, pi)")
            continue
        if len(inc) != 3:
            kind = "dangling interface end" if len(inc) == 1 else f"{len(inc)} segments meet"
            rep.add("iii", f"vertex {v}", f"interior vertex is not a triple junction ({kind})")
            continue
        order = _outgoing_sorted(p, v)
        phases = set()
        for q in range(3):
            k1, k2 = order[q], order[(q + 1) % 3]
            if _left_of_outgoing(p, v, k1) != _right_of_outgoing(p, v, k2):
                rep.add("i", f"vertex {v}", "phase labels around the junction are inconsistent")
            phases.add(_left_of_outgoing(p, v, k1))
        if len(phases) != 3:
            rep.add("iii", f"vertex {v}", "junction does not separate three distinct phases")
        res = herring_residual(p, v)
        rep.herring[v] = res
        if res > HERRING_TOL:
            rep.add("iii", f"vertex {v}", f"Herring residual {res:.6g} exceeds {HERRING_TOL:g}")
    if "iii" in rep.clauses() or "iv" in rep.clauses():
        return rep

    for msg in p.face_errors:
        rep.add("i", "faces", msg)
    areas = p.phase_areas()
    for i, a in areas.items():
        if a <= 0:
            rep.add("i", f"phase {i}", "phase is empty")
    tot = sum(f.area for f in p.faces)
    rep.face_area_error = abs(tot - dom.area) / dom.area
    if rep.face_area_error > 1e-9:
        rep.add("i", "faces", f"face areas do not tile the domain (relative error {rep.face_area_error:.3g})")
    return rep


# ------------------------------------------------------------------ features

@dataclass(frozen=True)
class FeatureDecomposition:
    segments_C: tuple[int, ...]
    junctions_P: tuple[int, ...]     # vertex ids
    boundary_B: tuple[int, ...]      # vertex ids
    seg_ends: dict                   # segment -> tuple of point-feature vertex ids
    point_segs: dict                 # vertex id -> tuple of incident segments
    presence: dict                   # ('c', k) / ('p', v) / ('b', v) -> frozenset of phases

    def to_json(self) -> dict:
        return {
            "segments": list(self.segments_C),
            "junctions": list(self.junctions_P),
            "boundary_endpoints": list(self.boundary_B),
            "incidence": {str(k): list(v) for k, v in sorted(self.seg_ends.items())},
            "presence": {f"{t}{i}": sorted(ph) for (t, i), ph in sorted(self.presence.items())},
        }


def decompose_features(p: PlanarNetwork) -> FeatureDecomposition:
    C = tuple(range(len(p.segments)))
    Pj, Bb = [], []
    for v in range(len(p.vertices)):
        inc = p.incidence[v]
        if not inc:
            continue
        if p.is_boundary_vertex(v):
            if len(inc) != 1:
                raise InvalidNetwork(f"boundary vertex {v} has {len(inc)} segments")
            Bb.append(v)
        else:
            if len(inc) != 3:
                raise InvalidNetwork(f"interior vertex {v} is not a triple junction")
            Pj.append(v)
    seg_ends = {k: tuple(sorted({p.segments[k].a, p.segments[k].b})) for k in C}
    point_segs = {v: tuple(sorted(p.incidence[v])) for v in Pj + Bb}
    presence = {}
    for k in C:
        presence[("c", k)] = p.segments[k].phases()
    for v in Pj + Bb:
        ph = set()
        for k in p.incidence[v]:
            ph |= p.segments[k].phases()
        presence[("p" if v in Pj else "b", v)] = frozenset(ph)
    return FeatureDecomposition(C, tuple(Pj), tuple(Bb), seg_ends, point_segs, presence)


# --------------------------------------------------------- localization scales

@dataclass(frozen=True)
class LocalizationScales:
    r_bar: float
    delta: float

    def to_json(self):
        return {"r_bar": self.r_bar, "delta": self.delta}


def _feature_distance_table(p: FlatPartition):
    """Named feature distances that must exceed 4 r_bar."""
    f = p.features
    dom = p.domain
    V = p.vertices
    out = []
    pts = list(f.junctions_P) + list(f.boundary_B)
    for a_i in range(len(f.junctions_P)):
        for b_i in range(a_i + 1, len(f.junctions_P)):
            u, w = f.junctions_P[a_i], f.junctions_P[b_i]
            out.append((f"junctions {u},{w}", float(np.linalg.norm(V[u] - V[w]))))
    for a_i in range(len(f.boundary_B)):
        for b_i in range(a_i + 1, len(f.boundary_B)):
            u, w = f.boundary_B[a_i], f.boundary_B[b_i]
            out.append((f"boundary endpoints {u},{w}", float(np.linalg.norm(V[u] - V[w]))))
    for u in f.junctions_P:
        out.append((f"junction {u} to boundary", float(dom.dist_to_boundary(V[u])[0])))
    for n in pts:
        for k in f.segments_C:
            if n in f.seg_ends[k]:
                continue
            a, b = p.seg_points(k)
            out.append((f"vertex {n} to segment {k}", float(segment_distance(V[n][None], a, b)[0][0])))
    bset = set(f.boundary_B)
    for k in f.segments_C:
        if not (set(f.seg_ends[k]) & bset):
            a, b = p.seg_points(k)
            out.append((f"segment {k} to boundary", float(dom.dist_to_boundary(np.array([a, b])).min())))
    jset = set(f.junctions_P)
    for k in f.segments_C:
        for m in f.segments_C:
            if m <= k:
                continue
            if set(f.seg_ends[k]) & set(f.seg_ends[m]) & jset:
                continue
            a, b = p.seg_points(k)
            c, d = p.seg_points(m)
            out.append((f"segments {k},{m}", segment_segment_distance(a, b, c, d)))
    return out


def _junction_pair_angles(p: FlatPartition):
    out = []
    for v in p.features.junctions_P:
        inc = p.incidence[v]
        for x in range(3):
            for y in range(x + 1, 3):
                d1, d2 = p.outgoing(v, inc[x]), p.outgoing(v, inc[y])
                gam = math.acos(max(-1.0, min(1.0, float(d1 @ d2))))
                out.append((v, inc[x], inc[y], gam))
    return out


def _erosion_check(p: FlatPartition, r_bar: float, arc_tol: float = 1e-6):
    """Each face minus the closed r_bar-neighbourhood of its boundary must be a
    single non-empty polygon (shapely negative buffer)."""
    bad = []
    for idx, f in enumerate(p.faces):
        poly = p.face_polygon(f, arc_tol)
        er = poly.buffer(-r_bar, quad_segs=32)
        if er.is_empty or not isinstance(er, shapely.Polygon):
            n = 0 if er.is_empty else len(getattr(er, "geoms", [er]))
            bad.append((idx, f.phase, n))
    return bad


def validate_scales(p: FlatPartition, s: LocalizationScales) -> list[Violation]:
    out = []
    r, dl = s.r_bar, s.delta
    if not (0 < r <= 1):
        out.append(Violation("range", "r_bar", f"r_bar={r} outside (0, 1]"))
    if not (0 < dl <= 0.5):
        out.append(Violation("range", "delta", f"delta={dl} outside (0, 1/2]"))
    for name, dist in _feature_distance_table(p):
        if not dist > 4 * r:
            clause = "ii" if name.startswith("segments") else "i"
            out.append(Violation(clause, name, f"distance {dist:.6g} is not larger than 4 r_bar = {4 * r:.6g}"))
    for v, k, m, gam in _junction_pair_angles(p):
        if not dl / math.sin(gam / 2) < 0.5:
            out.append(Violation("ii", f"junction {v} segments {k},{m}",
                                 "delta-tube intersection not compactly inside B_{r/2}"))
    for idx, ph, n in _erosion_check(p, r):
        out.append(Violation("iii", f"face {idx} (phase {ph})", f"eroded face has {n} components"))
    if not 2 * r < p.domain.radius:
        out.append(Violation("iv", "domain", "ball condition needs 2 r_bar < radius"))
    return out


def find_localization_scales(p: FlatPartition, safety: float = 0.9) -> LocalizationScales:
    table = _feature_distance_table(p)
    dmin = min([d for _, d in table], default=math.inf)
    r0 = min(dmin / 4.0, p.domain.radius / 2.0, 1.0)
    if not r0 > 0:
        raise NoAdmissibleScales("features touch: minimum feature distance is zero")
    delta = 0.5
    angles = _junction_pair_angles(p)
    for _ in range(200):
        if all(delta / math.sin(g / 2) < 0.5 for *_, g in angles):
            break
        delta *= 0.9
    else:
        raise NoAdmissibleScales("no delta satisfies the tube intersection clause")
    r = safety * r0
    if not _erosion_check(p, r):
        return LocalizationScales(r, delta)
    lo, hi = 0.0, r
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _erosion_check(p, mid):
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-12 * r:
            break
    if lo <= 0:
        raise NoAdmissibleScales("erosion connectivity fails at every resolved scale")
    return LocalizationScales(lo, delta)


def audit_scales(p: FlatPartition, s: LocalizationScales, n: int = 1000, seed: int = 0) -> list[Violation]:
    """Independent sampling check of clauses i, ii and iv (n points per feature)."""
    rng = np.random.default_rng(seed)
    f = p.features
    r, dl = s.r_bar, s.delta
    V = p.vertices
    out = []
    dom = p.domain

    def ball(center, rad):
        th = rng.uniform(0, 2 * np.pi, n)
        rr = rad * np.sqrt(rng.uniform(0, 1, n))
        return center + np.stack([rr * np.cos(th), rr * np.sin(th)], axis=1)

    def seg_samples(k):
        a, b = p.seg_points(k)
        t = (np.arange(n) + 0.5) / n
        return a + t[:, None] * (b - a)

    pts = list(f.junctions_P) + list(f.boundary_B)
    # (i) 2r-balls of point features vs other features: sample the ball of one and
    # measure distance to the other's core set, a hit within 2r means overlap
    for x in range(len(pts)):
        B = ball(V[pts[x]], 2 * r)
        for y in range(x + 1, len(pts)):
            same_kind = (pts[x] in f.junctions_P) == (pts[y] in f.junctions_P)
            if not same_kind:
                continue
            if np.any(np.linalg.norm(B - V[pts[y]], axis=1) < 2 * r):
                out.append(Violation("i", f"vertices {pts[x]},{pts[y]}", "2r-balls overlap (sampled)"))
        for k in f.segments_C:
            if pts[x] in f.seg_ends[k]:
                continue
            a, b = p.seg_points(k)
            if np.any(segment_distance(B, a, b)[0] < 2 * r):
                out.append(Violation("i", f"vertex {pts[x]} segment {k}", "2r-balls overlap (sampled)"))
    for v in f.junctions_P:
        B = ball(V[v], 2 * r)
        if np.any(dom.dist_to_boundary(B) <= 2 * r):
            out.append(Violation("i", f"junction {v}", "2r-ball reaches the 2r-collar of the boundary (sampled)"))
    bset = set(f.boundary_B)
    jset = set(f.junctions_P)
    for k in f.segments_C:
        S = seg_samples(k)
        if not (set(f.seg_ends[k]) & bset):
            if np.any(dom.dist_to_boundary(S) <= 4 * r):
                out.append(Violation("i", f"segment {k}", "tube reaches the boundary collar (sampled)"))
        for m in f.segments_C:
            if m <= k:
                continue
            shared = set(f.seg_ends[k]) & set(f.seg_ends[m]) & jset
            c, d = p.seg_points(m)
            dist = segment_distance(S, c, d)[0]
            if not shared:
                if np.any(dist <= 4 * r):
                    out.append(Violation("ii", f"segments {k},{m}", "2r-tubes intersect without a shared junction"))
            else:
                t = V[shared.pop()]
                a, b = p.seg_points(k)
                # points of the delta-tube around k that are also in the delta-tube around m
                off = (np.arange(n) / n * 2 - 1)[:, None] * dl * r * p.left_normal(k)
                lift = np.vstack([S + off, ball(t, dl * r)])
                both = (segment_distance(lift, a, b)[0] < dl * r) & (segment_distance(lift, c, d)[0] < dl * r)
                if np.any(np.linalg.norm(lift[both] - t, axis=1) >= 0.5 * r):
                    out.append(Violation("ii", f"segments {k},{m}", "delta-tube intersection leaves B_{r/2} (sampled)"))
    if not 2 * r < dom.radius:
        out.append(Violation("iv", "domain", "ball condition needs 2 r_bar < radius"))
    return out


# ----------------------------------------------------------- dumbbells

def _target_features(p: FlatPartition, target):
    f = p.features
    if target in ("network", None):
        return list(f.segments_C), list(f.junctions_P) + list(f.boundary_B)
    if isinstance(target, tuple) and target[0] == "interface":
        _, i, j = target
        segs = [k for k in f.segments_C if p.segments[k].phases() == frozenset((i, j))]
        if not segs:
            raise ValueError(f"interface I_{{{i},{j}}} is empty")
        pts = sorted({v for k in segs for v in f.seg_ends[k]})
        return segs, pts
    if isinstance(target, tuple) and target[0] == "phase":
        _, i = target
        segs = [k for k in f.segments_C if i in p.segments[k].phases()]
        pts = sorted({v for k in segs for v in f.seg_ends[k]})
        return segs, pts
    raise ValueError(f"unknown dumbbell target {target!r}")


def dumbbell_contains(p: FlatPartition, scales: LocalizationScales, target, X,
                      r: float | None = None, delta: float | None = None) -> np.ndarray:
    """Membership of points X in U^target_(r, delta): union over segments of
    (delta r)-tubes minus r-balls of the target's point features, united with
    those balls.  Targets: 'network', ('interface', i, j), ('phase', i)."""
    r = scales.r_bar if r is None else r
    delta = scales.delta if delta is None else delta
    X = np.atleast_2d(np.asarray(X, dtype=float))
    segs, pts = _target_features(p, target)
    in_balls = np.zeros(len(X), dtype=bool)
    for v in pts:
        in_balls |= np.linalg.norm(X - p.vertices[v], axis=1) < r
    in_tubes = np.zeros(len(X), dtype=bool)
    for k in segs:
        a, b = p.seg_points(k)
        in_tubes |= segment_distance(X, a, b)[0] < delta * r
    return (in_tubes & ~in_balls) | in_balls
