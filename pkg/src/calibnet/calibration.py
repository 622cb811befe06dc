"""Local paired calibration of a regular flat partition.

Auxiliary vectors per feature, wedge decomposition at junctions, cutoffs, the
assembled field xi = (xi_1, ..., xi_P) and a sampling verifier for the four
coercivity properties.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TWO_PI, segment_distance
from .partition import (FlatPartition, LocalizationScales, dumbbell_contains, find_localization_scales,
                        validate_flat_partition)
from .tensions import SimplexEmbedding, embed_simplex

PROCRUSTES_TOL = 1e-9
THETA_DMAX = 3.75   # sup |theta'| of the rescaled quintic smoothstep


class CalibrationError(ValueError):
    pass


# ----------------------------------------------------------------- profile

def theta(s):
    """1 on (-inf, 1/4], 0 on [3/4, inf), quintic smoothstep in between."""
    s = np.asarray(s, dtype=float)
    t = np.clip((s - 0.25) * 2.0, 0.0, 1.0)
    return 1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def dtheta(s):
    s = np.asarray(s, dtype=float)
    t = np.clip((s - 0.25) * 2.0, 0.0, 1.0)
    return -2.0 * 30.0 * t * t * (1.0 - t) ** 2


# ------------------------------------------------------------ aux vectors

def _check_phase(p, i):
    if not 1 <= i <= p.P:
        raise ValueError(f"phase {i} outside 1..{p.P}")


def aux_vector_segment(embedding: SimplexEmbedding | None, p: FlatPartition, i: int, c: int) -> np.ndarray:
    """(sigma_ik/2) n_lk + (sigma_il/2) n_kl for the segment's phases k, l."""
    _check_phase(p, i)
    s = p.segments[c]
    k, l = s.left, s.right
    n_kl = p.normal(c, k, l)
    return 0.5 * p.tensions(i, k) * (-n_kl) + 0.5 * p.tensions(i, l) * n_kl


def aux_vector_boundary(embedding, p: FlatPartition, i: int, b: int) -> np.ndarray:
    inc = p.incidence[b]
    if len(inc) != 1 or not p.is_boundary_vertex(b):
        raise ValueError(f"vertex {b} is not a boundary endpoint")
    return aux_vector_segment(embedding, p, i, inc[0])


@dataclass(frozen=True)
class JunctionFrame:
    phases: tuple            # (k, l, m), k is the translation anchor
    basis: np.ndarray        # (P-1, 2) orthonormal basis of E^p
    linear: np.ndarray       # (2, 2) linear isometry in basis coordinates
    offset: np.ndarray       # R^p(0) = image of q_k
    residual: float


def _junction_normal(p: FlatPartition, v: int, i: int, j: int) -> np.ndarray:
    for k in p.incidence[v]:
        if p.segments[k].phases() == frozenset((i, j)):
            return p.normal(k, i, j)
    raise ValueError(f"no segment between phases {i},{j} at vertex {v}")


def junction_frame(embedding: SimplexEmbedding, p: FlatPartition, v: int) -> JunctionFrame:
    inc = p.incidence[v]
    if len(inc) != 3 or p.is_boundary_vertex(v):
        raise ValueError(f"vertex {v} is not a triple junction")
    present = sorted({ph for k in inc for ph in p.segments[k].phases()})
    if len(present) != 3:
        raise CalibrationError(f"junction {v} does not carry three phases")
    k, l, m = present
    sig = p.tensions
    img = {}
    for a in (k, l, m):
        b, c = [x for x in (k, l, m) if x != a]
        img[a] = sig(a, b) / 3.0 * _junction_normal(p, v, a, b) + sig(a, c) / 3.0 * _junction_normal(p, v, a, c)
    q = embedding.points
    Q = q - q[k - 1]
    M = np.stack([Q[l - 1], Q[m - 1]], axis=1)
    basis, _ = np.linalg.qr(M)
    X = basis.T @ M
    Y = np.stack([img[l] - img[k], img[m] - img[k]], axis=1)
    U, _, Wt = np.linalg.svd(Y @ X.T)
    best = None
    for sgn in (1.0, -1.0):
        A = U @ np.diag([1.0, sgn]) @ Wt
        res = float(np.max(np.abs(A @ X - Y)))
        if best is None or res < best[1]:
            best = (A, res)
    A, res = best
    if res > PROCRUSTES_TOL:
        raise CalibrationError(f"junction {v}: no isometry matches the Herring data (residual {res:.3e})")
    return JunctionFrame((k, l, m), basis, A, img[k], res)


def aux_vector_junction(embedding: SimplexEmbedding, p: FlatPartition, i: int, junction: int,
                        frame: JunctionFrame | None = None) -> np.ndarray:
    """R^p pi^p q_i^p."""
    _check_phase(p, i)
    fr = frame or junction_frame(embedding, p, junction)
    k = fr.phases[0]
    qi = embedding.points[i - 1] - embedding.points[k - 1]
    return fr.offset + fr.linear @ (fr.basis.T @ qi)


@dataclass
class AuxiliaryVectors:
    seg: dict        # segment -> (P, 2)
    bnd: dict        # boundary vertex -> (P, 2)
    jun: dict        # junction vertex -> (P, 2)
    frames: dict     # junction vertex -> JunctionFrame
    calibration_residual: float = 0.0
    delta1: float = 0.0

    def max_norm(self) -> float:
        vals = [np.linalg.norm(a, axis=1).max() for d in (self.seg, self.bnd, self.jun) for a in d.values()]
        return float(max(vals, default=0.0))


def build_aux_vectors(p: FlatPartition, embedding: SimplexEmbedding | None = None) -> AuxiliaryVectors:
    emb = embedding or embed_simplex(p.tensions)
    f = p.features
    seg = {c: np.array([aux_vector_segment(emb, p, i, c) for i in p.phases]) for c in f.segments_C}
    bnd = {b: np.array([aux_vector_boundary(emb, p, i, b) for i in p.phases]) for b in f.boundary_B}
    frames = {v: junction_frame(emb, p, v) for v in f.junctions_P}
    jun = {v: np.array([aux_vector_junction(emb, p, i, v, frames[v]) for i in p.phases]) for v in f.junctions_P}
    aux = AuxiliaryVectors(seg, bnd, jun, frames)
    chk = verify_aux_vectors(aux, p)
    aux.calibration_residual = chk["calibration_residual"]
    aux.delta1 = chk["delta1"]
    return aux


def _feature_pairs(p: FlatPartition, aux: AuxiliaryVectors):
    """(vectors, present phases, normal(i, j) function) per feature."""
    f = p.features
    for c in f.segments_C:
        yield aux.seg[c], p.segments[c].phases(), (lambda i, j, c=c: p.normal(c, i, j))
    for b in f.boundary_B:
        c = p.incidence[b][0]
        yield aux.bnd[b], p.segments[c].phases(), (lambda i, j, c=c: p.normal(c, i, j))
    for v in f.junctions_P:
        yield aux.jun[v], f.presence[("p", v)], (lambda i, j, v=v: _junction_normal(p, v, i, j))


def verify_aux_vectors(aux: AuxiliaryVectors, p: FlatPartition) -> dict:
    res, d1 = 0.0, 0.0
    for vec, present, nrm in _feature_pairs(p, aux):
        for i in p.phases:
            for j in p.phases:
                if i >= j:
                    continue
                diff = vec[i - 1] - vec[j - 1]
                s = p.tensions(i, j)
                if i in present and j in present:
                    res = max(res, float(np.linalg.norm(diff - s * nrm(i, j))))
                else:
                    d1 = max(d1, float(np.linalg.norm(diff)) / s)
    if d1 >= 1.0:
        raise CalibrationError(f"auxiliary vectors are not short on absent pairs (delta1 = {d1:.6g})")
    return {"calibration_residual": res, "delta1": d1}


# ------------------------------------------------------------------ wedges

@dataclass(frozen=True)
class JunctionWedges:
    vertex: int
    segs: tuple        # incident segments, counterclockwise
    start: tuple       # wedge start angle per segment
    width: tuple       # wedge angular width per segment
    half: tuple        # (half-angle clockwise side, counterclockwise side) per segment

    def wedge_index(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.full(phi.shape, -1, dtype=int)
        for q in range(len(self.segs)):
            inside = ((phi - self.start[q]) % TWO_PI) < self.width[q]
            out[(out < 0) & inside] = q
        return out


def build_wedges(p: FlatPartition) -> dict[int, JunctionWedges]:
    out = {}
    for v in p.features.junctions_P:
        inc = p.incidence[v]
        ang = {k: math.atan2(*p.outgoing(v, k)[::-1]) % TWO_PI for k in inc}
        order = sorted(inc, key=lambda k: (ang[k], k))
        n = len(order)
        gaps = [(ang[order[(q + 1) % n]] - ang[order[q]]) % TWO_PI for q in range(n)]
        bis = [(ang[order[q]] + gaps[q] / 2) % TWO_PI for q in range(n)]
        start = tuple(bis[(q - 1) % n] for q in range(n))
        width = tuple((bis[q] - bis[(q - 1) % n]) % TWO_PI for q in range(n))
        half = tuple((gaps[(q - 1) % n] / 2, gaps[q] / 2) for q in range(n))
        out[v] = JunctionWedges(v, tuple(order), start, width, half)
    return out


def _slab_inside(p, scales, w: JunctionWedges, q: int, dp: float, n: int = 64) -> bool:
    """Closure of the slab {u in [r/4, 3r/4], |s| <= dp r} around wedge q's
    segment lies in the open set B_r(t_p) intersected with the open wedge."""
    r = scales.r_bar
    v = w.vertex
    c = w.segs[q]
    t = p.outgoing(v, c)
    nu = np.array([-t[1], t[0]])
    u = np.linspace(0.25, 0.75, n) * r
    s = np.linspace(-dp, dp, n) * r
    edges = np.vstack([
        np.stack([u, np.full(n, s[0])], 1), np.stack([u, np.full(n, s[-1])], 1),
        np.stack([np.full(n, u[0]), s], 1), np.stack([np.full(n, u[-1]), s], 1)])
    X = p.vertices[v] + edges[:, :1] * t + edges[:, 1:] * nu
    if np.any(np.linalg.norm(X - p.vertices[v], axis=1) >= r):
        return False
    phi = np.arctan2(X[:, 1] - p.vertices[v][1], X[:, 0] - p.vertices[v][0]) % TWO_PI
    off = (phi - w.start[q]) % TWO_PI
    return bool(np.all((off > 0) & (off < w.width[q])))


def compute_delta_prime(p: FlatPartition, scales: LocalizationScales, wedges: dict, safety: float = 0.9) -> float:
    if not wedges:
        return scales.delta
    per_junction = []
    for v, w in sorted(wedges.items()):
        best = scales.delta
        for q in range(len(w.segs)):
            if _slab_inside(p, scales, w, q, best):
                continue
            lo, hi = 0.0, best
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if _slab_inside(p, scales, w, q, mid):
                    lo = mid
                else:
                    hi = mid
            best = lo
        if best <= 0:
            raise CalibrationError(f"degenerate wedge at junction {v}")
        per_junction.append(best)
    return safety * min(per_junction)


def analytic_delta_prime(p: FlatPartition, scales: LocalizationScales, wedges: dict, safety: float = 0.9) -> float:
    """Closed form of the slab-in-wedge condition: dp < tan(beta)/4 with beta the
    smaller half-angle of the wedge, and dp^2 + 9/16 < 1 for the ball."""
    if not wedges:
        return scales.delta
    vals = [scales.delta, math.sqrt(7.0) / 4.0]
    for w in wedges.values():
        for a, b in w.half:
            vals.append(math.tan(min(a, b)) / 4.0)
    return safety * min(vals)


# ------------------------------------------------------------------- field

@dataclass
class CalibrationField:
    partition: FlatPartition
    scales: LocalizationScales
    delta_prime: float
    aux: AuxiliaryVectors
    wedges: dict
    fault: tuple | None = None   # (phase, vector) added inside the dumbbell; test double

    def __post_init__(self):
        p = self.partition
        self._segs = []
        for c in p.features.segments_C:
            a, b = p.seg_points(c)
            self._segs.append((c, a, b))

    @property
    def P(self) -> int:
        return self.partition.P

    def xi(self, X) -> np.ndarray:
        """All fields at points X: array of shape (N, P, 2)."""
        p = self.partition
        X = np.atleast_2d(np.asarray(X, dtype=float))
        N = len(X)
        out = np.zeros((N, p.P, 2))
        done = np.zeros(N, dtype=bool)
        r = self.scales.r_bar
        w_eta = self.delta_prime * r
        f = p.features
        for v in f.junctions_P:
            tp = p.vertices[v]
            rel = X - tp
            m = np.nonzero(np.hypot(rel[:, 0], rel[:, 1]) < r)[0]
            if not len(m):
                continue
            done[m] = True
            W = self.wedges[v]
            phi = np.arctan2(rel[m, 1], rel[m, 0]) % TWO_PI
            wid = W.wedge_index(phi)
            xp = self.aux.jun[v]
            for q, c in enumerate(W.segs):
                sel = m[wid == q]
                if not len(sel):
                    continue
                a, b = p.seg_points(c)
                dist, t = segment_distance(X[sel], a, b)
                L = p.seg_arrays[2][c]
                u = t * L if p.segments[c].a == v else (1.0 - t) * L
                eta = theta(dist / w_eta)
                lam = theta(u / r)
                out[sel] = eta[:, None, None] * (lam[:, None, None] * xp + (1.0 - lam)[:, None, None] * self.aux.seg[c])
        for bv in f.boundary_B:
            rel = X - p.vertices[bv]
            m = np.nonzero((np.hypot(rel[:, 0], rel[:, 1]) < r) & ~done)[0]
            if not len(m):
                continue
            done[m] = True
            c = p.incidence[bv][0]
            a, b = p.seg_points(c)
            dist, _ = segment_distance(X[m], a, b)
            out[m] = theta(dist / w_eta)[:, None, None] * self.aux.bnd[bv]
        tube = self.scales.delta * r
        for c, a, b in self._segs:
            idx = np.nonzero(~done)[0]
            dist, _ = segment_distance(X[idx], a, b)
            m = idx[dist < tube]
            if not len(m):
                continue
            done[m] = True
            out[m] = theta(dist[dist < tube] / w_eta)[:, None, None] * self.aux.seg[c]
        if self.fault is not None:
            i, vec = self.fault
            out[done, i - 1] += np.asarray(vec, dtype=float)
        return out

    def eval_xi(self, i: int, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(2)
        if self.partition.domain.dist_to_boundary(x)[0] < -1e-12 * self.partition.domain.radius:
            raise ValueError("point outside the closed domain")
        return self.xi(x[None])[0, i - 1]

    def divergence(self, X, h: float | None = None) -> np.ndarray:
        """Central finite-difference divergence of every xi_i at X: (N, P)."""
        h = 1e-5 * self.scales.r_bar if h is None else h
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ex = np.array([h, 0.0])
        ey = np.array([0.0, h])
        dx = self.xi(X + ex)[..., 0] - self.xi(X - ex)[..., 0]
        dy = self.xi(X + ey)[..., 1] - self.xi(X - ey)[..., 1]
        return (dx + dy) / (2.0 * h)

    def support_mask(self, X) -> np.ndarray:
        return dumbbell_contains(self.partition, self.scales, "network", X)

    def lipschitz_bound(self) -> float:
        m = self.aux.max_norm()
        r = self.scales.r_bar
        dp = self.delta_prime
        return m * (THETA_DMAX / (dp * r) + THETA_DMAX / r) + THETA_DMAX * m / (dp * r)

    def delta1_field(self) -> float:
        """A constant delta_1 < 1 bounding |xi_i - xi_j| / sigma_ij outside the
        half-scale interface dumbbells, derived from the construction."""
        d1 = self.aux.delta1
        vals = [d1]
        f = self.partition.features
        if f.segments_C:
            vals.append(float(theta(self.scales.delta / (2.0 * self.delta_prime))))
        if f.junctions_P:
            u = math.sqrt(max(0.0, 0.25 - (0.75 * self.delta_prime) ** 2))
            lam = float(theta(u))
            vals.append(lam + (1.0 - lam) * d1)
        return max(vals)

    def to_json(self) -> dict:
        p = self.partition
        return {
            "partition": p.to_json(),
            "scales": self.scales.to_json(),
            "delta_prime": self.delta_prime,
            "aux": {
                "segments": {str(c): v.tolist() for c, v in sorted(self.aux.seg.items())},
                "boundary": {str(b): v.tolist() for b, v in sorted(self.aux.bnd.items())},
                "junctions": {str(j): v.tolist() for j, v in sorted(self.aux.jun.items())},
                "delta1": self.aux.delta1,
                "calibration_residual": self.aux.calibration_residual,
            },
            "wedges": {str(v): {"segments": list(w.segs), "start": list(w.start), "width": list(w.width)}
                       for v, w in sorted(self.wedges.items())},
            "profile": "quintic smoothstep on [1/4, 3/4]",
            "fault": None if self.fault is None else {"phase": self.fault[0], "vector": list(map(float, self.fault[1]))},
        }

    @classmethod
    def from_json(cls, obj) -> "CalibrationField":
        p = FlatPartition.from_json(obj["partition"])
        scales = LocalizationScales(float(obj["scales"]["r_bar"]), float(obj["scales"]["delta"]))
        fault = obj.get("fault")
        fld = build_calibration(p, scales, delta_prime=float(obj["delta_prime"]),
                                fault=None if not fault else (int(fault["phase"]), np.asarray(fault["vector"], float)))
        stored = obj.get("aux", {})
        for key, table in (("segments", fld.aux.seg), ("boundary", fld.aux.bnd), ("junctions", fld.aux.jun)):
            for k, vec in stored.get(key, {}).items():
                if int(k) not in table:
                    raise CalibrationError(f"stored {key} vector for unknown feature {k}")
                table[int(k)] = np.asarray(vec, dtype=float)
        return fld


def build_calibration(p: FlatPartition, scales: LocalizationScales | None = None,
                      delta_prime: float | None = None, fault=None, check: bool = True) -> CalibrationField:
    if check:
        rep = validate_flat_partition(p)
        if not rep.valid:
            msg = "; ".join(f"{v.clause}: {v.entity}: {v.message}" for v in rep.violations)
            raise CalibrationError(f"partition is not a regular flat partition: {msg}")
    scales = scales or find_localization_scales(p)
    aux = build_aux_vectors(p)
    wedges = build_wedges(p)
    dp = compute_delta_prime(p, scales, wedges) if delta_prime is None else delta_prime
    if not 0 < dp <= scales.delta:
        raise CalibrationError(f"delta_prime {dp} outside (0, delta]")
    return CalibrationField(p, scales, dp, aux, wedges, fault)


# ------------------------------------------------------------ verification

@dataclass
class SamplingConfig:
    grid_h: float | None = None        # default delta' r / 10
    fd_h: float | None = None          # default 1e-5 r
    kappas: tuple = (0.2, 0.1, 0.05)
    n_outside: int = 10_000
    n_interface: int = 400             # points per segment
    tol: float = 1e-9
    flux_factor: float = 10.0
    seed: int = 0


@dataclass
class CalibrationReport:
    passed: bool
    properties: dict
    failures: list = field(default_factory=list)
    sampling: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"status": "PASSED" if self.passed else "FAILED", "properties": self.properties,
                "failures": self.failures, "sampling": self.sampling}


def _lattice(dom, h):
    n = int(math.ceil(2 * dom.radius / h))
    g = dom.center[0] - dom.radius + h * np.arange(n + 1)
    gy = dom.center[1] - dom.radius + h * np.arange(n + 1)
    XX, YY = np.meshgrid(g, gy, indexing="xy")
    X = np.stack([XX.ravel(), YY.ravel()], axis=1)
    return X[dom.dist_to_boundary(X) >= 0]


def _interface_samples(p: FlatPartition, n: int):
    t = (np.arange(n) + 0.5) / n
    out = []
    for c in p.features.segments_C:
        a, b = p.seg_points(c)
        out.append((c, a + t[:, None] * (b - a)))
    return out


def verify_calibration(fld: CalibrationField, sampling: SamplingConfig | None = None) -> CalibrationReport:
    cfg = sampling or SamplingConfig()
    p = fld.partition
    dom = p.domain
    r = fld.scales.r_bar
    h = cfg.grid_h or fld.delta_prime * r / 10.0
    fd_h = cfg.fd_h or 1e-5 * r
    flux_tol = cfg.flux_factor * fd_h
    tol = cfg.tol
    sig = p.tensions
    failures = []
    props = {}

    lat = _lattice(dom, h)
    in_u = fld.support_mask(lat)
    G = lat[in_u]
    rng = np.random.default_rng(cfg.seed)
    th = rng.uniform(0, TWO_PI, cfg.n_outside)
    rr = dom.radius * np.sqrt(rng.uniform(0, 1, cfg.n_outside))
    U = dom.center + np.stack([rr * np.cos(th), rr * np.sin(th)], axis=1)
    U_out = U[~fld.support_mask(U)]
    L_out = lat[~in_u]

    # (i) locality
    worst_i = 0.0
    for S in (U_out, L_out):
        if len(S):
            vals = np.linalg.norm(fld.xi(S), axis=2).max(axis=1)
            k = int(np.argmax(vals))
            if vals[k] > worst_i:
                worst_i = float(vals[k])
                if vals[k] > 0:
                    failures.append({"property": "i", "point": S[k].tolist(), "value": float(vals[k])})
    props["i"] = {"max_norm_outside_support": worst_i, "n_uniform_outside": int(len(U_out)),
                  "n_lattice_outside": int(len(L_out)), "passed": worst_i == 0.0}

    # (ii) length
    XI = fld.xi(G)
    samples = _interface_samples(p, cfg.n_interface)
    ident = 0.0
    ident_pt = None
    for c, S in samples:
        s = p.segments[c]
        v = fld.xi(S)
        d = v[:, s.left - 1] - v[:, s.right - 1] - sig(s.left, s.right) * p.normal(c, s.left, s.right)
        e = np.linalg.norm(d, axis=1)
        if e.max() > ident:
            ident = float(e.max())
            ident_pt = S[int(np.argmax(e))]
    S_all = np.vstack([S for _, S in samples]) if samples else np.zeros((0, 2))
    XI_S = fld.xi(S_all)
    glob = 0.0
    glob_pt = None
    out_sup = 0.0
    out_pt = None
    per_pair = {}
    d1f = fld.delta1_field()
    for i in p.phases:
        for j in p.phases:
            if j <= i:
                continue
            s = sig(i, j)
            ratio = np.linalg.norm(XI[:, i - 1] - XI[:, j - 1], axis=1) / s
            ratio_s = np.linalg.norm(XI_S[:, i - 1] - XI_S[:, j - 1], axis=1) / s
            m = max(ratio.max(initial=0.0), ratio_s.max(initial=0.0))
            if m > glob:
                glob = float(m)
                glob_pt = (G[int(np.argmax(ratio))] if ratio.max(initial=0) >= ratio_s.max(initial=0)
                           else S_all[int(np.argmax(ratio_s))])
            nonempty = any(p.segments[c].phases() == frozenset((i, j)) for c in p.features.segments_C)
            if nonempty:
                outside = ~dumbbell_contains(p, fld.scales, ("interface", i, j), G, r=r / 2)
            else:
                outside = np.ones(len(G), dtype=bool)
            sup = float(ratio[outside].max(initial=0.0))
            per_pair[f"{i},{j}"] = sup
            if sup > out_sup:
                out_sup = sup
                out_pt = G[outside][int(np.argmax(ratio[outside]))]
    ok_glob = glob <= 1.0 + tol
    ok_ident = ident <= tol
    ok_short = out_sup <= d1f + tol and d1f < 1.0
    if not ok_glob:
        failures.append({"property": "ii", "kind": "global bound", "point": glob_pt.tolist(), "value": glob})
    if not ok_ident:
        failures.append({"property": "ii", "kind": "interface identity", "point": ident_pt.tolist(), "value": ident})
    if not ok_short:
        failures.append({"property": "ii", "kind": "shortness", "point": None if out_pt is None else out_pt.tolist(),
                         "value": out_sup})
    props["ii"] = {"max_ratio": glob, "interface_identity_residual": ident,
                   "sup_ratio_outside_half_dumbbell": out_sup, "sup_by_pair": per_pair,
                   "delta1_aux": fld.aux.delta1, "delta1": d1f,
                   "passed": bool(ok_glob and ok_ident and ok_short)}

    # (iii) orientation
    d2 = {}
    ok3 = True
    seg_of_pair = {}
    for c in p.features.segments_C:
        seg_of_pair.setdefault(p.segments[c].phases(), []).append(c)
    for kappa in cfg.kappas:
        best = fld.scales.delta
        for pair, segs in sorted(seg_of_pair.items(), key=lambda kv: sorted(kv[0])):
            i, j = sorted(pair)
            s = sig(i, j)
            dists = np.stack([segment_distance(G, *p.seg_points(c))[0] for c in segs], axis=1)
            near = dists.min(axis=1) <= 2 * r
            which = np.array(segs)[np.argmin(dists, axis=1)]
            diff = (XI[:, i - 1] - XI[:, j - 1]) / s
            rat = np.linalg.norm(diff, axis=1)
            nrm = np.array([p.normal(c, i, j) for c in which]).reshape(-1, 2)
            err = np.linalg.norm(diff - nrm, axis=1)
            bad = near & (err > kappa)
            if np.any(bad):
                best = min(best, float(np.min(1.0 - rat[bad])))
        d2[str(kappa)] = best
        if not best > 0:
            ok3 = False
            failures.append({"property": "iii", "kappa": kappa, "delta2": best})
    props["iii"] = {"delta2": d2, "passed": ok3}

    # (iv) flux
    d3 = fld.delta_prime / 4.0
    strip_pts = _flux_strip_points(fld, h)
    max_div = math.inf
    per_pair4 = {}
    for _ in range(30):
        max_div = 0.0
        worst = None
        for (i, j), X in strip_pts(d3).items():
            if not len(X):
                continue
            dv = fld.divergence(X, fd_h)
            val = np.abs(dv[:, i - 1] - dv[:, j - 1])
            per_pair4[f"{i},{j}"] = float(val.max())
            if val.max() > max_div:
                max_div = float(val.max())
                worst = X[int(np.argmax(val))]
        if max_div <= flux_tol:
            break
        d3 *= 0.5
    ok4 = max_div <= flux_tol
    if not ok4:
        failures.append({"property": "iv", "point": None if worst is None else worst.tolist(), "value": max_div})
    props["iv"] = {"delta3": d3, "max_fd_divergence": max_div, "flux_tolerance": flux_tol,
                   "by_pair": per_pair4, "passed": ok4}

    passed = all(v["passed"] for v in props.values())
    return CalibrationReport(passed, props, failures,
                             {"grid_h": h, "fd_h": fd_h, "n_grid_in_support": int(len(G)),
                              "kappas": list(cfg.kappas), "n_outside": cfg.n_outside, "seed": cfg.seed})


def _flux_strip_points(fld: CalibrationField, h: float):
    """Sample points of {dist(., I_i) < d3 r} inside phase j, for every pair
    with a non-empty interface, as a function of d3."""
    p = fld.partition
    r = fld.scales.r_bar
    pairs = sorted({tuple(sorted(p.segments[c].phases())) for c in p.features.segments_C})

    def build(d3):
        w = d3 * r
        n_off = 6
        out = {}
        pts = []
        for c in p.features.segments_C:
            a, b = p.seg_points(c)
            L = p.seg_arrays[2][c]
            n_al = max(16, int(math.ceil(L / h)))
            t = (np.arange(n_al) + 0.5) / n_al
            off = np.linspace(-w, w, 2 * n_off + 1)[1:-1]
            nu = p.left_normal(c)
            base = a + t[:, None] * (b - a)
            pts.append((base[:, None, :] + off[None, :, None] * nu).reshape(-1, 2))
        for v in p.features.junctions_P:
            rad = np.linspace(0, w, n_off + 1)[1:]
            ang = np.linspace(0, TWO_PI, 48, endpoint=False)
            RR, AA = np.meshgrid(rad, ang)
            pts.append(p.vertices[v] + np.stack([RR.ravel() * np.cos(AA.ravel()), RR.ravel() * np.sin(AA.ravel())], 1))
        X = np.vstack(pts)
        X = X[p.domain.dist_to_boundary(X) > 0]
        lab = p.locate(X)
        for i, j in pairs:
            for a_, b_ in ((i, j), (j, i)):
                segs = [c for c in p.features.segments_C if a_ in p.segments[c].phases()]
                dist = np.min(np.stack([segment_distance(X, *p.seg_points(c))[0] for c in segs], 1), axis=1)
                out[(a_, b_)] = X[(dist < w) & (lab == b_)]
        return out

    return build
