"""Stationarity diagnostics: first variation along smooth fields, circle cuts
and the monotonicity ratio, Steiner forks, and point classification with
improving witness competitors (equal tensions)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import PolygonalPartition, adaptive_gl, same_trace
from .geometry import TWO_PI, PlanarNetwork, Segment, segment_distance

CIRCLE_TOL = 1e-9
ANGLE_TOL = 1e-6
GENERIC_TOL = 1e-9     # relative to r: a vertex this close to the circle is "on" it
FILL_POLYGON_SIDES = 256


class NonGenericRadius(ValueError):
    pass


class UnstableProbe(ValueError):
    pass


# ------------------------------------------------------------- test fields

@dataclass(frozen=True)
class BumpField:
    """eta(x) = (1 - s^2)^3 d for s = |x - c| / rho < 1, zero outside."""

    name: str
    center: tuple
    rho: float
    direction: tuple

    def value(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        s2 = np.sum((X - self.center) ** 2, axis=1) / self.rho ** 2
        phi = np.where(s2 < 1.0, (1.0 - s2) ** 3, 0.0)
        return phi[:, None] * np.asarray(self.direction, float)

    def jacobian(self, X) -> np.ndarray:
        """J[n, a, b] = d eta_a / d x_b."""
        X = np.atleast_2d(np.asarray(X, float))
        rel = X - self.center
        s2 = np.sum(rel ** 2, axis=1) / self.rho ** 2
        dphi = np.where(s2 < 1.0, -6.0 * (1.0 - s2) ** 2 / self.rho ** 2, 0.0)[:, None] * rel
        return np.asarray(self.direction, float)[None, :, None] * dphi[:, None, :]

    def breakpoints(self, a, b) -> list[float]:
        """Parameters in (0, 1) where a + s (b - a) crosses the support circle;
        the field is only C^2 there, so quadrature panels must end on them."""
        a, b = np.asarray(a, float), np.asarray(b, float)
        d, f = b - a, a - np.asarray(self.center, float)
        A, B, C = float(d @ d), float(f @ d), float(f @ f) - self.rho ** 2
        disc = B * B - A * C
        if A == 0.0 or disc <= 0.0:
            return []
        sq = math.sqrt(disc)
        return sorted(t for t in ((-B - sq) / A, (-B + sq) / A) if 0.0 < t < 1.0)

    def inside(self, domain, tol: float = 1e-12) -> bool:
        return float(np.linalg.norm(np.asarray(self.center) - domain.center)) + self.rho < domain.radius * (1 - tol)


_BUILTIN = {
    # name: (centre offset / R, rho / R, direction)
    "bump-x": ((0.0, 0.0), 0.8, (1.0, 0.0)),
    "bump-y": ((0.0, 0.0), 0.8, (0.0, 1.0)),
    "bump-diag": ((0.2, 0.1), 0.5, (math.sqrt(0.5), math.sqrt(0.5))),
    "bump-offset": ((-0.3, 0.2), 0.6, (0.6, -0.8)),
    "bump-small": ((0.1, -0.25), 0.3, (-2.0 / math.sqrt(5.0), 1.0 / math.sqrt(5.0))),
}
BUILTIN_FIELDS = tuple(_BUILTIN)


def builtin_field(name: str, domain) -> BumpField:
    if name not in _BUILTIN:
        raise ValueError(f"unknown builtin field {name!r}; choose from {', '.join(BUILTIN_FIELDS)}")
    off, rho, d = _BUILTIN[name]
    R = domain.radius
    return BumpField(name, tuple(domain.center + R * np.asarray(off)), rho * R, d)


def euler_lagrange_terms(p: PlanarNetwork, eta, tol: float = 1e-14) -> dict:
    """Quadrature and telescoped values of the first variation
    sum over ordered pairs of sigma_ij * integral over S_ij of t . (grad eta) t."""
    if hasattr(eta, "inside") and not eta.inside(p.domain):
        raise ValueError("test field support touches the domain boundary")
    quad, tele = [], []
    for k in range(len(p.segments)):
        a, b = p.seg_points(k)
        t = p.tangent(k)
        L = float(p.seg_arrays[2][k])
        sig = p.sigma_seg(k)

        def g(s, a=a, b=b, t=t):
            J = eta.jacobian(a + s[:, None] * (b - a))
            return np.einsum("a,nab,b->n", t, J, t)

        cuts = [0.0, *(eta.breakpoints(a, b) if hasattr(eta, "breakpoints") else []), 1.0]
        quad.append(2.0 * sig * L * math.fsum(adaptive_gl(g, s0, s1, tol) for s0, s1 in zip(cuts[:-1], cuts[1:])))
        ends = eta.value(np.stack([a, b]))
        tele.append(2.0 * sig * float(t @ (ends[1] - ends[0])))
    return {"quadrature": math.fsum(quad), "telescoped": math.fsum(tele)}


def euler_lagrange_residual(p: PlanarNetwork, eta) -> float:
    return abs(euler_lagrange_terms(p, eta)["quadrature"])


# ------------------------------------------------------------ circle cuts

@dataclass
class CircleCut:
    center: np.ndarray
    radius: float
    hits: list            # (point, alpha)
    length_in_ball: float
    segments_in_ball: list = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.length_in_ball / self.radius

    @property
    def cos_sum(self) -> float:
        return float(sum(math.cos(a) for _, a in self.hits))

    @property
    def identity_residual(self) -> float:
        return abs(self.ratio - self.cos_sum)

    def hit_angles(self) -> np.ndarray:
        return np.sort(np.array([math.atan2(*(y - self.center)[::-1]) % TWO_PI for y, _ in self.hits]))

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "radius": self.radius,
                "hits": [{"point": y.tolist(), "alpha": a} for y, a in self.hits],
                "length_in_ball": self.length_in_ball, "ratio": self.ratio, "cos_sum": self.cos_sum,
                "identity_residual": self.identity_residual}


def _ball_inside(p, x, r):
    if not r > 0:
        raise ValueError("radius must be positive")
    if float(np.linalg.norm(x - p.domain.center)) + r >= p.domain.radius:
        raise ValueError("ball is not inside the domain")


def circle_cut(p: PlanarNetwork, x, r: float) -> CircleCut:
    x = np.asarray(x, float)
    _ball_inside(p, x, r)
    dv = np.linalg.norm(p.vertices - x, axis=1)
    near = np.nonzero(np.abs(dv - r) <= GENERIC_TOL * r)[0]
    if len(near):
        raise NonGenericRadius(f"vertex {int(near[0])} lies on the circle of radius {r}")
    hits, total, inside = [], [], []
    for k in range(len(p.segments)):
        a, b = p.seg_points(k)
        d = b - a
        L = float(np.linalg.norm(d))
        t_hat = d / L
        f = a - x
        B = float(f @ t_hat)
        C = float(f @ f) - r * r
        disc = B * B - C
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        s0, s1 = -B - sq, -B + sq
        lo, hi = max(s0, 0.0), min(s1, L)
        if hi > lo:
            total.append(hi - lo)
            inside.append((k, lo / L, hi / L))
        for s in (s0, s1):
            if 0.0 < s < L:
                y = a + s * t_hat
                c = abs(float(t_hat @ (y - x))) / r
                hits.append((y, math.acos(min(1.0, c))))
    hits.sort(key=lambda h: math.atan2(*(h[0] - x)[::-1]) % TWO_PI)
    return CircleCut(x, float(r), hits, math.fsum(total), inside)


@dataclass
class MonotonicityProfile:
    center: np.ndarray
    profile: list             # (r, ratio)
    violations: list

    @property
    def nondecreasing(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"center": self.center.tolist(), "profile": [{"r": r, "ratio": q} for r, q in self.profile],
                "nondecreasing": self.nondecreasing, "violations": self.violations}


def monotonicity_profile(p: PlanarNetwork, x, r_list, tol: float = CIRCLE_TOL) -> MonotonicityProfile:
    x = np.asarray(x, float)
    prof = [(float(r), circle_cut(p, x, r).ratio) for r in sorted(r_list)]
    viol = [{"r0": r0, "r1": r1, "ratio0": q0, "ratio1": q1}
            for (r0, q0), (r1, q1) in zip(prof[:-1], prof[1:]) if q1 < q0 - tol]
    return MonotonicityProfile(x, prof, viol)


# ------------------------------------------------------------------ forks

def fork_length(alpha: float) -> float:
    """Length of the 120-degree tree joining the centre to two unit-circle
    points at angular distance alpha, in units of the radius."""
    if not 0.0 < alpha <= 2.0 * math.pi / 3.0 + 1e-15:
        raise ValueError("fork angle must lie in (0, 2*pi/3]")
    return 2.0 * math.sin(alpha / 2.0 + math.pi / 6.0)


@dataclass
class ForkCompetitor:
    x: np.ndarray
    r: float
    a: np.ndarray
    b: np.ndarray
    branch: np.ndarray
    alpha: float

    @property
    def segments(self):
        return [(self.x, self.branch), (self.branch, self.a), (self.branch, self.b)]

    @property
    def total_length(self) -> float:
        return math.fsum(float(np.linalg.norm(q - p)) for p, q in self.segments)

    def angles_at_branch(self) -> list[float]:
        if np.linalg.norm(self.branch - self.x) < 1e-14 * self.r:
            u = [self.a - self.x, self.b - self.x, -(self.a - self.x) - (self.b - self.x)]
        else:
            u = [self.x - self.branch, self.a - self.branch, self.b - self.branch]
        u = [v / np.linalg.norm(v) for v in u]
        return [math.acos(max(-1.0, min(1.0, float(u[i] @ u[j])))) for i, j in ((0, 1), (1, 2), (0, 2))]

    def to_json(self) -> dict:
        return {"x": self.x.tolist(), "r": self.r, "a": self.a.tolist(), "b": self.b.tolist(),
                "branch": self.branch.tolist(), "alpha": self.alpha, "total_length": self.total_length}


def build_fork(x, r: float, a, b) -> ForkCompetitor:
    x, a, b = (np.asarray(v, float) for v in (x, a, b))
    ua, ub = a - x, b - x
    if abs(np.linalg.norm(ua) - r) > 1e-9 * r or abs(np.linalg.norm(ub) - r) > 1e-9 * r:
        raise ValueError("fork endpoints must lie on the circle")
    alpha = math.acos(max(-1.0, min(1.0, float(ua @ ub) / (r * r))))
    fork_length(alpha)
    m = ua + ub
    m = m / np.linalg.norm(m)
    d = r * (math.cos(alpha / 2.0) - math.sin(alpha / 2.0) / math.sqrt(3.0))
    return ForkCompetitor(x, float(r), a, b, x + max(d, 0.0) * m, alpha)


# ----------------------------------------------------------- ball surgery

def _cut_outside(p: PlanarNetwork, inside_param):
    """Vertices and segments of p with the parts inside a convex set removed.
    ``inside_param(a, b)`` returns the parameter interval (t0, t1) of the
    segment lying inside, or None."""
    verts = [v for v in p.vertices]
    segs, cuts = [], []
    for k, s in enumerate(p.segments):
        a, b = p.seg_points(k)
        iv = inside_param(a, b)
        if iv is None:
            segs.append(s)
            continue
        t0, t1 = iv
        if t0 > 0.0:
            verts.append(a + t0 * (b - a))
            segs.append(Segment(s.a, len(verts) - 1, s.left, s.right))
            cuts.append((len(verts) - 1, k, -1))   # segment leaves outward towards a
        if t1 < 1.0:
            verts.append(a + t1 * (b - a))
            segs.append(Segment(len(verts) - 1, s.b, s.left, s.right))
            cuts.append((len(verts) - 1, k, +1))   # outward towards b
    return verts, segs, cuts


def _compact(dom, ten, verts, segs, cls=PolygonalPartition):
    used = sorted({v for s in segs for v in (s.a, s.b)})
    remap = {v: i for i, v in enumerate(used)}
    return cls(dom, ten, [verts[v] for v in used],
               [Segment(remap[s.a], remap[s.b], s.left, s.right) for s in segs])


def regular_polygon(x, r: float, n: int = FILL_POLYGON_SIDES) -> np.ndarray:
    th = TWO_PI * np.arange(n) / n
    return np.asarray(x, float) + r * np.stack([np.cos(th), np.sin(th)], axis=1)


def _clip_convex(poly):
    """Cyrus-Beck: parameter interval of segment a-b inside the CCW polygon."""
    n = len(poly)
    E = np.roll(poly, -1, axis=0) - poly
    Nout = np.stack([E[:, 1], -E[:, 0]], axis=1)

    def f(a, b):
        d = b - a
        t0, t1 = 0.0, 1.0
        for k in range(n):
            num = float(Nout[k] @ (a - poly[k]))
            den = float(Nout[k] @ d)
            if abs(den) < 1e-300:
                if num > 0:
                    return None
                continue
            t = -num / den
            if den < 0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
            if t0 >= t1:
                return None
        return (t0, t1)

    return f


def fill_ball_competitor(q: PlanarNetwork, x, r: float, m: int,
                         sides: int = FILL_POLYGON_SIDES) -> PolygonalPartition:
    """Replace q inside the inscribed regular polygon of B_r(x) by phase m."""
    x = np.asarray(x, float)
    _ball_inside(q, x, r)
    if not 1 <= m <= q.P:
        raise ValueError(f"phase {m} outside 1..{q.P}")
    poly = regular_polygon(x, r, sides)
    clip = _clip_convex(poly)
    touched = [k for k in range(len(q.segments)) if clip(*q.seg_points(k)) is not None]
    present = {ph for k in touched for ph in q.segments[k].phases()}
    if not touched:
        present = {int(q.locate(x[None])[0])}
    if m not in present:
        raise ValueError(f"phase {m} does not meet the ball")
    if not touched:
        return PolygonalPartition(q.domain, q.tensions, q.vertices, q.segments)
    verts, segs, cuts = _cut_outside(q, clip)
    # boundary nodes: polygon corners plus cut points, ordered counterclockwise
    nodes = []
    for j in range(sides):
        verts.append(poly[j])
        nodes.append((TWO_PI * j / sides, len(verts) - 1, None))
    for v, k, sgn in cuts:
        ang = math.atan2(*(verts[v] - x)[::-1]) % TWO_PI
        s = q.segments[k]
        # outward piece direction is +tangent for sgn=+1; the CCW side is its left
        after = s.left if sgn > 0 else s.right
        nodes.append((ang, v, after))
    nodes.sort(key=lambda t: (t[0], t[2] is None))
    merged = []
    for ang, v, after in nodes:
        # a cut point on a polygon corner replaces the corner
        if merged and abs(ang - merged[-1][0]) < 1e-10 and (merged[-1][2] is None or after is None):
            if after is not None:
                merged[-1] = (ang, v, after)
        else:
            merged.append((ang, v, after))
    if len(merged) > 1 and abs(merged[-1][0] - TWO_PI - merged[0][0]) < 1e-10:
        if merged[0][2] is None:
            merged.pop(0)
        elif merged[-1][2] is None:
            merged.pop()
    first_cut = next((i for i, t in enumerate(merged) if t[2] is not None), None)
    if first_cut is None:
        phase = int(q.locate((x + 1.0000001 * (poly[0] - x))[None])[0])
        labels = [phase] * len(merged)
    else:
        labels = [None] * len(merged)
        cur = None
        n = len(merged)
        for step in range(n):
            i = (first_cut + step) % n
            if merged[i][2] is not None:
                cur = merged[i][2]
            labels[i] = cur
    n = len(merged)
    for i in range(n):
        outside = labels[i]
        if outside != m and outside:
            segs.append(Segment(merged[i][1], merged[(i + 1) % n][1], m, outside))
    return _compact(q.domain, q.tensions, verts, segs)


def in_ball_length(q: PlanarNetwork, x, r: float) -> float:
    """Length of the network inside the closed ball (no genericity needed)."""
    x = np.asarray(x, float)
    tot = []
    for k in range(len(q.segments)):
        a, b = q.seg_points(k)
        d = b - a
        L = float(np.linalg.norm(d))
        if L == 0.0:
            continue
        f = a - x
        B = float(f @ d) / L
        C = float(f @ f) - r * r
        disc = B * B - C
        if disc <= 0:
            continue
        sq = math.sqrt(disc)
        lo, hi = max(-B - sq, 0.0), min(-B + sq, L)
        if hi > lo:
            tot.append(hi - lo)
    return math.fsum(tot)


# --------------------------------------------------------- classification

@dataclass
class Classification:
    label: str
    point: np.ndarray
    r: float
    hit_angles: list
    witness: PolygonalPartition | None = None
    witness_kind: str | None = None
    gain: float = 0.0                 # from the constructed tree: replaced radii minus new tree
    competitor_gain: float = 0.0      # measured in-ball interface length difference
    quadratic_constant: float | None = None
    fork: ForkCompetitor | None = None

    def to_json(self) -> dict:
        out = {"label": self.label, "point": self.point.tolist(), "r": self.r,
               "hit_angles": list(self.hit_angles),
               "note": "consistent with stationarity" if self.label in ("INTERIOR_SEGMENT", "TRIPLE_120", "EMPTY")
               else "refuted by an improving competitor"}
        if self.witness is not None:
            out.update({"witness_kind": self.witness_kind, "gain": self.gain,
                        "competitor_gain": self.competitor_gain, "witness": self.witness.to_json()})
            if self.quadratic_constant is not None:
                out["quadratic_constant"] = self.quadratic_constant
            if self.fork is not None:
                out["fork"] = self.fork.to_json()
        return out


def _circ(a, b):
    return (b - a) % TWO_PI


def _witness(p, x, r, hits_pts, angles, kind, i):
    """Surgery inside B_r(x): remove the network in the ball and join the hit
    points by a chord (kind 'chord') or a fork on hits i, i+1 plus radii."""
    n = len(angles)
    clip_ball = _ball_clipper(x, r)
    verts, segs, cuts = _cut_outside(p, clip_ball)
    vid = {}
    for v, _, _ in cuts:
        ang = math.atan2(*(verts[v] - x)[::-1]) % TWO_PI
        k = int(np.argmin([abs((ang - a + math.pi) % TWO_PI - math.pi) for a in angles]))
        vid[k] = v
    mids = [angles[k] + 0.5 * _circ(angles[k], angles[(k + 1) % n]) for k in range(n)]
    arc_phase = [int(p.locate((x + r * np.array([math.cos(t), math.sin(t)]))[None])[0]) for t in mids]
    A = lambda k: arc_phase[k % n]
    new = []
    fork = None
    if kind == "chord":
        j = (i + 1) % n
        new.append(Segment(vid[i], vid[j], A(j), A(i)))
    else:
        j = (i + 1) % n
        fork = build_fork(x, r, verts[vid[i]], verts[vid[j]])
        verts.append(x.copy())
        cx = len(verts) - 1
        verts.append(fork.branch)
        bx = len(verts) - 1
        new.append(Segment(bx, vid[i], A(i), A(i - 1)))
        new.append(Segment(bx, vid[j], A(j), A(i)))
        if A(i + 1) != A(i - 1):
            new.append(Segment(cx, bx, A(i + 1), A(i - 1)))
        for k in range(n):
            if k in (i, j):
                continue
            if A(k) != A(k - 1):
                new.append(Segment(cx, vid[k], A(k), A(k - 1)))
    segs = segs + [s for s in new if s.left != s.right]
    q = _compact(p.domain, p.tensions, verts, segs)
    return q, fork


def _ball_clipper(x, r):
    def f(a, b):
        d = b - a
        L2 = float(d @ d)
        fa = a - x
        B = float(fa @ d) / L2
        C = (float(fa @ fa) - r * r) / L2
        disc = B * B - C
        if disc <= 0:
            return None
        sq = math.sqrt(disc)
        t0, t1 = max(-B - sq, 0.0), min(-B + sq, 1.0)
        return (t0, t1) if t1 > t0 else None
    return f


def classify_point(p: PlanarNetwork, x, r_probe: float, angle_tol: float = ANGLE_TOL) -> Classification:
    x = np.asarray(x, float)
    cut = circle_cut(p, x, r_probe)
    half = circle_cut(p, x, r_probe / 2.0)
    if len(cut.hits) != len(half.hits):
        raise UnstableProbe(f"hit count changes between r={r_probe} ({len(cut.hits)}) and r/2 ({len(half.hits)})")
    ang = list(cut.hit_angles())
    n = len(ang)
    if n == 0:
        return Classification("EMPTY", x, r_probe, [])
    A, B, _ = p.seg_arrays
    dmin = min(float(segment_distance(x[None], A[k], B[k])[0][0]) for k in range(len(A)))
    if dmin > 1e-9 * r_probe:
        raise ValueError("probe point must lie on the network (or away from it)")
    gaps = [_circ(ang[k], ang[(k + 1) % n]) for k in range(n)]
    if n == 2 and abs(gaps[0] - math.pi) <= angle_tol:
        return Classification("INTERIOR_SEGMENT", x, r_probe, ang)
    if n == 3 and all(abs(g - TWO_PI / 3.0) <= angle_tol for g in gaps):
        return Classification("TRIPLE_120", x, r_probe, ang)
    if n == 1:
        return Classification("NON_STATIONARY", x, r_probe, ang)
    if n == 2:
        i = int(np.argmin(gaps))
        kind = "chord"
    else:
        i = int(np.argmin(gaps))
        kind = "fork"
    q, fork = _witness(p, x, r_probe, [h[0] for h in cut.hits], ang, kind, i)
    before = cut.length_in_ball
    after = in_ball_length(q, x, r_probe * (1 + 1e-12))
    if kind == "chord":
        chord = 2.0 * r_probe * math.sin(gaps[i] / 2.0)
        gain = 2.0 * r_probe - chord
        dev = math.pi - gaps[i]
        quad = gain / (dev * dev * r_probe) if dev > 0 else None
    else:
        gain = 2.0 * r_probe - fork.total_length
        quad = None
    if not same_trace(q, p) or q.validation_errors():
        raise RuntimeError("witness construction produced an invalid competitor")
    return Classification("NON_STATIONARY", x, r_probe, ang, q, kind, gain, before - after, quad, fork)


def probe_points(p: PlanarNetwork) -> list[np.ndarray]:
    """Interior vertices and segment midpoints."""
    pts = [p.vertices[v] for v in range(len(p.vertices)) if not p.is_boundary_vertex(v)]
    pts += [0.5 * (a + b) for a, b in (p.seg_points(k) for k in range(len(p.segments)))]
    return pts
