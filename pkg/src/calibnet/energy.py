"""Interface energy, relative energy and the relative energy identity for
polygonal competitors against a calibrated flat reference.

Sums over phase pairs use the ordered convention: every interface between
phases i and j is counted once as (i, j) and once as (j, i).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely

from .geometry import TWO_PI, PlanarNetwork

GL_ORDER = 8
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class InvalidCompetitor(ValueError):
    pass


class PolygonalPartition(PlanarNetwork):
    """Partition of a disc by finitely many straight segments; vertices of any
    degree, faces (with boundary arcs) derived from the segment labels."""

    def validation_errors(self, tol: float = 1e-12) -> list[str]:
        errs = []
        R = self.domain.radius
        d = self.domain.dist_to_boundary(self.vertices)
        for v in np.nonzero(d < -1e-9 * R)[0]:
            errs.append(f"vertex {v} lies outside the domain")
        for k, s in enumerate(self.segments):
            if s.left == s.right:
                errs.append(f"segment {k} has the same phase on both sides")
            if s.a == s.b or self.seg_arrays[2][k] <= tol * R:
                errs.append(f"segment {k} is degenerate")
        for v, inc in enumerate(self.incidence):
            if inc and not self.is_boundary_vertex(v) and len(inc) < 2:
                errs.append(f"interior vertex {v} is a dangling end")
        for k, m in self.crossing_pairs(tol * R):
            errs.append(f"segments {k} and {m} cross")
        if not errs:
            errs.extend(self.face_errors)
        return errs

    def check(self) -> "PolygonalPartition":
        errs = self.validation_errors()
        if errs:
            raise InvalidCompetitor("; ".join(errs))
        return self


def as_polygonal(p: PlanarNetwork) -> PolygonalPartition:
    if isinstance(p, PolygonalPartition):
        return p
    return PolygonalPartition(p.domain, p.tensions, p.vertices, p.segments)


# ------------------------------------------------------------------ energies

def interface_energy(q: PlanarNetwork, ordered: bool = True) -> float:
    """Sum of sigma times length over interfaces; the ordered convention
    doubles the physical value."""
    L = q.seg_arrays[2]
    sig = np.array([q.sigma_seg(k) for k in range(len(q.segments))])
    e = float(np.sum(sig * L)) if len(L) else 0.0
    return 2.0 * e if ordered else e


def physical_energy(q: PlanarNetwork) -> float:
    return interface_energy(q, ordered=False)


def _same_domain(q: PlanarNetwork, p: PlanarNetwork):
    if not q.domain.same_as(p.domain):
        raise ValueError("partitions live on different domains")


def l1_distance(q: PlanarNetwork, p: PlanarNetwork, arc_tol: float = 1e-8) -> dict[int, float]:
    """Area of the symmetric difference of phase i in q and in p, per phase."""
    _same_domain(q, p)
    phases = sorted(set(q.phases) | set(p.phases))
    out = {}
    for i in phases:
        a = q.phase_region(i, arc_tol) if i <= q.P else shapely.Polygon()
        b = p.phase_region(i, arc_tol) if i <= p.P else shapely.Polygon()
        out[i] = float(shapely.symmetric_difference(a, b).area)
    return out


def _change_points(q: PlanarNetwork):
    tr = q.trace
    if len(tr) <= 1:
        return [], (tr[0][2] if tr else None)
    return sorted((t0 % TWO_PI, ph) for t0, _, ph in tr), None


def same_trace(q: PlanarNetwork, p: PlanarNetwork, arc_tol: float = 1e-8) -> bool:
    """Boundary labelings agree, with change points within arc_tol * R."""
    if not q.domain.same_as(p.domain):
        return False
    cq, sq = _change_points(q)
    cp, sp = _change_points(p)
    if len(cq) != len(cp):
        return False
    if not cq:
        return sq == sp
    n = len(cq)
    for shift in range(n):
        ok = True
        for k in range(n):
            tq, phq = cq[k]
            tp, php = cp[(k + shift) % n]
            dt = abs((tq - tp + math.pi) % TWO_PI - math.pi)
            if phq != php or dt > arc_tol:
                ok = False
                break
        if ok:
            return True
    return False


def trace_label(q: PlanarNetwork, theta) -> np.ndarray:
    """Boundary phase of q at the given angles."""
    theta = np.asarray(theta, dtype=float) % TWO_PI
    out = np.zeros(theta.shape, dtype=int)
    for t0, sw, ph in q.trace:
        off = (theta - t0) % TWO_PI
        out[off < sw] = ph
    return out


# -------------------------------------------------------------- quadrature

def adaptive_gl(f, a: float, b: float, tol: float = 1e-13, max_depth: int = 40, start: int = 8) -> float:
    """Integral of a vectorized f over [a, b]: order-8 Gauss-Legendre panels,
    each bisected until halves and whole agree within tol (absolute, per unit length).
    Starting from several panels guards against a feature hidden from one panel's nodes."""
    if b <= a:
        return 0.0
    total = []
    edges = np.linspace(a, b, start + 1)
    panels = np.stack([edges[:-1], edges[1:]], axis=1)
    whole = None
    for depth in range(max_depth + 1):
        lo, hi = panels[:, 0], panels[:, 1]
        mid = 0.5 * (lo + hi)
        subs = np.concatenate([np.stack([lo, mid], 1), np.stack([mid, hi], 1)])
        xs = subs[:, :1] + (subs[:, 1:] - subs[:, :1]) * _GL_X
        vals = f(xs.ravel()).reshape(xs.shape)
        halves = (vals @ _GL_W) * (subs[:, 1] - subs[:, 0])
        n = len(panels)
        pair = halves[:n] + halves[n:]
        if whole is None:
            xw = lo[:, None] + (hi - lo)[:, None] * _GL_X
            whole = (f(xw.ravel()).reshape(xw.shape) @ _GL_W) * (hi - lo)
        err = np.abs(pair - whole)
        done = err <= tol * np.maximum(hi - lo, 1e-300) + 1e-300 if depth < max_depth else np.ones(n, bool)
        total.extend(pair[done].tolist())
        if np.all(done):
            break
        keep = ~done
        panels = np.concatenate([subs[:n][keep], subs[n:][keep]])
        whole = np.concatenate([halves[:n][keep], halves[n:][keep]])
    return math.fsum(total)


@dataclass
class QuadratureConfig:
    h: float | None = None            # default delta' r / 20
    fd_h: float | None = None         # default 1e-5 r
    rule: str = "node"                # or "midpoint"
    gl_tol: float = 1e-13
    arc_tol: float = 1e-6             # flattening used only to locate the bulk boxes

    def resolve(self, fld) -> "QuadratureConfig":
        r = fld.scales.r_bar
        h = self.h if self.h is not None else fld.delta_prime * r / 20.0
        if not h > 0:
            raise ValueError("quadrature step h must be positive")
        if self.rule not in ("node", "midpoint"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")
        fd = self.fd_h if self.fd_h is not None else 1e-5 * r
        return QuadratureConfig(h, fd, self.rule, self.gl_tol, self.arc_tol)

    def to_json(self) -> dict:
        return {"h": self.h, "fd_h": self.fd_h, "rule": self.rule, "gl_tol": self.gl_tol, "arc_tol": self.arc_tol}


def _check_phases(q, fld):
    if q.P != fld.P:
        raise ValueError(f"competitor has {q.P} phases, the field {fld.P}")


def relative_energy(q: PlanarNetwork, fld, tol: float = 1e-13) -> float:
    """Ordered sum of sigma_ij * integral over S_ij of (1 - (xi_i - xi_j) . n_ij / sigma_ij)."""
    _check_phases(q, fld)
    total = []
    for k, s in enumerate(q.segments):
        a, b = q.seg_points(k)
        nu = q.left_normal(k)
        L = float(q.seg_arrays[2][k])
        sig = q.tensions(s.left, s.right)
        iR, iL = s.right - 1, s.left - 1

        def g(t, a=a, b=b, nu=nu, sig=sig, iR=iR, iL=iL):
            X = a + t[:, None] * (b - a)
            xi = fld.xi(X)
            return sig - (xi[:, iR] - xi[:, iL]) @ nu

        total.append(2.0 * L * adaptive_gl(g, 0.0, 1.0, tol))
    return math.fsum(total)


def boundary_trace_term(q: PlanarNetwork, fld, tol: float = 1e-13) -> float:
    """Sum over i of the boundary integral of 2 (chi_i - chibar_i) n . xi_i,
    n the inner unit normal of the disc."""
    p = fld.partition
    _same_domain(q, p)
    _check_phases(q, fld)
    dom = p.domain
    cuts = sorted({t0 % TWO_PI for t0, sw, _ in q.trace if abs(sw) < TWO_PI}
                  | {t0 % TWO_PI for t0, sw, _ in p.trace if abs(sw) < TWO_PI})
    if not cuts:
        cuts = [0.0]
    total = []
    for k, t0 in enumerate(cuts):
        t1 = cuts[(k + 1) % len(cuts)]
        if len(cuts) == 1:
            t1 = t0 + TWO_PI
        elif t1 <= t0:
            t1 += TWO_PI
        mid = 0.5 * (t0 + t1)
        a = int(trace_label(q, mid))
        b = int(trace_label(p, mid))
        if a == b or a == 0 or b == 0:
            continue

        def g(th, a=a, b=b):
            X = dom.point(th)
            n_in = -(X - dom.center) / dom.radius
            xi = fld.xi(X)
            return 2.0 * np.einsum("nk,nk->n", xi[:, a - 1] - xi[:, b - 1], n_in) * dom.radius

        total.append(adaptive_gl(g, t0, t1, tol))
    return math.fsum(total)


def _difference_boxes(q: PlanarNetwork, p: PlanarNetwork, arc_tol: float):
    parts = []
    for i in sorted(set(q.phases) | set(p.phases)):
        a = q.phase_region(i, arc_tol) if i <= q.P else shapely.Polygon()
        b = p.phase_region(i, arc_tol) if i <= p.P else shapely.Polygon()
        d = shapely.symmetric_difference(a, b)
        if not d.is_empty:
            parts.append(d)
    if not parts:
        return []
    u = shapely.union_all(parts)
    geoms = getattr(u, "geoms", [u])
    return [g.bounds for g in geoms if not g.is_empty and g.area > 0]


def bulk_grid(q: PlanarNetwork, fld, quad: QuadratureConfig):
    """Cell indices (ix, iy) of the global grid touching the symmetric difference."""
    p = fld.partition
    dom = p.domain
    h = quad.h
    ox, oy = dom.center - dom.radius
    n = int(math.ceil(2 * dom.radius / h)) + 1
    keys = []
    pad = 2.0 * h + quad.arc_tol * dom.radius
    for x0, y0, x1, y1 in _difference_boxes(q, p, quad.arc_tol):
        i0 = max(0, int(math.floor((x0 - pad - ox) / h)))
        i1 = min(n, int(math.ceil((x1 + pad - ox) / h)))
        j0 = max(0, int(math.floor((y0 - pad - oy) / h)))
        j1 = min(n, int(math.ceil((y1 + pad - oy) / h)))
        II, JJ = np.meshgrid(np.arange(i0, i1), np.arange(j0, j1), indexing="ij")
        keys.append(II.ravel() * (n + 1) + JJ.ravel())
    if not keys:
        return np.zeros((0, 2), dtype=int)
    k = np.unique(np.concatenate(keys))
    return np.stack([k // (n + 1), k % (n + 1)], axis=1)


def _pair_regions(q: PlanarNetwork, p: PlanarNetwork, arc_tol: float):
    """Polygons where q carries phase a and p carries phase b != a."""
    phases = sorted(set(q.phases) | set(p.phases))
    reg_q = {i: q.phase_region(i, arc_tol) for i in phases if i <= q.P}
    reg_p = {i: p.phase_region(i, arc_tol) for i in phases if i <= p.P}
    out = {}
    for a, A in reg_q.items():
        if A.is_empty:
            continue
        for b, B in reg_p.items():
            if a == b or B.is_empty:
                continue
            inter = shapely.intersection(A, B)
            if inter.area > 1e-14 * p.domain.area:
                out[(a, b)] = inter
    return out


def bulk_divergence_term(q: PlanarNetwork, fld, quad: QuadratureConfig | None = None,
                         chunk: int = 200_000) -> float:
    """Ordered sum of the integral of 2 (chi_i - chibar_i) chibar_j (div xi_i - div xi_j)
    on a uniform grid of step quad.h anchored at center - R.

    rule "node": each cell is weighted by the exact area it shares with the
    region {q = a, p = b} and the divergence is read at the cell's lower-left
    node.  First order, leading error -(h/2)(1,1) . (boundary integral of f n).
    rule "midpoint": labels and divergence are read at the cell centre.
    """
    quad = (quad or QuadratureConfig()).resolve(fld)
    p = fld.partition
    _same_domain(q, p)
    _check_phases(q, fld)
    if quad.rule == "node":
        return _bulk_node(q, fld, quad)
    return _bulk_midpoint(q, fld, quad, chunk)


def _near_boundary_cells(reg, ox, oy, h):
    """Keys (i, j) of every cell the region boundary meets.  Edges are sampled
    at spacing h/8; a crossing piece holding no sample clips a cell corner and
    passes within h/4 of it, so the four cells around any node that close to a
    sample are added as well."""
    pts = []
    for ring in shapely.get_rings(shapely.get_parts(reg)):
        c = shapely.get_coordinates(ring)
        for a, b in zip(c[:-1], c[1:]):
            n = max(1, int(math.ceil(8.0 * np.hypot(*(b - a)) / h)))
            t = np.arange(n + 1)[:, None] / n
            pts.append(a + t * (b - a))
    U = (np.vstack(pts) - (ox, oy)) / h
    cells = [np.floor(U).astype(np.int64)]
    node = np.rint(U)
    close = np.hypot(*(U - node).T) <= 0.25
    nd = node[close].astype(np.int64)
    for dx in (-1, 0):
        for dy in (-1, 0):
            cells.append(nd + (dx, dy))
    ij = np.vstack(cells) + 1
    M = int(ij.max()) + 2
    key = np.unique(ij[:, 0] * M + ij[:, 1])
    return np.stack([key // M - 1, key % M - 1], axis=1)


def _bulk_node(q, fld, quad):
    p = fld.partition
    h = quad.h
    ox, oy = p.domain.center - p.domain.radius
    partial = []
    for (a, b), reg in sorted(_pair_regions(q, p, quad.arc_tol).items()):
        for part in shapely.get_parts(reg):
            if part.geom_type != "Polygon" or part.area <= 0:
                continue
            nodes, w = _coverage(part, ox, oy, h)
            if not len(w):
                continue
            div = fld.divergence(nodes, quad.fd_h)
            partial.append(float(np.sum(w * 2.0 * (div[:, a - 1] - div[:, b - 1]))))
    return math.fsum(partial)


def _coverage(part, ox, oy, h):
    """Lower-left nodes and exact covered areas of the grid cells meeting a polygon."""
    shapely.prepare(part)
    edge = _near_boundary_cells(part, ox, oy, h)
    x0, y0, x1, y1 = part.bounds
    i0, i1 = int(math.floor((x0 - ox) / h)), int(math.ceil((x1 - ox) / h))
    j0, j1 = int(math.floor((y0 - oy) / h)), int(math.ceil((y1 - oy) / h))
    II, JJ = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    full = shapely.contains_xy(part, ox + (II + 0.5) * h, oy + (JJ + 0.5) * h)
    ei, ej = edge[:, 0] - i0, edge[:, 1] - j0
    ok = (ei >= 0) & (ei < II.shape[0]) & (ej >= 0) & (ej < II.shape[1])
    full[ei[ok], ej[ok]] = False
    lx = ox + edge[:, 0] * h
    ly = oy + edge[:, 1] * h
    w_edge = shapely.area(shapely.intersection(shapely.box(lx, ly, lx + h, ly + h), part))
    keep = w_edge > 0
    nodes = np.vstack([np.stack([ox + II[full] * h, oy + JJ[full] * h], 1),
                       np.stack([lx[keep], ly[keep]], 1)])
    w = np.concatenate([np.full(int(full.sum()), h * h), w_edge[keep]])
    return nodes, w


def _bulk_midpoint(q, fld, quad, chunk):
    p = fld.partition
    h = quad.h
    origin = p.domain.center - p.domain.radius
    idx = bulk_grid(q, fld, quad)
    partial = []
    for s in range(0, len(idx), chunk):
        centers = origin + (idx[s:s + chunk] + 0.5) * h
        a = q.locate(centers)
        b = p.locate(centers)
        m = (a != b) & (a > 0) & (b > 0)
        if not np.any(m):
            continue
        div = fld.divergence(centers[m], quad.fd_h)
        rows = np.arange(int(m.sum()))
        partial.append(float(np.sum(2.0 * (div[rows, a[m] - 1] - div[rows, b[m] - 1]))))
    return math.fsum(partial) * h * h


@dataclass
class EnergyReport:
    E_competitor: float
    E_reference: float
    relative_energy: float
    bulk_term: float
    boundary_term: float
    identity_residual: float
    E_competitor_physical: float = 0.0
    E_reference_physical: float = 0.0
    quadrature: dict = field(default_factory=dict)

    @property
    def delta_E(self) -> float:
        return self.E_competitor - self.E_reference

    def to_json(self) -> dict:
        return {
            "convention": "ordered pair sums (each interface counted twice)",
            "E_competitor": self.E_competitor, "E_reference": self.E_reference,
            "E_competitor_physical": self.E_competitor_physical,
            "E_reference_physical": self.E_reference_physical,
            "relative_energy": self.relative_energy, "bulk_term": self.bulk_term,
            "boundary_term": self.boundary_term, "identity_residual": self.identity_residual,
            "quadrature": self.quadrature,
        }


def verify_energy_identity(q: PlanarNetwork, fld, quad: QuadratureConfig | None = None) -> EnergyReport:
    """Evaluate both sides of E[q] = E[p] + E[q|p] + bulk + boundary."""
    quad = (quad or QuadratureConfig()).resolve(fld)
    p = fld.partition
    Eq = interface_energy(q)
    Ep = interface_energy(p)
    rel = relative_energy(q, fld, quad.gl_tol)
    bulk = bulk_divergence_term(q, fld, quad)
    bnd = boundary_trace_term(q, fld, quad.gl_tol)
    res = abs(Eq - (Ep + rel + bulk + bnd))
    return EnergyReport(Eq, Ep, rel, bulk, bnd, res, physical_energy(q), physical_energy(p), quad.to_json())
