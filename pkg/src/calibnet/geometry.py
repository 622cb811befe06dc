"""Planar straight-line networks in a disc: primitives, faces and point location.

Faces are recovered by a half-edge traversal in which the boundary circle is
split into arcs at the boundary vertices.  Face boundaries keep their arcs
exactly (areas by Green's formula); shapely polygons with flattened arcs are
only produced on demand for clipping.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import shapely

from .tensions import SurfaceTensionMatrix

TWO_PI = 2.0 * math.pi
BOUNDARY_TOL = 1e-9   # relative to the radius
ARC_TOL = 1e-8        # relative to the radius


class InvalidNetwork(ValueError):
    pass


def rot90(v):
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def angle_of(v) -> float:
    return math.atan2(v[1], v[0])


def segment_distance(X, a, b):
    """Distance from points X (N,2) to the closed segment [a, b] and the
    clamped projection parameter t in [0, 1]."""
    X = np.asarray(X, dtype=float)
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.linalg.norm(X - a, axis=1), np.zeros(len(X))
    t = np.clip(((X - a) @ d) / L2, 0.0, 1.0)
    proj = a + t[:, None] * d
    return np.linalg.norm(X - proj, axis=1), t


def segment_segment_distance(p0, p1, q0, q1) -> float:
    if segments_cross(p0, p1, q0, q1):
        return 0.0
    pts = np.array([q0, q1])
    d1 = segment_distance(pts, p0, p1)[0].min()
    pts = np.array([p0, p1])
    d2 = segment_distance(pts, q0, q1)[0].min()
    return float(min(d1, d2))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_cross(p0, p1, q0, q1, tol: float = 0.0) -> bool:
    """True if the closed segments intersect (including touching)."""
    d1 = _orient(q0, q1, p0)
    d2 = _orient(q0, q1, p1)
    d3 = _orient(p0, p1, q0)
    d4 = _orient(p0, p1, q1)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and \
            ((d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)):
        return True
    pts = np.array([p0, p1])
    if segment_distance(pts, np.asarray(q0, float), np.asarray(q1, float))[0].min() <= tol:
        return True
    pts = np.array([q0, q1])
    return bool(segment_distance(pts, np.asarray(p0, float), np.asarray(p1, float))[0].min() <= tol)


@dataclass(frozen=True, eq=False)
class DiscDomain:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(2)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise InvalidNetwork(f"domain radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self.center + self.radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)

    def angle(self, x) -> float:
        return angle_of(np.asarray(x, float) - self.center) % TWO_PI

    def dist_to_boundary(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.radius - np.linalg.norm(X - self.center, axis=1)

    def contains(self, X, tol: float = 0.0):
        return self.dist_to_boundary(X) >= -tol

    def on_boundary(self, x, tol: float | None = None) -> bool:
        tol = BOUNDARY_TOL * self.radius if tol is None else tol
        return abs(float(self.dist_to_boundary(x)[0])) <= tol

    def same_as(self, other: "DiscDomain", tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.center - other.center) <= tol * self.radius)
                    and abs(self.radius - other.radius) <= tol * self.radius)

    def to_json(self) -> dict:
        return {"center": [float(self.center[0]), float(self.center[1])], "radius": self.radius}

    @classmethod
    def from_json(cls, obj) -> "DiscDomain":
        return cls(np.asarray(obj["center"], dtype=float), float(obj["radius"]))


@dataclass(frozen=True)
class Segment:
    a: int
    b: int
    left: int
    right: int

    def phases(self) -> frozenset:
        return frozenset((self.left, self.right))

    def to_json(self) -> dict:
        return {"a": self.a, "b": self.b, "left": self.left, "right": self.right}


# ---------------------------------------------------------------- face pieces

@dataclass(frozen=True)
class LinePiece:
    p0: tuple
    p1: tuple


@dataclass(frozen=True)
class ArcPiece:
    theta0: float
    sweep: float  # signed, positive = counterclockwise


def _piece_area(piece, dom: DiscDomain) -> float:
    if isinstance(piece, LinePiece):
        (x0, y0), (x1, y1) = piece.p0, piece.p1
        return 0.5 * (x0 * y1 - x1 * y0)
    cx, cy = dom.center
    R = dom.radius
    t0 = piece.theta0
    t1 = t0 + piece.sweep
    return 0.5 * (R * cx * (math.sin(t1) - math.sin(t0)) - R * cy * (math.cos(t1) - math.cos(t0))
                  + R * R * piece.sweep)


def circle_grid_size(radius: float, tol: float) -> int:
    """Number of uniformly spaced circle vertices keeping the sagitta below tol."""
    step = 2.0 * math.acos(max(-1.0, 1.0 - tol / radius))
    return max(8, int(math.ceil(TWO_PI / step)))


def flatten_arc(dom: DiscDomain, piece: ArcPiece, n_grid: int) -> np.ndarray:
    """Vertices of the arc (start included, end excluded) on a fixed global
    angular grid so that equal arcs of different partitions flatten equally."""
    k = np.arange(n_grid)
    grid = TWO_PI * k / n_grid
    t0 = piece.theta0 % TWO_PI
    s = abs(piece.sweep)
    if piece.sweep > 0:
        off = (grid - t0) % TWO_PI
        sel = (off > 1e-14) & (off < s - 1e-14)
        ang = t0 + np.sort(off[sel])
    else:
        off = (t0 - grid) % TWO_PI
        sel = (off > 1e-14) & (off < s - 1e-14)
        ang = t0 - np.sort(off[sel])
    ang = np.concatenate([[t0], ang])
    return dom.point(ang)


@dataclass(frozen=True, eq=False)
class Face:
    phase: int | None
    cycles: tuple          # first is the shell, the rest are holes
    area: float

    def shell(self):
        return self.cycles[0]


def _cycle_pts(cycle, dom: DiscDomain, n_grid: int) -> np.ndarray:
    out = []
    for pc in cycle:
        if isinstance(pc, LinePiece):
            out.append(np.array([pc.p0]))
        else:
            out.append(flatten_arc(dom, pc, n_grid))
    return np.vstack(out)


def _crossings(cycle, dom: DiscDomain, X, Y):
    """Parity contribution of one closed cycle to the ray-casting test, ray
    towards +x from each (X, Y)."""
    par = np.zeros(X.shape, dtype=bool)
    cx, cy = dom.center
    R = dom.radius
    for pc in cycle:
        if isinstance(pc, LinePiece):
            (x0, y0), (x1, y1) = pc.p0, pc.p1
            if y0 == y1:
                continue
            cond = (y0 > Y) != (y1 > Y)
            xi = x0 + (Y - y0) * (x1 - x0) / (y1 - y0)
            par ^= cond & (X < xi)
        else:
            s = (Y - cy) / R
            ok = np.abs(s) < 1.0
            th1 = np.arcsin(np.clip(s, -1.0, 1.0))
            for th in (th1, math.pi - th1):
                xi = cx + R * np.cos(th)
                if pc.sweep > 0:
                    off = (th - pc.theta0) % TWO_PI
                else:
                    off = (pc.theta0 - th) % TWO_PI
                inside = off < abs(pc.sweep) if abs(pc.sweep) < TWO_PI else np.ones_like(ok)
                par ^= ok & inside & (X < xi)
    return par


class PlanarNetwork:
    """Straight segments with phase labels on their two sides inside a disc.

    Vertex indices are 0-based; phase labels run from 1 to P.
    """

    def __init__(self, domain: DiscDomain, tensions: SurfaceTensionMatrix, vertices, segments):
        self.domain = domain
        self.tensions = tensions
        v = np.array(vertices, dtype=float).reshape(-1, 2)
        v.setflags(write=False)
        self.vertices = v
        self.segments = tuple(s if isinstance(s, Segment) else Segment(*s) for s in segments)

    # -- basic accessors
    @property
    def P(self) -> int:
        return self.tensions.P

    @property
    def phases(self) -> list[int]:
        return list(range(1, self.P + 1))

    def seg_points(self, k: int):
        s = self.segments[k]
        return self.vertices[s.a], self.vertices[s.b]

    @cached_property
    def seg_arrays(self):
        A = np.array([self.vertices[s.a] for s in self.segments]).reshape(-1, 2)
        B = np.array([self.vertices[s.b] for s in self.segments]).reshape(-1, 2)
        L = np.linalg.norm(B - A, axis=1)
        return A, B, L

    def tangent(self, k: int) -> np.ndarray:
        a, b = self.seg_points(k)
        return unit(b - a)

    def left_normal(self, k: int) -> np.ndarray:
        """Unit normal pointing into the left phase (n from right into left)."""
        return rot90(self.tangent(k))

    def normal(self, k: int, i: int, j: int) -> np.ndarray:
        """Unit normal on segment k pointing from phase i into phase j."""
        s = self.segments[k]
        nu = self.left_normal(k)
        if (i, j) == (s.right, s.left):
            return nu
        if (i, j) == (s.left, s.right):
            return -nu
        raise ValueError(f"segment {k} does not separate phases {i} and {j}")

    def sigma_seg(self, k: int) -> float:
        s = self.segments[k]
        return self.tensions(s.left, s.right)

    @cached_property
    def incidence(self) -> list[list[int]]:
        inc = [[] for _ in range(len(self.vertices))]
        for k, s in enumerate(self.segments):
            inc[s.a].append(k)
            inc[s.b].append(k)
        return inc

    @cached_property
    def boundary_vertices(self) -> list[int]:
        return [v for v in range(len(self.vertices)) if self.domain.on_boundary(self.vertices[v])]

    def is_boundary_vertex(self, v: int) -> bool:
        return v in self._boundary_set

    @cached_property
    def _boundary_set(self):
        return frozenset(self.boundary_vertices)

    def outgoing(self, v: int, k: int) -> np.ndarray:
        """Unit direction of segment k leaving vertex v."""
        s = self.segments[k]
        t = self.tangent(k)
        return t if s.a == v else -t

    def length(self) -> float:
        return float(self.seg_arrays[2].sum())

    # -- planarity check (used by validation and competitor generation)
    def crossing_pairs(self, tol: float = 0.0) -> list[tuple[int, int]]:
        """Pairs of segments meeting other than at a shared endpoint vertex."""
        A, B, _ = self.seg_arrays
        lo = np.minimum(A, B) - tol
        hi = np.maximum(A, B) + tol
        out = []
        n = len(self.segments)
        for k in range(n):
            cand = np.nonzero(np.all(lo[k + 1:] <= hi[k], axis=1) & np.all(hi[k + 1:] >= lo[k], axis=1))[0] + k + 1
            sk = self.segments[k]
            for m in cand:
                sm = self.segments[m]
                shared = {sk.a, sk.b} & {sm.a, sm.b}
                if shared:
                    if len(shared) == 2:
                        out.append((k, int(m)))
                        continue
                    # segments sharing one endpoint may only meet there
                    v = shared.pop()
                    ok = self._only_touch_at(k, int(m), v, tol)
                    if not ok:
                        out.append((k, int(m)))
                elif segments_cross(A[k], B[k], A[m], B[m], tol):
                    out.append((k, int(m)))
        return out

    def _only_touch_at(self, k, m, v, tol) -> bool:
        dk = self.outgoing(v, k)
        dm = self.outgoing(v, m)
        cross = abs(dk[0] * dm[1] - dk[1] * dm[0])
        if cross <= 1e-12 and dk @ dm > 0:
            return False  # overlapping collinear segments
        # far endpoints against the other segment
        fk = self.vertices[self.segments[k].b if self.segments[k].a == v else self.segments[k].a]
        fm = self.vertices[self.segments[m].b if self.segments[m].a == v else self.segments[m].a]
        a_k, b_k = self.seg_points(k)
        a_m, b_m = self.seg_points(m)
        d1 = segment_distance(fk[None], a_m, b_m)[0][0]
        d2 = segment_distance(fm[None], a_k, b_k)[0][0]
        return bool(d1 > tol and d2 > tol)

    # -- faces
    @cached_property
    def _halfedges(self):
        return _build_halfedges(self)

    @cached_property
    def face_data(self):
        return _trace_faces(self)

    @property
    def faces(self) -> list[Face]:
        return self.face_data[0]

    @property
    def face_errors(self) -> list[str]:
        return self.face_data[1]

    @cached_property
    def trace(self) -> list[tuple[float, float, int | None]]:
        """Boundary labels as (theta_start, sweep, phase), counterclockwise,
        adjacent arcs with equal labels merged."""
        return _merge_trace(self.face_data[2])

    def arc_grid(self, arc_tol: float = ARC_TOL) -> int:
        return circle_grid_size(self.domain.radius, arc_tol * self.domain.radius)

    def face_polygon(self, face: Face, arc_tol: float = ARC_TOL):
        n = self.arc_grid(arc_tol)
        shell = _cycle_pts(face.cycles[0], self.domain, n)
        holes = [_cycle_pts(c, self.domain, n) for c in face.cycles[1:]]
        return shapely.Polygon(shell, holes)

    def phase_region(self, i: int, arc_tol: float = ARC_TOL):
        polys = [self.face_polygon(f, arc_tol) for f in self.faces if f.phase == i]
        if not polys:
            return shapely.Polygon()
        return shapely.union_all(polys)

    def phase_areas(self) -> dict[int, float]:
        out = {i: 0.0 for i in self.phases}
        for f in self.faces:
            if f.phase in out:
                out[f.phase] += f.area
        return out

    def locate(self, X) -> np.ndarray:
        """Phase label of each point (0 if on an edge within roundoff or outside)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        xs = X[:, 0]
        # shift the ray off vertex heights; only points within ~1e-11 R of an edge are affected
        ys = X[:, 1] + 1.1e-11 * self.domain.radius
        lab = np.zeros(len(X), dtype=int)
        todo = self.domain.dist_to_boundary(X) >= 0.0
        for f in self.faces:
            if not np.any(todo):
                break
            idx = np.nonzero(todo)[0]
            par = np.zeros(len(idx), dtype=bool)
            for cyc in f.cycles:
                par ^= _crossings(cyc, self.domain, xs[idx], ys[idx])
            hit = idx[par]
            lab[hit] = f.phase if f.phase is not None else 0
            todo[hit] = False
        return lab

    # -- serialization
    def to_json(self) -> dict:
        return {
            "domain": self.domain.to_json(),
            "tensions": self.tensions.to_json(),
            "vertices": [[float(x), float(y)] for x, y in self.vertices],
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, obj):
        try:
            dom = DiscDomain.from_json(obj["domain"])
            ten = SurfaceTensionMatrix.from_json(obj["tensions"])
            verts = obj["vertices"]
            segs = [Segment(int(s["a"]), int(s["b"]), int(s["left"]), int(s["right"])) for s in obj["segments"]]
        except (KeyError, TypeError) as exc:
            raise InvalidNetwork(f"malformed network JSON: {exc!r}") from exc
        nv = len(verts)
        for k, s in enumerate(segs):
            if not (0 <= s.a < nv and 0 <= s.b < nv):
                raise InvalidNetwork(f"segment {k} references a missing vertex")
            if not (1 <= s.left <= ten.P and 1 <= s.right <= ten.P):
                raise InvalidNetwork(f"segment {k} has a phase label outside 1..{ten.P}")
        return cls(dom, ten, verts, segs)


# ------------------------------------------------------------ face tracing

def _build_halfedges(net: PlanarNetwork):
    dom = net.domain
    nodes = [tuple(v) for v in net.vertices]
    bverts = sorted(net.boundary_vertices, key=lambda v: (dom.angle(net.vertices[v]), v))
    hes = []   # (origin, dest, kind, data, out_angle)
    for k, s in enumerate(net.segments):
        t = net.tangent(k)
        hes.append((s.a, s.b, "seg", (k, +1), angle_of(t)))
        hes.append((s.b, s.a, "seg", (k, -1), angle_of(-t)))
    if bverts:
        angs = [dom.angle(net.vertices[v]) for v in bverts]
        m = len(bverts)
        for q in range(m):
            u, w = bverts[q], bverts[(q + 1) % m]
            t0, t1 = angs[q], angs[(q + 1) % m]
            sweep = (t1 - t0) % TWO_PI
            if m == 1 or sweep == 0.0:
                sweep = TWO_PI
            hes.append((u, w, "arc", ArcPiece(t0, sweep), t0 + math.pi / 2))
            hes.append((w, u, "arc", ArcPiece(t1, -sweep), t1 - math.pi / 2))
    else:
        nodes.append(tuple(dom.point(0.0)))
        v = len(nodes) - 1
        hes.append((v, v, "arc", ArcPiece(0.0, TWO_PI), math.pi / 2))
        hes.append((v, v, "arc", ArcPiece(0.0, -TWO_PI), -math.pi / 2))
    out = {}
    for h, (o, _, _, _, ang) in enumerate(hes):
        out.setdefault(o, []).append((ang % TWO_PI, h))
    for o in out:
        out[o].sort()
    twin = [h ^ 1 for h in range(len(hes))]
    pos = {}
    for o, lst in out.items():
        for idx, (_, h) in enumerate(lst):
            pos[h] = idx
    nxt = [0] * len(hes)
    for h, (o, d, _, _, _) in enumerate(hes):
        tw = twin[h]
        lst = out[d]
        nxt[h] = lst[(pos[tw] - 1) % len(lst)][1]
    return nodes, hes, nxt


def _trace_faces(net: PlanarNetwork):
    dom = net.domain
    nodes, hes, nxt = net._halfedges
    seen = [False] * len(hes)
    cycles = []
    for h0 in range(len(hes)):
        if seen[h0]:
            continue
        cyc = []
        h = h0
        while not seen[h]:
            seen[h] = True
            cyc.append(h)
            h = nxt[h]
        cycles.append(cyc)

    def pieces(cyc):
        out = []
        for h in cyc:
            o, d, kind, data, _ = hes[h]
            if kind == "seg":
                out.append(LinePiece(nodes[o], nodes[d]))
            else:
                out.append(data)
        return tuple(out)

    def labels(cyc):
        lab = set()
        for h in cyc:
            _, _, kind, data, _ = hes[h]
            if kind == "seg":
                k, sgn = data
                s = net.segments[k]
                lab.add(s.left if sgn > 0 else s.right)
        return lab

    shells, holes, errors = [], [], []
    for cyc in cycles:
        if any(hes[h][2] == "arc" and hes[h][3].sweep < 0 for h in cyc):
            if any(hes[h][2] == "seg" for h in cyc):
                errors.append("a segment lies on the exterior side of the boundary")
            continue
        pcs = pieces(cyc)
        area = sum(_piece_area(p, dom) for p in pcs)
        verts = {hes[h][0] for h in cyc}
        if area > 0:
            shells.append((cyc, pcs, area, verts))
        else:
            holes.append((cyc, pcs, area, verts))

    # attach holes to the smallest enclosing shell from another component
    attached = {id(s[0]): [] for s in shells}
    for cyc, pcs, area, verts in holes:
        x0 = np.array([nodes[hes[cyc[0]][0]]])
        best = None
        for s in shells:
            if s[3] & verts:
                continue
            par = _crossings(s[1], dom, x0[:, 0], x0[:, 1] + 1.1e-11 * dom.radius)[0]
            if par and (best is None or s[2] < best[2]):
                best = s
        if best is None:
            if area < -1e-14 * dom.area:
                errors.append("a closed interface component lies outside every face")
            continue
        attached[id(best[0])].append((cyc, pcs, area))

    faces = []
    trace = []
    for cyc, pcs, area, _ in shells:
        hs = attached[id(cyc)]
        lab = labels(cyc)
        for hc, _, _ in hs:
            lab |= labels(hc)
        if len(lab) > 1:
            errors.append(f"face with inconsistent labels {sorted(lab)}")
        phase = min(lab) if lab else None
        tot = area + sum(a for _, _, a in hs)
        faces.append(Face(phase, (pcs,) + tuple(p for _, p, _ in hs), tot))
        for p in pcs:
            if isinstance(p, ArcPiece):
                trace.append((p.theta0 % TWO_PI, p.sweep, phase))
    if any(f.phase is None for f in faces):
        if len(faces) == 1 and not net.segments:
            pass
        else:
            errors.append("face without any adjacent labelled segment")
    faces.sort(key=lambda f: (f.phase if f.phase is not None else 0, -f.area))
    return faces, errors, trace


def _merge_trace(arcs):
    if not arcs:
        return []
    arcs = sorted(arcs)
    merged = [list(arcs[0])]
    for t0, sw, ph in arcs[1:]:
        if ph == merged[-1][2]:
            merged[-1][1] += sw
        else:
            merged.append([t0, sw, ph])
    if len(merged) > 1 and merged[0][2] == merged[-1][2]:
        last = merged.pop()
        merged[0] = [last[0], last[1] + merged[0][1], last[2]]
    return [(float(a), float(b), c) for a, b, c in merged]
