"""Static SVG rendering of partitions, dumbbell neighbourhoods and fields."""
from __future__ import annotations

import numpy as np
import shapely
from shapely.geometry import LineString, Point

PALETTE = ("#e8d6a8", "#a8c8e8", "#c8e8a8", "#e8a8c8", "#d0b8e8", "#a8e8d8", "#e8c0a0", "#c0c0c0")
ARROW_COLORS = ("#8a5a00", "#1f4f8a", "#3f7a1f", "#8a1f5a", "#5a3f8a", "#1f7a6a", "#8a4f1f", "#404040")


def _f(x: float) -> str:
    return format(float(x), ".6g")


class _Canvas:
    def __init__(self, dom, size: int = 600, margin: float = 0.05):
        self.c = np.asarray(dom.center, float)
        self.R = float(dom.radius) * (1.0 + margin)
        self.size = size
        self.items: list[str] = []

    def xy(self, P):
        P = np.atleast_2d(np.asarray(P, float))
        s = self.size / (2.0 * self.R)
        return np.stack([(P[:, 0] - self.c[0] + self.R) * s, (self.c[1] + self.R - P[:, 1]) * s], axis=1)

    def scale(self, length: float) -> float:
        return length * self.size / (2.0 * self.R)

    def path(self, geom, fill: str, opacity: float = 1.0, stroke: str = "none"):
        d = []
        for poly in shapely.get_parts(geom):
            if poly.geom_type != "Polygon" or poly.is_empty:
                continue
            for ring in [poly.exterior, *poly.interiors]:
                pts = self.xy(np.asarray(ring.coords))
                d.append("M" + " L".join(f"{_f(x)} {_f(y)}" for x, y in pts) + " Z")
        if d:
            self.items.append(f'<path d="{" ".join(d)}" fill="{fill}" fill-opacity="{_f(opacity)}" '
                              f'stroke="{stroke}" fill-rule="evenodd"/>')

    def line(self, a, b, stroke: str, width: float):
        (x1, y1), (x2, y2) = self.xy([a, b])
        self.items.append(f'<line x1="{_f(x1)}" y1="{_f(y1)}" x2="{_f(x2)}" y2="{_f(y2)}" '
                          f'stroke="{stroke}" stroke-width="{_f(width)}" stroke-linecap="round"/>')

    def circle(self, c, r: float, stroke: str, fill: str = "none", width: float = 1.0):
        (x, y), = self.xy([c])
        self.items.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(self.scale(r))}" '
                          f'stroke="{stroke}" fill="{fill}" stroke-width="{_f(width)}"/>')

    def arrow(self, base, vec, color: str):
        a = np.asarray(base, float)
        b = a + np.asarray(vec, float)
        self.line(a, b, color, 1.0)
        (bx, by), = self.xy([b])
        (ax, ay), = self.xy([a])
        d = np.array([bx - ax, by - ay])
        n = np.hypot(*d)
        if n < 1e-9:
            return
        d /= n
        w = np.array([-d[1], d[0]])
        head = min(4.0, 0.4 * n)
        p1 = np.array([bx, by]) - head * d + 0.5 * head * w
        p2 = np.array([bx, by]) - head * d - 0.5 * head * w
        self.items.append(f'<polygon points="{_f(bx)},{_f(by)} {_f(p1[0])},{_f(p1[1])} '
                          f'{_f(p2[0])},{_f(p2[1])}" fill="{color}"/>')

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.size}" height="{self.size}" '
                f'viewBox="0 0 {self.size} {self.size}">')
        return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *self.items, "</svg>"]) + "\n"


def _draw_partition(cv: _Canvas, p):
    for i in p.phases:
        try:
            reg = p.phase_region(i, arc_tol=1e-4)
        except Exception:
            continue
        cv.path(reg, PALETTE[(i - 1) % len(PALETTE)])
    cv.circle(p.domain.center, p.domain.radius, "#000000", width=1.5)


def _draw_segments(cv: _Canvas, p):
    for k in range(len(p.segments)):
        a, b = p.seg_points(k)
        cv.line(a, b, "#000000", 2.0)


def dumbbell_geometry(p, scales):
    """Union of the delta r-tubes around segments and r-balls around point features."""
    f = p.features
    r, d = scales.r_bar, scales.delta
    parts = [LineString(p.seg_points(k)).buffer(d * r, cap_style="flat") for k in f.segments_C]
    parts += [Point(p.vertices[v]).buffer(r, quad_segs=32) for v in (*f.junctions_P, *f.boundary_B)]
    dom = Point(p.domain.center).buffer(p.domain.radius, quad_segs=64)
    return shapely.union_all(parts).intersection(dom)


def partition_svg(p, scales=None, size: int = 600) -> str:
    cv = _Canvas(p.domain, size)
    _draw_partition(cv, p)
    if scales is not None:
        cv.path(dumbbell_geometry(p, scales), "#606060", opacity=0.25, stroke="#404040")
    _draw_segments(cv, p)
    return cv.render()


def field_svg(fld, size: int = 600, n_grid: int = 41, phases=None) -> str:
    """Arrows of xi_i on a regular grid, restricted to the support."""
    p = fld.partition
    cv = _Canvas(p.domain, size)
    _draw_partition(cv, p)
    cv.path(dumbbell_geometry(p, fld.scales), "#606060", opacity=0.2)
    _draw_segments(cv, p)
    c, R = p.domain.center, p.domain.radius
    g = np.linspace(-R, R, n_grid)
    X = np.array([(c[0] + x, c[1] + y) for y in g for x in g])
    X = X[p.domain.contains(X)]
    xi = fld.xi(X)
    step = 2 * R / (n_grid - 1)
    big = max(float(np.abs(xi).max()), 1e-300)
    for i in (phases or p.phases):
        V = xi[:, i - 1, :]
        for x, v in zip(X, V):
            if np.hypot(*v) > 1e-12:
                cv.arrow(x, 0.9 * step * v / big, ARROW_COLORS[(i - 1) % len(ARROW_COLORS)])
    return cv.render()
