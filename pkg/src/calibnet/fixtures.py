"""Standard partitions used by the tests, the acceptance suite and the CLI."""
from __future__ import annotations

import math

import numpy as np

from .geometry import DiscDomain, PlanarNetwork, Segment
from .partition import FlatPartition
from .tensions import SurfaceTensionMatrix


def _ray_to_circle(origin, direction, dom: DiscDomain):
    """Point where the ray origin + s*direction (s > 0) leaves the disc."""
    o = np.asarray(origin, float) - dom.center
    d = np.asarray(direction, float)
    b = o @ d
    c = o @ o - dom.radius ** 2
    s = -b + math.sqrt(b * b - c)
    return dom.center + o + s * d


def star(angles_deg, phases, center=(0.0, 0.0), radius=1.0, tensions=None, cls=FlatPartition):
    """Rays from a centre vertex to the unit circle.  ``phases[k]`` is the
    phase of the sector between ray k and ray k+1 (counterclockwise)."""
    dom = DiscDomain(np.asarray(center, float), radius)
    n = len(angles_deg)
    order = np.argsort(np.asarray(angles_deg, float) % 360.0)
    angles = [float(angles_deg[q]) for q in order]
    ph = [phases[q] for q in order]
    P = max(phases)
    ten = tensions if tensions is not None else SurfaceTensionMatrix.equal(P)
    verts = [np.asarray(center, float)]
    segs = []
    for k, a in enumerate(angles):
        t = math.radians(a)
        verts.append(dom.center + radius * np.array([math.cos(t), math.sin(t)]))
        segs.append(Segment(0, k + 1, ph[k], ph[(k - 1) % n]))
    return cls(dom, ten, verts, segs)


def diameter(radius: float = 1.0) -> FlatPartition:
    dom = DiscDomain(np.zeros(2), radius)
    verts = [[-radius, 0.0], [radius, 0.0]]
    return FlatPartition(dom, SurfaceTensionMatrix.equal(2), verts, [Segment(0, 1, 1, 2)])


def symmetric_junction() -> FlatPartition:
    return star([90.0, 210.0, 330.0], [1, 2, 3])


def skewed_junction(angles_deg=(0.0, 90.0, 225.0)) -> FlatPartition:
    """Equal tensions with arbitrary sector angles (Herring fails unless 120 degrees)."""
    return star(list(angles_deg), [1, 2, 3])


def herring_angles(s_a: float, s_b: float, s_c: float):
    """Directions (radians) of three unit tangents weighted s_a, s_b, s_c that
    balance: s_a t_a + s_b t_b + s_c t_c = 0, with t_a at angle 0."""
    cab = (s_c ** 2 - s_a ** 2 - s_b ** 2) / (2 * s_a * s_b)
    cac = (s_b ** 2 - s_a ** 2 - s_c ** 2) / (2 * s_a * s_c)
    return 0.0, math.acos(cab), -math.acos(cac)


def asymmetric_junction(s12: float = 1.0, s23: float = 1.0, s31: float = math.sqrt(3.0)) -> FlatPartition:
    """Three-phase junction at the origin with unequal tensions and balanced
    Herring angles.  Ray a separates phases 3|1, ray b 1|2, ray c 2|3."""
    sig = np.array([[0, s12, s31], [s12, 0, s23], [s31, s23, 0]], dtype=float)
    ten = SurfaceTensionMatrix(sig)
    ta, tb, tc = herring_angles(s31, s12, s23)
    angles = [math.degrees(ta), math.degrees(tb), math.degrees(tc) % 360.0]
    # sectors counterclockwise: a -> b is phase 1, b -> c is phase 2, c -> a is phase 3
    return star(angles, [1, 2, 3], tensions=ten)


def hexagon_network(rho: float, outer_radius: float = 2.0) -> FlatPartition:
    """Regular hexagon of circumradius rho with six radial spokes; the inner
    hexagon is phase 1 and the outer sectors alternate 2, 3."""
    R = outer_radius
    dom = DiscDomain(np.zeros(2), R)
    verts, segs = [], []
    for k in range(6):
        t = math.radians(60.0 * k)
        verts.append([rho * math.cos(t), rho * math.sin(t)])
    for k in range(6):
        t = math.radians(60.0 * k)
        verts.append([R * math.cos(t), R * math.sin(t)])
    sector = [2 if k % 2 == 0 else 3 for k in range(6)]
    for k in range(6):
        segs.append(Segment(k, (k + 1) % 6, 1, sector[k]))
    for k in range(6):
        segs.append(Segment(k, 6 + k, sector[k], sector[(k - 1) % 6]))
    return FlatPartition(dom, SurfaceTensionMatrix.equal(3), verts, segs)


def four_phase(h: float = 0.3) -> FlatPartition:
    """Two junctions on the vertical axis joined by a 1|2 interface; phase 3
    on top and phase 4 at the bottom never meet."""
    dom = DiscDomain(np.zeros(2), 1.0)
    A = np.array([0.0, h])
    B = np.array([0.0, -h])

    def d(deg):
        t = math.radians(deg)
        return np.array([math.cos(t), math.sin(t)])

    verts = [A, B, _ray_to_circle(A, d(30), dom), _ray_to_circle(A, d(150), dom),
             _ray_to_circle(B, d(-30), dom), _ray_to_circle(B, d(210), dom)]
    segs = [Segment(0, 1, 2, 1),
            Segment(0, 2, 3, 2),
            Segment(0, 3, 1, 3),
            Segment(1, 4, 2, 4),
            Segment(1, 5, 4, 1)]
    return FlatPartition(dom, SurfaceTensionMatrix.equal(4), verts, segs)


def cross(cls=None):
    from .energy import PolygonalPartition
    return star([0.0, 90.0, 180.0, 270.0], [1, 2, 1, 2], cls=cls or PolygonalPartition)


def eight_star(cls=None):
    from .energy import PolygonalPartition
    return star([45.0 * k for k in range(8)], [1, 2] * 4, cls=cls or PolygonalPartition)


FLAT_FIXTURES = {
    "diameter": diameter,
    "junction": symmetric_junction,
    "hexagon": lambda: hexagon_network(0.6),
    "fourphase": four_phase,
}


def as_network(p: PlanarNetwork, cls):
    return cls(p.domain, p.tensions, p.vertices, p.segments)
