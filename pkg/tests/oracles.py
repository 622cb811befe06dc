"""Independent reference computations used to freeze expected values.

Each oracle avoids the package code path it checks: plain loops, closed
forms, or brute-force sampling.
"""
import math

import numpy as np


def pairwise_distances(points):
    q = np.asarray(points, float)
    n = len(q)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            out[i, j] = math.sqrt(sum((q[i, k] - q[j, k]) ** 2 for k in range(q.shape[1])))
    return out


def herring_vector_sum(angles_deg, weights=(1.0, 1.0, 1.0)):
    """|sum_k w_k (cos a_k, sin a_k)| by brute force."""
    x = sum(w * math.cos(math.radians(a)) for a, w in zip(angles_deg, weights))
    y = sum(w * math.sin(math.radians(a)) for a, w in zip(angles_deg, weights))
    return math.hypot(x, y)


def fermat_tree_length(x, a, b, iters=4000):
    """Length of the shortest tree joining three points (Weiszfeld iteration,
    falling back to the two-edge tree when an angle is at least 120 degrees)."""
    P = [np.asarray(v, float) for v in (x, a, b)]
    best = min(
        np.linalg.norm(P[1] - P[0]) + np.linalg.norm(P[2] - P[0]),
        np.linalg.norm(P[0] - P[1]) + np.linalg.norm(P[2] - P[1]),
        np.linalg.norm(P[0] - P[2]) + np.linalg.norm(P[1] - P[2]),
    )
    y = sum(P) / 3.0
    for _ in range(iters):
        w = [1.0 / max(np.linalg.norm(y - v), 1e-300) for v in P]
        y = sum(wi * v for wi, v in zip(w, P)) / sum(w)
    return min(best, sum(np.linalg.norm(y - v) for v in P))


def length_in_ball_sampled(segments, x, r, n=200001):
    """Length of a set of segments inside B_r(x) from dense midpoint sampling."""
    x = np.asarray(x, float)
    tot = 0.0
    for a, b in segments:
        a, b = np.asarray(a, float), np.asarray(b, float)
        t = (np.arange(n) + 0.5) / n
        pts = a + t[:, None] * (b - a)
        tot += np.linalg.norm(b - a) * np.mean(np.linalg.norm(pts - x, axis=1) < r)
    return tot


def hexagon_length(rho, R):
    """Six spokes of length R - rho plus six hexagon sides of length rho."""
    return 6.0 * (R - rho) + 6.0 * rho


def smoothstep_on_quarter(s):
    """Quintic smoothstep rescaled from [1/4, 3/4] to [0, 1], written out directly."""
    s = float(s)
    if s <= 0.25:
        return 0.0
    if s >= 0.75:
        return 1.0
    t = (s - 0.25) * 2.0
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def analytic_delta_prime(delta, min_half_angle, safety=0.9):
    """Closed-form slab-in-wedge bound for straight wedges."""
    return safety * min(delta, math.sqrt(7.0) / 4.0, math.tan(min_half_angle) / 4.0)


def point_segment_distance(x, a, b):
    x, a, b = (np.asarray(v, float) for v in (x, a, b))
    best = min(np.linalg.norm(x - a), np.linalg.norm(x - b))
    d = b - a
    L2 = float(d @ d)
    if L2 > 0:
        t = float((x - a) @ d) / L2
        if 0 <= t <= 1:
            best = min(best, np.linalg.norm(x - (a + t * d)))
    return float(best)
