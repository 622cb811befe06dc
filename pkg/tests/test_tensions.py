import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibnet.tensions import (MalformedTensions, NotAdmissible, SurfaceTensionMatrix, check_strict_triangle,
                               embed_simplex, gram_matrix, is_admissible)
from oracles import pairwise_distances


def test_equal_tensions_embed_as_regular_simplex():
    emb = embed_simplex(SurfaceTensionMatrix.equal(4))
    d = pairwise_distances(emb.points)
    assert np.allclose(d, np.ones((4, 4)) - np.eye(4), atol=1e-12)
    assert np.allclose(emb.points[0], 0.0)


def test_degenerate_collinear_matrix_rejected():
    sig = SurfaceTensionMatrix(np.array([[0, 1, 1], [1, 0, 2], [1, 2, 0.0]]))
    with pytest.raises(NotAdmissible) as exc:
        embed_simplex(sig)
    assert exc.value.eigenvalue <= 1e-10
    assert (2, 3, 1) in check_strict_triangle(sig)
    assert not is_admissible(sig)


def test_triangle_violation_rejected():
    sig = SurfaceTensionMatrix(np.array([[0, 1, 1], [1, 0, 3], [1, 3, 0.0]]))
    assert not is_admissible(sig)


def test_triangle_but_not_euclidean_rejected():
    # all triangles strict, yet no Euclidean embedding: K_{1,3} tree-like metric
    s = np.array([[0, 1, 1, 1], [1, 0, 1.99, 1.99], [1, 1.99, 0, 1.99], [1, 1.99, 1.99, 0]])
    sig = SurfaceTensionMatrix(s)
    assert check_strict_triangle(sig) == []
    assert not is_admissible(sig)


@pytest.mark.parametrize("bad, index", [
    ([[0, 1], [2, 0]], (1, 2)),
    ([[0, -1], [-1, 0]], (1, 2)),
    ([[1, 1], [1, 0]], (1, 1)),
    ([[0, float("nan")], [1, 0]], (1, 2)),
])
def test_malformed_matrices(bad, index):
    with pytest.raises(MalformedTensions) as exc:
        SurfaceTensionMatrix(np.array(bad, float))
    assert exc.value.index == index


def test_malformed_shape_and_json():
    with pytest.raises(MalformedTensions):
        SurfaceTensionMatrix(np.zeros((2, 3)))
    with pytest.raises(MalformedTensions):
        SurfaceTensionMatrix(np.zeros((1, 1)))
    with pytest.raises(MalformedTensions):
        SurfaceTensionMatrix.from_json({"P": 3, "sigma": [[0, 1], [1, 0]]})
    with pytest.raises(MalformedTensions):
        SurfaceTensionMatrix.from_json({"P": 2})


def test_json_round_trip():
    sig = SurfaceTensionMatrix(np.array([[0, 1, 1.5], [1, 0, 1.2], [1.5, 1.2, 0]]))
    back = SurfaceTensionMatrix.from_json(sig.to_json())
    assert np.array_equal(back.sigma, sig.sigma)
    assert sig(1, 3) == 1.5


def test_gram_matrix_formula():
    pts = np.array([[0, 0], [1, 0], [0.3, 0.8]])
    sig = SurfaceTensionMatrix.from_points(pts)
    G = gram_matrix(sig)
    assert np.allclose(G, pts[1:] @ pts[1:].T, atol=1e-12)


points = st.integers(2, 8).flatmap(lambda P: st.lists(
    st.lists(st.floats(-3, 3, allow_nan=False), min_size=P - 1, max_size=P - 1), min_size=P, max_size=P))


def _well_spread(q):
    q = np.asarray(q, float)
    Q = q[1:] - q[0]
    s = np.linalg.svd(Q, compute_uv=False)
    return s.min() > 0.2 and pairwise_distances(q)[~np.eye(len(q), dtype=bool)].min() > 0.2


@settings(max_examples=60, deadline=None)
@given(points)
def test_embedding_reproduces_distances(q):
    if not _well_spread(q):
        return
    sig = SurfaceTensionMatrix.from_points(q)
    emb = embed_simplex(sig)
    assert np.max(np.abs(pairwise_distances(emb.points) - sig.sigma)) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(points, st.floats(0.1, 10))
def test_admissibility_scale_and_permutation_invariant(q, c):
    if not _well_spread(q):
        return
    sig = SurfaceTensionMatrix.from_points(q)
    perm = np.arange(sig.P)[::-1]
    assert is_admissible(SurfaceTensionMatrix(c * sig.sigma))
    assert is_admissible(SurfaceTensionMatrix(sig.sigma[np.ix_(perm, perm)]))
