import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibnet.fixtures import (FLAT_FIXTURES, cross, diameter, four_phase, hexagon_network, skewed_junction,
                               star, symmetric_junction)
from calibnet.geometry import DiscDomain, InvalidNetwork, PlanarNetwork, Segment, segment_distance
from calibnet.partition import (FlatPartition, LocalizationScales, audit_scales, decompose_features,
                                dumbbell_contains, find_localization_scales, herring_residual,
                                validate_flat_partition, validate_scales)
from calibnet.tensions import SurfaceTensionMatrix
from oracles import herring_vector_sum, point_segment_distance


@pytest.mark.parametrize("name", sorted(FLAT_FIXTURES))
def test_fixtures_validate(name):
    rep = validate_flat_partition(FLAT_FIXTURES[name]())
    assert rep.valid, rep.to_json()
    assert rep.face_area_error <= 1e-12


def test_herring_residual_matches_vector_sum():
    for angles in [(0, 90, 225), (0, 100, 230), (10, 130, 245), (0, 120, 240)]:
        p = skewed_junction(angles)
        assert herring_residual(p, 0) == pytest.approx(herring_vector_sum(angles), abs=1e-12)


def test_herring_violation_reported_in_clause_iii():
    rep = validate_flat_partition(skewed_junction((0, 90, 225)))
    assert not rep.valid
    assert rep.clauses() == {"iii"}
    assert rep.herring[0] == pytest.approx(math.sqrt(2) - 1, abs=1e-12)


def test_cross_is_not_regular():
    rep = validate_flat_partition(cross(FlatPartition))
    assert "iii" in rep.clauses()


def test_crossing_segments_detected():
    dom = DiscDomain(np.zeros(2), 1.0)
    verts = [[-1, 0], [1, 0], [0, -1], [0, 1]]
    p = FlatPartition(dom, SurfaceTensionMatrix.equal(2), verts, [Segment(0, 1, 1, 2), Segment(2, 3, 1, 2)])
    assert "iii" in validate_flat_partition(p).clauses()


def test_dangling_segment_detected():
    dom = DiscDomain(np.zeros(2), 1.0)
    p = FlatPartition(dom, SurfaceTensionMatrix.equal(2), [[-1, 0], [0, 0]], [Segment(0, 1, 1, 2)])
    rep = validate_flat_partition(p)
    assert any("dangling" in v.message for v in rep.violations)


def test_same_phase_both_sides_detected():
    dom = DiscDomain(np.zeros(2), 1.0)
    p = FlatPartition(dom, SurfaceTensionMatrix.equal(2), [[-1, 0], [1, 0]], [Segment(0, 1, 1, 1)])
    assert "i" in validate_flat_partition(p).clauses()


def test_inconsistent_labels_detected():
    p = symmetric_junction()
    segs = list(p.segments)
    s = segs[0]
    segs[0] = Segment(s.a, s.b, s.right, s.left)
    q = FlatPartition(p.domain, p.tensions, p.vertices, segs)
    assert not validate_flat_partition(q).valid


def test_inadmissible_tensions_reported():
    p = symmetric_junction()
    ten = SurfaceTensionMatrix(np.array([[0, 1, 1], [1, 0, 2], [1, 2, 0.0]]))
    q = FlatPartition(p.domain, ten, p.vertices, p.segments)
    assert "tensions" in validate_flat_partition(q).clauses()


def test_json_validation_errors():
    with pytest.raises(InvalidNetwork):
        FlatPartition.from_json({"domain": {"center": [0, 0], "radius": 1}})
    obj = diameter().to_json()
    obj["segments"][0]["a"] = 99
    with pytest.raises(InvalidNetwork):
        FlatPartition.from_json(obj)
    obj = diameter().to_json()
    obj["segments"][0]["left"] = 5
    with pytest.raises(InvalidNetwork):
        FlatPartition.from_json(obj)


def test_json_round_trip_preserves_geometry():
    p = hexagon_network(0.6)
    q = FlatPartition.from_json(p.to_json())
    assert np.array_equal(q.vertices, p.vertices)
    assert q.segments == p.segments


def test_phase_areas():
    d = diameter()
    assert d.phase_areas() == pytest.approx({1: math.pi / 2, 2: math.pi / 2}, abs=1e-12)
    h = hexagon_network(0.6)
    inner = 1.5 * math.sqrt(3) * 0.36
    areas = h.phase_areas()
    assert min(areas.values()) == pytest.approx(inner, abs=1e-12)
    assert sum(areas.values()) == pytest.approx(4 * math.pi, abs=1e-12)


def test_four_phase_areas_against_grid_count():
    p = four_phase()
    n = 801
    g = np.linspace(-1, 1, n)
    X = np.array([(x, y) for y in g for x in g])
    X = X[np.hypot(X[:, 0], X[:, 1]) < 1]
    lab = p.locate(X)
    cell = (g[1] - g[0]) ** 2
    for i, a in p.phase_areas().items():
        assert np.sum(lab == i) * cell == pytest.approx(a, abs=5e-3)


def test_locate_on_diameter():
    p = diameter()
    lab = p.locate(np.array([[0, 0.5], [0, -0.5]]))
    assert set(lab) == {1, 2}


def test_features():
    f = decompose_features(four_phase())
    assert len(f.junctions_P) == 2 and len(f.boundary_B) == 4 and len(f.segments_C) == 5
    assert f.presence[("c", 0)] == frozenset({1, 2})


def test_scale_values():
    # r_bar = 0.9 min(d_min / 4, R / 2, 1); delta starts at 1/2
    assert find_localization_scales(diameter()) == LocalizationScales(0.45, 0.5)
    s = find_localization_scales(symmetric_junction())
    assert s.r_bar == pytest.approx(0.225)
    s = find_localization_scales(four_phase())
    assert s.r_bar == pytest.approx(0.9 * 0.6 / 4)


@pytest.mark.parametrize("name", sorted(FLAT_FIXTURES))
def test_scales_admissible_and_audited(name):
    p = FLAT_FIXTURES[name]()
    s = find_localization_scales(p)
    assert validate_scales(p, s) == []
    assert audit_scales(p, s, n=300, seed=1) == []


def test_oversized_scale_rejected():
    p = four_phase()
    assert validate_scales(p, LocalizationScales(0.5, 0.5))


def test_dumbbell_membership():
    p = symmetric_junction()
    s = find_localization_scales(p)
    X = np.array([[0.0, 0.0], [0.01, 0.5], [0.4, 0.5], [0.2, 0.0]])
    got = dumbbell_contains(p, s, "network", X)
    # rays at 90, 210 and 330 degrees; r_bar = 0.225, tube half-width delta r_bar
    assert got.tolist() == [True, True, False, True]
    far = dumbbell_contains(p, s, "network", np.array([[0.2, 0.0]]), r=0.1)
    assert not far[0]


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_segment_distance_matches_brute_force(x, y, ax, ay, bx, by):
    d = segment_distance(np.array([[x, y]]), np.array([ax, ay]), np.array([bx, by]))[0][0]
    assert d == pytest.approx(point_segment_distance((x, y), (ax, ay), (bx, by)), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 360, exclude_max=True), min_size=3, max_size=6, unique=True))
def test_star_faces_tile_disc(angles):
    angles = sorted(angles)
    gaps = np.diff(angles + [angles[0] + 360])
    if gaps.min() < 1.0:
        return
    n = len(angles)
    phases = [1 + k % 2 for k in range(n)] if n % 2 == 0 else [1 + k % 3 for k in range(n)]
    if phases[-1] == phases[0]:
        return
    p = star(angles, phases, tensions=SurfaceTensionMatrix.equal(max(phases)), cls=PlanarNetwork)
    assert sum(f.area for f in p.faces) == pytest.approx(math.pi, abs=1e-12)
