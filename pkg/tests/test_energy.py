import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibnet.competitors import PerturbationSpec, perturb, rng_for, square_nucleus
from calibnet.energy import (InvalidCompetitor, PolygonalPartition, QuadratureConfig, adaptive_gl, as_polygonal,
                             interface_energy, l1_distance, physical_energy, relative_energy, same_trace,
                             trace_label, verify_energy_identity)
from calibnet.fixtures import cross, diameter, hexagon_network, symmetric_junction
from calibnet.geometry import Segment
from conftest import field_for, flat_fixture
import oracles


def test_physical_energies():
    assert physical_energy(diameter()) == pytest.approx(2.0, abs=1e-14)
    assert physical_energy(symmetric_junction()) == pytest.approx(3.0, abs=1e-14)
    assert physical_energy(hexagon_network(0.6)) == pytest.approx(oracles.hexagon_length(0.6, 2.0), abs=1e-12)
    assert interface_energy(diameter()) == pytest.approx(2 * interface_energy(diameter(), ordered=False))


def test_bump_energy_and_l1_closed_form():
    # a triangular bump of height a on base 2a: legs 2 sqrt(2) a replace 2a; area a^2
    p = diameter()
    a = 0.05
    q = perturb(p, PerturbationSpec(a, "interface-bump", seed=1))
    assert physical_energy(q) - physical_energy(p) == pytest.approx((2 * math.sqrt(2) - 2) * a, abs=1e-14)
    l1 = l1_distance(q, p)
    assert l1[1] == pytest.approx(a * a, abs=1e-14)
    assert l1[2] == pytest.approx(a * a, abs=1e-14)


def test_nucleus_energy_and_l1():
    p = diameter()
    q = square_nucleus(p, (0.0, 0.5), 0.1, 2, angle=0.3)
    assert physical_energy(q) - 2.0 == pytest.approx(0.4, abs=1e-14)
    l1 = l1_distance(q, p)
    assert l1 == pytest.approx({1: 0.01, 2: 0.01}, abs=1e-14)
    assert same_trace(q, p)


def test_nucleus_requires_foreign_phase():
    p = diameter()
    host = int(p.locate(np.array([[0.0, 0.5]]))[0])
    with pytest.raises(ValueError):
        square_nucleus(p, (0.0, 0.5), 0.1, host)


def test_trace_changes_detected():
    p = diameter()
    V = np.array(p.vertices)
    b = [v for v in range(len(V)) if p.is_boundary_vertex(v)][0]
    ang = math.atan2(V[b, 1], V[b, 0]) + 0.1
    V[b] = [math.cos(ang), math.sin(ang)]
    q = PolygonalPartition(p.domain, p.tensions, V, p.segments)
    assert not same_trace(q, p)
    assert same_trace(as_polygonal(p), p)


def test_trace_label_on_diameter():
    p = diameter()
    lab = trace_label(p, np.array([math.pi / 2, 3 * math.pi / 2]))
    assert set(lab.tolist()) == {1, 2}


def test_crossing_competitor_invalid():
    p = diameter()
    verts = list(p.vertices) + [np.array([0.0, -0.5]), np.array([0.0, 0.5])]
    n = len(p.vertices)
    q = PolygonalPartition(p.domain, p.tensions, verts,
                           list(p.segments) + [Segment(n, n + 1, 1, 2), Segment(n + 1, n, 1, 2)])
    assert q.validation_errors()
    with pytest.raises(InvalidCompetitor):
        q.check()


def test_cross_is_a_valid_competitor_geometry():
    assert cross().validation_errors() == []


@pytest.mark.parametrize("f, a, b, exact", [
    (lambda s: s ** 7, 0.0, 1.0, 1 / 8),
    (np.sin, 0.0, math.pi, 2.0),
    (lambda s: np.sqrt(s), 0.0, 1.0, 2 / 3),
    (lambda s: np.exp(-s * s), -3.0, 3.0, math.sqrt(math.pi) * math.erf(3.0)),
])
def test_adaptive_gauss_legendre(f, a, b, exact):
    assert adaptive_gl(f, a, b) == pytest.approx(exact, abs=1e-12)


def test_identity_trivial_competitor_is_exact():
    fld = field_for("junction")
    rep = verify_energy_identity(as_polygonal(fld.partition), fld)
    assert rep.identity_residual == 0.0
    assert abs(rep.relative_energy) <= 1e-14
    assert rep.bulk_term == 0.0 and rep.boundary_term == 0.0


def test_identity_exact_where_bulk_vanishes():
    fld = field_for("diameter")
    q = perturb(fld.partition, PerturbationSpec(0.05, "interface-bump", seed=1))
    rep = verify_energy_identity(q, fld)
    assert rep.identity_residual <= 1e-14
    assert rep.relative_energy == pytest.approx(2 * (2 * math.sqrt(2) - 2) * 0.05, abs=1e-13)


def test_identity_first_order_in_h():
    fld = field_for("junction")
    p = fld.partition
    h0 = fld.delta_prime * fld.scales.r_bar / 20
    res = []
    for t in range(0, 24, 4):
        amp = fld.delta_prime * fld.scales.r_bar * rng_for(7, t, 999).uniform(0.5, 1.0)
        q = perturb(p, PerturbationSpec(amp, "vertex-jitter", 7, 3, t))
        res.append([verify_energy_identity(q, fld, QuadratureConfig(h=h0 / 2 ** k)).identity_residual
                    for k in range(3)])
    S = np.sum(res, axis=0)
    assert S[0] > 0
    assert 0.3 <= S[1] / S[0] <= 0.7
    assert 0.3 <= S[2] / S[1] <= 0.7


def test_both_bulk_rules_close_the_identity():
    fld = field_for("junction")
    amp = fld.delta_prime * fld.scales.r_bar
    q = perturb(fld.partition, PerturbationSpec(amp, "vertex-jitter", 7, 3, 0))
    for rule in ("node", "midpoint"):
        rep = verify_energy_identity(q, fld, QuadratureConfig(rule=rule))
        assert rep.identity_residual <= 0.1 * rep.relative_energy


def test_relative_energy_vanishes_on_reference():
    fld = field_for("fourphase")
    assert relative_energy(fld.partition, fld) == pytest.approx(0.0, abs=1e-12)


def test_report_json_fields():
    fld = field_for("diameter")
    q = perturb(fld.partition, PerturbationSpec(0.05, "interface-bump", seed=1))
    js = verify_energy_identity(q, fld).to_json()
    for key in ("E_competitor", "E_reference", "relative_energy", "bulk_term", "boundary_term",
                "identity_residual", "quadrature"):
        assert key in js


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["junction", "fourphase"]), st.integers(0, 10_000),
       st.sampled_from(["vertex-jitter", "interface-bump", "phase-nucleation", "junction-slide"]))
def test_relative_energy_nonnegative(name, trial, mode):
    fld = field_for(name)
    p = flat_fixture(name)
    q = perturb(p, PerturbationSpec(0.05 * fld.scales.r_bar, mode, 3, 3, trial))
    assert relative_energy(q, fld) >= -1e-12
    assert same_trace(q, p)
    assert l1_distance(q, p) == pytest.approx(l1_distance(p, q), abs=1e-12)
