import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from calibnet.calibration import (CalibrationError, CalibrationField, SamplingConfig, analytic_delta_prime,
                                  build_aux_vectors, build_calibration, dtheta, theta, verify_aux_vectors,
                                  verify_calibration)
from calibnet.fixtures import asymmetric_junction, diameter, skewed_junction, symmetric_junction
from calibnet.io import dumps
from calibnet.partition import FlatPartition
from conftest import field_for, flat_fixture
import oracles

# frozen from the oracles: delta' = 0.9 min(delta, sqrt(7)/4, tan(min half wedge angle)/4)
# with delta = 0.405 for the junction fixtures and 0.5 for the diameter
EXPECTED_DELTA_PRIME = {
    "diameter": 0.5,
    "junction": oracles.analytic_delta_prime(0.405, math.pi / 3),
    "hexagon": oracles.analytic_delta_prime(0.405, math.pi / 3),
    "fourphase": oracles.analytic_delta_prime(0.405, math.pi / 3),
}
# largest |xi_i - xi_j| / sigma_ij over auxiliary vector pairs that are not
# interface pairs of the feature: 0 (two phases), 1/2 (equal triple
# junction), 1/sqrt(3) (absent-phase pair), sqrt(3)/2 (asymmetric junction)
EXPECTED_DELTA1_AUX = {"diameter": 0.0, "junction": 0.5, "hexagon": 0.5, "fourphase": 1 / math.sqrt(3)}


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 2))
def test_theta_matches_smoothstep(s):
    assert float(theta(s)) == pytest.approx(1.0 - oracles.smoothstep_on_quarter(s), abs=1e-14)


def test_theta_derivative():
    s = np.linspace(0, 1, 100001)
    d = dtheta(s)
    fd = np.gradient(theta(s), s)
    assert np.max(np.abs(d - fd)) < 1e-3
    assert np.max(np.abs(d)) == pytest.approx(3.75, abs=1e-6)
    assert np.allclose(theta(1 - s), 1 - theta(s), atol=1e-14)


@pytest.mark.parametrize("name", sorted(EXPECTED_DELTA_PRIME))
def test_delta_prime_against_oracle(name):
    fld = field_for(name)
    assert fld.delta_prime == pytest.approx(EXPECTED_DELTA_PRIME[name], rel=1e-9)


def test_delta_prime_asymmetric_junction():
    p = asymmetric_junction()
    fld = build_calibration(p)
    # Herring angles for sigma = (1, 1, sqrt 3): sector gaps 150, 105, 105 degrees; min half gap 30 degrees
    assert fld.delta_prime == pytest.approx(oracles.analytic_delta_prime(0.405, math.pi / 6), rel=1e-9)
    assert fld.delta_prime == pytest.approx(analytic_delta_prime(p, fld.scales, fld.wedges), rel=1e-9)
    assert fld.aux.delta1 == pytest.approx(math.sqrt(3) / 2, abs=1e-12)


@pytest.mark.parametrize("name", sorted(EXPECTED_DELTA1_AUX))
def test_aux_vectors(name):
    p = flat_fixture(name)
    aux = build_aux_vectors(p)
    assert aux.calibration_residual <= 1e-12
    assert aux.delta1 == pytest.approx(EXPECTED_DELTA1_AUX[name], abs=1e-12)
    verify_aux_vectors(aux, p)


def test_symmetric_junction_vectors_have_norm_one_over_sqrt3():
    aux = build_aux_vectors(symmetric_junction())
    assert np.allclose(np.linalg.norm(aux.jun[0], axis=1), 1 / math.sqrt(3), atol=1e-12)
    assert np.allclose(aux.jun[0].sum(axis=0), 0, atol=1e-12)


def test_segment_vectors_on_diameter():
    p = diameter()
    aux = build_aux_vectors(p)
    nu = p.normal(0, 1, 2)
    v = aux.seg[0]
    assert np.allclose(v[0] - v[1], nu, atol=1e-15)
    assert np.allclose(v[0] + v[1], 0, atol=1e-15)


def test_non_regular_partition_rejected():
    with pytest.raises(CalibrationError):
        build_calibration(skewed_junction())


@pytest.mark.parametrize("name", ["diameter", "junction", "fourphase"])
def test_interface_identity(name):
    fld = field_for(name)
    p = fld.partition
    for k in range(len(p.segments)):
        a, b = p.seg_points(k)
        t = np.linspace(0, 1, 201)[1:-1]
        X = a + t[:, None] * (b - a)
        xi = fld.xi(X)
        s = p.segments[k]
        i, j = s.left, s.right
        want = p.tensions(i, j) * p.normal(k, i, j)
        # xi_i - xi_j = sigma_ij n_ij with n_ij pointing from i into j
        assert np.max(np.abs(xi[:, i - 1] - xi[:, j - 1] - want)) <= 1e-12


@pytest.mark.parametrize("name", ["diameter", "junction", "hexagon", "fourphase"])
@settings(max_examples=25, deadline=None)
@given(data=st.data())
def test_global_shortness_property(name, data):
    fld = field_for(name)
    p = fld.partition
    rng = np.random.default_rng(data.draw(st.integers(0, 2 ** 32 - 1)))
    R = p.domain.radius
    X = p.domain.center + rng.uniform(-R, R, (400, 2))
    X = X[p.domain.contains(X)]
    xi = fld.xi(X)
    for i in p.phases:
        for j in p.phases:
            if i < j:
                ratio = np.linalg.norm(xi[:, i - 1] - xi[:, j - 1], axis=1) / p.tensions(i, j)
                assert ratio.max() <= 1 + 1e-9


def test_zero_outside_support():
    fld = field_for("junction")
    X = np.array([[0.6, 0.6], [-0.5, 0.5], [0.1, -0.7]])
    assert not fld.support_mask(X).any()
    assert np.all(fld.xi(X) == 0.0)


@pytest.mark.parametrize("name", ["junction", "hexagon", "fourphase"])
def test_flux_difference_vanishes_in_thin_strip(name):
    fld = field_for(name)
    p = fld.partition
    rng = np.random.default_rng(3)
    eps = 1e-3 * fld.scales.r_bar
    for k in range(len(p.segments)):
        a, b = p.seg_points(k)
        t = rng.uniform(0.05, 0.95, 200)
        X = a + t[:, None] * (b - a) + rng.uniform(-eps, eps, (200, 1)) * p.left_normal(k)
        dv = fld.divergence(X)
        sk = p.segments[k]
        assert np.max(np.abs(dv[:, sk.left - 1] - dv[:, sk.right - 1])) <= 10 * 1e-5 * fld.scales.r_bar


def test_verify_diameter_passes():
    rep = verify_calibration(field_for("diameter"))
    assert rep.passed, rep.failures
    assert rep.to_json()["status"] == "PASSED"


def test_fault_injection_fails_with_witness():
    p = symmetric_junction()
    fld = build_calibration(p, fault=(1, np.array([0.5, 0.0])))
    rep = verify_calibration(fld, SamplingConfig(n_outside=2000))
    assert not rep.passed
    w = rep.failures[0]
    assert len(w["point"]) == 2 and w["property"] in ("i", "ii", "iii", "iv")


def test_json_round_trip_reproduces_field():
    fld = field_for("fourphase")
    back = CalibrationField.from_json(fld.to_json())
    X = np.random.default_rng(0).uniform(-0.9, 0.9, (300, 2))
    assert np.array_equal(back.xi(X), fld.xi(X))
    assert dumps(back.to_json()) == dumps(fld.to_json())


def test_delta_prime_out_of_range_rejected():
    p = diameter()
    with pytest.raises(CalibrationError):
        build_calibration(p, delta_prime=2.0)


def test_asymmetric_junction_verifies():
    rep = verify_calibration(build_calibration(asymmetric_junction()), SamplingConfig(n_outside=3000))
    assert rep.passed, rep.failures


def test_flat_partition_reload_keeps_class():
    assert isinstance(FlatPartition.from_json(diameter().to_json()), FlatPartition)
