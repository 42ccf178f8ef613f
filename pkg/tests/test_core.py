import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochrr.core import PhysicalParams, complex_norm, lower, minkowski_dot, si_to_sim, unit_rapidity_velocity
from stochrr.errors import DomainError

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
vectors = arrays(np.float64, 4, elements=finite)


@pytest.mark.parametrize(
    "a, b, expected",
    [((1, 0, 0, 0), (1, 0, 0, 0), 1.0), ((0, 1, 0, 0), (0, 1, 0, 0), -1.0), ((1, 1, 0, 0), (1, 1, 0, 0), 0.0)],
)
def test_minkowski_dot_units(a, b, expected):
    assert minkowski_dot(np.array(a, float), np.array(b, float)) == expected


def test_metric_signature_on_basis():
    basis = np.eye(4)
    gram = minkowski_dot(basis[:, None, :], basis[None, :, :])
    np.testing.assert_array_equal(gram, np.diag([1.0, -1.0, -1.0, -1.0]))


@settings(max_examples=200, deadline=None)
@given(vectors, vectors, vectors, finite)
def test_minkowski_dot_symmetric_and_bilinear(a, b, c, s):
    assert minkowski_dot(a, b) == minkowski_dot(b, a)
    lhs = minkowski_dot(s * a + b, c)
    rhs = s * minkowski_dot(a, c) + minkowski_dot(b, c)
    scale = (abs(s) * np.abs(a) + np.abs(b)) @ np.abs(c) + 1.0
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_lower_flips_spatial_signs():
    np.testing.assert_array_equal(lower(np.array([1.0, 2, 3, 4])), [1.0, -2, -3, -4])


@pytest.mark.parametrize("a, expected", [((1, 0, 0, 0), 1.0), ((1j, 0, 0, 0), 1.0), ((0, 1 + 1j, 0, 0), -2.0)])
def test_complex_norm_examples(a, expected):
    assert complex_norm(np.array(a, complex)) == pytest.approx(expected, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(vectors, vectors)
def test_complex_norm_is_sum_of_real_and_imaginary_norms(re, im):
    a = re + 1j * im
    expected = minkowski_dot(re, re) + minkowski_dot(im, im)
    scale = np.sum(re * re + im * im) + 1.0
    assert abs(complex_norm(a) - expected) <= 1e-13 * scale
    value = minkowski_dot(np.conj(a), a)
    assert abs(value.imag) <= 1e-14 * scale


def test_unit_rapidity_velocity_is_on_shell():
    v = unit_rapidity_velocity(3.0, (1.0, 2.0, -1.0))
    assert v[0] == 3.0
    assert minkowski_dot(v, v) == pytest.approx(1.0, abs=1e-12)


def test_physical_params_lambda_and_independent_knobs():
    p = PhysicalParams(hbar_eff=0.09, tau0=1e-3)
    assert p.lambda_() == pytest.approx(0.3)
    assert PhysicalParams.from_lambda(0.3, tau0=2e-3).hbar_eff == pytest.approx(0.09)
    assert PhysicalParams(hbar_eff=0.0, tau0=5e-3).tau0 == 5e-3


@pytest.mark.parametrize("kwargs", [{"hbar_eff": -1.0}, {"tau0": -1.0}, {"m0": 0.0}])
def test_physical_params_rejects_unphysical(kwargs):
    with pytest.raises(DomainError):
        PhysicalParams(**kwargs)


def test_si_to_sim_reference_point():
    # frozen from an independent evaluation of e sqrt(2I/eps0 c) / (m c omega) with CODATA constants
    a0, gamma = si_to_sim(1e22, 600.0, 0.8)
    assert a0 == pytest.approx(68.394376, rel=1e-6)
    assert gamma == pytest.approx(1174.17071, rel=1e-7)


def test_si_to_sim_square_root_law_and_rest_energy():
    a1, _ = si_to_sim(1e20, 100.0, 0.8)
    a4, _ = si_to_sim(4e20, 100.0, 0.8)
    assert a4 / a1 == pytest.approx(2.0, rel=1e-12)
    assert si_to_sim(1e20, 0.51099895069, 0.8)[1] == pytest.approx(1.0, rel=1e-12)
    assert si_to_sim(1e20, 0.511, 0.8)[1] == pytest.approx(1.0, rel=1e-5)


@pytest.mark.parametrize("args", [(0.0, 1.0, 0.8), (1e20, -1.0, 0.8), (1e20, 1.0, 0.0)])
def test_si_to_sim_rejects_non_positive(args):
    with pytest.raises(DomainError):
        si_to_sim(*args)
