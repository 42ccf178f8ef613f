import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

import oracles
from stochrr.core import PhysicalParams, unit_rapidity_velocity
from stochrr.errors import ConvergenceError, DomainError
from stochrr.fields import ConstantCrossed
from stochrr.qfactor import (
    DEFAULT_QUADRATURE,
    Q_TABLE_HEADER,
    ChiParams,
    QuadratureSpec,
    bessel_k,
    compute_chi,
    emit_q_table,
    q_full,
    q_sqed,
    write_q_table,
)

ORDERS = (1.0 / 3.0, 2.0 / 3.0, 5.0 / 3.0)


def test_bessel_k_two_thirds_at_one():
    # integral representation evaluated to 13 digits by adaptive quadrature
    assert bessel_k(2.0 / 3.0, 1.0) == pytest.approx(0.4944750621042083, rel=1e-12)


@pytest.mark.parametrize("nu", ORDERS)
def test_bessel_k_against_integral_representation(nu):
    xs = np.logspace(-6, np.log10(700.0), 100)
    ours = bessel_k(nu, xs)
    ref = np.array([oracles.bessel_k_integral(nu, x) for x in xs])
    assert np.all(ours > 0)
    np.testing.assert_allclose(ours, ref, rtol=1e-10, atol=0)


@pytest.mark.parametrize("nu", ORDERS)
def test_bessel_k_large_argument_asymptotics(nu):
    x = 100.0
    mu = 4 * nu * nu
    series = 1 + (mu - 1) / (8 * x) + (mu - 1) * (mu - 9) / (2 * (8 * x) ** 2)
    ratio = bessel_k(nu, x) * np.exp(x) * np.sqrt(2 * x / np.pi)
    assert ratio / series == pytest.approx(1.0, abs=1e-6)
    # the leading term alone is only good to (4 nu^2 - 1) / 8x
    assert abs(ratio - 1) < abs(mu - 1) / (8 * x) * 1.01


def test_bessel_k_recurrence():
    xs = np.logspace(-3, 2, 40)
    lhs = bessel_k(5.0 / 3.0, xs)
    rhs = bessel_k(1.0 / 3.0, xs) + 4.0 / (3.0 * xs) * bessel_k(2.0 / 3.0, xs)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9)


def test_bessel_k_underflows_past_the_double_range():
    assert bessel_k(5.0 / 3.0, 800.0) == 0.0


@pytest.mark.parametrize("x", [0.0, -1.0, np.nan])
def test_bessel_k_rejects_non_positive(x):
    with pytest.raises(DomainError):
        bessel_k(1.0 / 3.0, x)


def test_normalisation_integral():
    val, _ = integrate.quad(lambda s: s * s * special.kv(5.0 / 3.0, s) / 2, 0, np.inf, epsabs=1e-13, limit=200)
    assert val == pytest.approx(8 * np.pi / (9 * np.sqrt(3)), rel=1e-12)


def test_q_at_zero_is_one():
    assert q_full(0.0) == pytest.approx(1.0, abs=1e-4)
    assert q_sqed(0.0) == pytest.approx(1.0, abs=1e-4)
    assert q_full(1e-6) == pytest.approx(1.0, abs=5e-4)


@pytest.mark.parametrize("chi", [1e-6, 0.01, 0.1, 0.73068, 1.0, 10.0, 100.0])
def test_q_matches_nested_integral(chi):
    assert q_full(chi) == pytest.approx(oracles.q_nested(chi), abs=1e-9)
    assert q_sqed(chi) == pytest.approx(oracles.q_nested(chi, recoil=False), abs=1e-9)


def test_recoil_term_at_chi_one():
    # frozen from the nested-integral oracle
    assert q_full(1.0) - q_sqed(1.0) == pytest.approx(0.0343000760840913, abs=1e-9)


def test_q_strictly_decreasing_on_decades():
    values = [q_full(c) for c in (0.01, 0.1, 1.0, 10.0)]
    assert all(a > b for a, b in zip(values, values[1:]))


def test_q_range_and_monotonicity_on_log_grid():
    chis = np.concatenate([[0.0], np.logspace(-3, 2, 50)])
    full = np.array([q_full(c) for c in chis])
    sqed = np.array([q_sqed(c) for c in chis])
    for q in (full, sqed):
        assert np.all((q > 0) & (q <= 1 + 1e-9))
        assert np.all(np.diff(q) < 0)
    assert np.all(sqed <= full)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 100.0, allow_nan=False))
def test_sqed_never_exceeds_full(chi):
    assert q_sqed(chi) <= q_full(chi) + 1e-15


def test_quadrature_refinement_gate():
    coarse = QuadratureSpec(check=False)
    fine = QuadratureSpec(panels=2 * coarse.panels, check=False)
    for chi in (0.0, 0.01, 1.0, 10.0):
        assert abs(q_full(chi, coarse) - q_full(chi, fine)) < 1e-6


def test_quadrature_non_convergence_raises():
    with pytest.raises(ConvergenceError):
        q_full(1.0, QuadratureSpec(panels=1, order=2))


@pytest.mark.parametrize("chi", [-1.0, np.inf, np.nan])
def test_q_rejects_bad_chi(chi):
    with pytest.raises(DomainError):
        q_full(chi)


def test_chi_reference_point():
    chi = compute_chi(ChiParams.from_si(1e22, 600.0, 0.8))
    assert chi == pytest.approx(oracles.chi_head_on(1e22, 600.0, 0.8), rel=1e-9)
    assert compute_chi(ChiParams.from_si(1e22, 600.0, 0.8), "qed") == pytest.approx(chi * 2 / 3)


def test_chi_zero_field():
    params = ChiParams(np.zeros((4, 4)), unit_rapidity_velocity(3.0, (0, 0, -1)), PhysicalParams(hbar_eff=1e-6))
    assert compute_chi(params) == 0.0


def test_chi_scales_with_energy_and_intensity():
    base = compute_chi(ChiParams.from_si(1e21, 300.0, 0.8))
    faster = compute_chi(ChiParams.from_si(1e21, 600.0, 0.8))
    brighter = compute_chi(ChiParams.from_si(4e21, 300.0, 0.8))
    g1, g2 = 300.0 / 0.51099895069, 600.0 / 0.51099895069
    head_on = lambda g: g * (1 + np.sqrt(1 - 1 / g**2))
    assert faster / base == pytest.approx(head_on(g2) / head_on(g1), rel=1e-12)
    assert brighter / base == pytest.approx(2.0, rel=1e-12)


def test_chi_rejects_spacelike_velocity():
    f = ConstantCrossed(1.0).field(np.zeros(4))
    with pytest.raises(DomainError):
        compute_chi(ChiParams(f, np.array([0.5, 1.0, 0, 0]), PhysicalParams(hbar_eff=1e-6)))
    with pytest.raises(DomainError):
        compute_chi(ChiParams(f, np.array([1.0, 0, 0, 0]), PhysicalParams()), convention="other")


def test_q_table_reference_cells():
    (row,) = emit_q_table([1e22], [600.0])
    assert row[0] == 1e22 and row[1] == 600.0
    assert row[3] == pytest.approx(0.30, abs=0.05)
    assert row[3] == pytest.approx(oracles.q_nested(row[2]), abs=1e-9)
    assert row[3] == q_full(row[2]) and row[4] == q_sqed(row[2])
    (low,) = emit_q_table([1e18], [1.0])
    assert low[3] == pytest.approx(1.0, abs=1e-3)


def test_q_table_from_chi_grid():
    rows = emit_q_table(chi_grid=[0.1, 1.0])
    assert len(rows) == 2
    assert np.isnan(rows[0][0]) and np.isnan(rows[0][1])
    assert rows[1][3] == q_full(1.0)


def test_q_table_needs_a_grid():
    with pytest.raises(DomainError):
        emit_q_table([], [600.0])
    with pytest.raises(DomainError):
        emit_q_table()


def test_q_table_csv(tmp_path):
    rows = emit_q_table([1e20, 1e21], [100.0])
    path = tmp_path / "q.csv"
    write_q_table(rows, path)
    with open(path) as fh:
        data = list(csv.reader(fh))
    assert tuple(data[0]) == Q_TABLE_HEADER == ("intensity_W_cm2", "energy_MeV", "chi", "q_full", "q_sqed")
    assert [float(v) for v in data[1]] == list(rows[0])


def test_default_quadrature_is_shared():
    assert q_full(0.5) == q_full(0.5, DEFAULT_QUADRATURE)
