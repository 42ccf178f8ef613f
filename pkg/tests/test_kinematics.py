import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochrr.core import PhysicalParams, unit_rapidity_velocity
from stochrr.errors import DomainError, EnsembleCollapse, NodeSingularity, StencilOutOfDomain
from stochrr.fields import ConstantMagnetic, PlaneWave, Vacuum
from stochrr.kinematics import (
    BLOCK,
    FunctionVelocityField,
    GaussianInitial,
    MeanDerivativeOperator,
    PathState,
    PointInitial,
    WienerStream,
    apply_mean_derivative,
    nelson1d_step,
    sample_ensemble,
    sample_nelson1d,
    step_backward,
    step_forward,
    verify_invariant,
    verify_ito,
    verify_partial_integration,
    wiener_increments,
)
from stochrr.rr import ClassicalState, classical_flow_field
from stochrr.wavefunction import (
    ComplexVelocityField,
    FreeParticle,
    ScalarVolkov,
    VelocityField1D,
    harmonic_first_excited,
    harmonic_ground_state,
)

ORIGIN = (0.0, 0.0, 0.0, 0.0)


def zero_drift(lam, dim=4):
    metric = np.array([1.0, -1, -1, -1]) if dim == 4 else np.array([-1.0])
    return FunctionVelocityField(lambda x, t: np.zeros_like(x), lam=lam, dim=dim, metric=metric)


def free_field(p, lam):
    return ComplexVelocityField(FreeParticle(tuple(p)), Vacuum(), PhysicalParams.from_lambda(lam))


# -- Wiener increments -------------------------------------------------------


def test_wiener_moment_suite():
    n, dtau = 10**6, 0.01
    fwd = wiener_increments(3, n, dtau, "forward")
    bwd = wiener_increments(3, n, dtau, "backward")
    for dw in (fwd, bwd):
        mean = dw.mean(axis=0)
        assert np.all(np.abs(mean) < 4 * np.sqrt(dtau / n))
        cov = np.cov(dw.T)
        se_var = dtau * np.sqrt(2.0 / n)
        assert np.all(np.abs(np.diag(cov) - dtau) < 4 * se_var)
        off = cov[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) < 4 * dtau / np.sqrt(n))
    cross = np.mean(fwd * bwd, axis=0)
    assert np.all(np.abs(cross) < 4 * dtau / np.sqrt(n))


def test_wiener_steps_are_distinct_and_reproducible():
    a = wiener_increments(9, 100, 1.0, step=0)
    b = wiener_increments(9, 100, 1.0, step=1)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, wiener_increments(9, 100, 1.0, step=0))


# -- single steps ------------------------------------------------------------


def test_step_forward_rest_particle():
    field = free_field((1.0, 0, 0, 0), 0.0)
    stream = WienerStream(0, 0)
    state = step_forward(PathState(np.zeros(4), 0.0), field, 0.01, stream)
    np.testing.assert_array_equal(state.x, [0.01, 0, 0, 0])
    assert state.tau == 0.01 and state.lineage == (0, 0, 1)


def test_step_forward_moving_particle_hundred_steps():
    gamma = 2.0
    p = unit_rapidity_velocity(gamma, (1, 0, 0))
    field = free_field(p, 0.0)
    stream = WienerStream(0, 0)
    state = PathState(np.zeros(4), 0.0)
    for _ in range(100):
        state = step_forward(state, field, 0.01, stream)
    assert state.x[1] == pytest.approx(p[1] * 1.0, rel=1e-13)
    assert state.x[2] == 0.0


def test_backward_step_retraces_forward_without_noise():
    p = unit_rapidity_velocity(1.5, (0.3, -1, 0))
    field = free_field(p, 0.0)
    state = PathState(np.array([0.2, 1.0, -0.5, 0.1]), 0.0)
    fwd, bwd = WienerStream(0, 0, "forward"), WienerStream(0, 0, "backward")
    end = state
    for _ in range(50):
        end = step_forward(end, field, 0.02, fwd)
    back = PathState(end.x, end.tau)
    for _ in range(50):
        back = step_backward(back, field, 0.02, bwd)
    np.testing.assert_allclose(back.x, state.x, atol=1e-13)
    assert back.tau == pytest.approx(0.0, abs=1e-13)


def test_step_needs_matching_stream_and_positive_step():
    field = free_field((1.0, 0, 0, 0), 0.1)
    with pytest.raises(DomainError):
        step_forward(PathState(np.zeros(4), 0.0), field, 0.01, WienerStream(0, 0, "backward"))
    with pytest.raises(DomainError):
        step_forward(PathState(np.zeros(4), 0.0), field, 0.0, WienerStream(0, 0))


def test_step_at_node_raises():
    field = VelocityField1D(harmonic_first_excited(1.0), PhysicalParams(hbar_eff=1.0))
    with pytest.raises(NodeSingularity):
        nelson1d_step(PathState(np.zeros(1), 0.0), field, 0.01, WienerStream(0, 0, dim=1))


def test_single_path_stream_matches_ensemble():
    lam, dtau = 0.4, 0.05
    field = free_field(unit_rapidity_velocity(1.2, (1, 0, 0)), lam)
    taus = dtau * np.arange(11)
    ens = sample_ensemble(PointInitial(ORIGIN), field, taus, BLOCK + 10, 21)
    for index in (3, BLOCK + 7):
        stream = WienerStream(21, index)
        state = PathState(np.zeros(4), 0.0, (21, index, 0))
        for k in range(10):
            state = step_forward(state, field, dtau, stream)
            np.testing.assert_allclose(state.x, ens.x[k + 1, index], rtol=0, atol=1e-14)


def test_nelson_step_limits():
    # pure Wiener: variance lam^2 t
    field = zero_drift(0.5, dim=1)
    ens = sample_nelson1d(field, PointInitial((0.0,)), np.linspace(0, 1, 11), 40000, 2)
    var = np.var(ens.positions(10)[:, 0], ddof=1)
    assert var == pytest.approx(0.25, abs=4 * 0.25 * np.sqrt(2 / 40000))
    # relaxation drift, no noise: x0 exp(-t) to O(dt)
    relax = FunctionVelocityField(lambda x, t: -x + 0j, lam=0.0, dim=1, metric=np.array([-1.0]))
    errs = []
    for dt in (0.01, 0.005):
        state = PathState(np.array([2.0]), 0.0)
        stream = WienerStream(0, 0, dim=1)
        for _ in range(int(round(1 / dt))):
            state = nelson1d_step(state, relax, dt, stream)
        errs.append(abs(state.x[0] - 2 * np.exp(-1)))
    assert errs[0] < 0.01
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.0, abs=0.05)


# -- ensembles ---------------------------------------------------------------


def test_zero_drift_variance_law():
    lam = 0.3
    ens = sample_ensemble(PointInitial(ORIGIN), zero_drift(lam), np.linspace(0, 1, 5), 10**5, 4, substeps=5)
    x = ens.positions(4)
    var = np.var(x, axis=0, ddof=1)
    sigma = 0.09 * np.sqrt(2.0 / 10**5)
    assert np.all(np.abs(var - 0.09) < 3 * sigma)


def test_single_path_without_noise_is_the_euler_drift_integration():
    field = FunctionVelocityField(lambda x, t: np.stack([np.ones_like(x[..., 0]), -x[..., 1], 0 * x[..., 0],
                                                         0 * x[..., 0]], axis=-1) + 0j, lam=0.0)
    taus = np.linspace(0, 1, 101)
    ens = sample_ensemble(PointInitial((0.0, 1.0, 0.0, 0.0)), field, taus, 1, 0)
    x = 1.0
    for _ in range(100):
        x = x - x * 0.01
    assert ens.x[-1, 0, 1] == pytest.approx(x, rel=1e-14)
    assert ens.x[-1, 0, 1] == pytest.approx(np.exp(-1), abs=0.01)


def test_standard_error_follows_inverse_root_n():
    field = free_field(unit_rapidity_velocity(1.5, (1, 0, 0)), 0.3)
    taus = np.linspace(0, 1, 3)
    se = []
    for n in (20000, 40000):
        ens = sample_ensemble(PointInitial(ORIGIN), field, taus, n, 8)
        se.append(ens.expectation(ens.x[-1, :, 1])[1])
    assert se[0] / se[1] == pytest.approx(np.sqrt(2), rel=0.2)


def test_worker_count_does_not_change_the_ensemble():
    field = free_field(unit_rapidity_velocity(1.3, (0, 1, 0)), 0.2)
    taus = np.linspace(0, 0.5, 6)
    a = sample_ensemble(PointInitial(ORIGIN), field, taus, 5 * BLOCK + 3, 77, workers=1)
    b = sample_ensemble(PointInitial(ORIGIN), field, taus, 5 * BLOCK + 3, 77, workers=8)
    assert a.x.tobytes() == b.x.tobytes()
    assert a.alive.tobytes() == b.alive.tobytes()


def test_paths_do_not_depend_on_ensemble_size():
    field = free_field(unit_rapidity_velocity(1.3, (0, 1, 0)), 0.2)
    taus = np.linspace(0, 0.5, 6)
    small = sample_ensemble(GaussianInitial(ORIGIN, (0.1,) * 4), field, taus, 100, 5)
    large = sample_ensemble(GaussianInitial(ORIGIN, (0.1,) * 4), field, taus, 3 * BLOCK, 5)
    np.testing.assert_array_equal(small.x, large.x[:, :100])


def test_antithetic_pairs_mirror_the_noise():
    ens = sample_ensemble(PointInitial(ORIGIN), zero_drift(0.5), np.linspace(0, 1, 4), 1000, 3, antithetic=True)
    np.testing.assert_array_equal(ens.x[:, 0::2], -ens.x[:, 1::2])
    mean, se = ens.expectation(ens.x[-1])
    np.testing.assert_array_equal(mean, 0.0)


def test_backward_zero_drift_density_contracts_towards_terminal_point():
    lam = 0.4
    taus = np.linspace(1.0, 0.0, 6)
    ens = sample_ensemble(PointInitial(ORIGIN), zero_drift(lam), taus, 40000, 6, "backward")
    var = np.array([np.var(ens.positions(k)[:, 1], ddof=1) for k in range(6)])
    expected = lam**2 * (1.0 - taus)
    np.testing.assert_allclose(var[1:], expected[1:], rtol=4 * np.sqrt(2 / 40000))
    # read in increasing tau the variance falls linearly at rate lam^2
    slope = np.polyfit(taus, var, 1)[0]
    assert slope == pytest.approx(-(lam**2), rel=0.03)


def test_harmonic_forward_and_backward_share_the_stationary_density():
    sigma = 1.0
    field = VelocityField1D(harmonic_ground_state(sigma), PhysicalParams(hbar_eff=1.0))
    start = GaussianInitial((0.0,), (sigma / np.sqrt(2),))
    fwd = sample_nelson1d(field, start, np.linspace(0, 2, 3), 20000, 1, substeps=100)
    bwd = sample_nelson1d(field, start, np.linspace(2, 0, 3), 20000, 1, "backward", substeps=100)
    target = stats.norm(0.0, sigma / np.sqrt(2)).cdf
    assert stats.kstest(fwd.positions(2)[:, 0], target).pvalue > 0.01
    assert stats.kstest(bwd.positions(2)[:, 0], target).pvalue > 0.01
    assert stats.ks_2samp(fwd.positions(2)[:, 0], bwd.positions(2)[:, 0]).pvalue > 0.01


def test_euler_maruyama_weak_order_one():
    lam = 0.3
    relax = FunctionVelocityField(lambda x, t: np.stack([np.ones_like(x[..., 0]), -x[..., 1], 0 * x[..., 0],
                                                         0 * x[..., 0]], axis=-1) + 0j, lam=lam)
    errs = []
    for substeps in (10, 20):
        ens = sample_ensemble(PointInitial((0.0, 1.0, 0.0, 0.0)), relax, [0.0, 1.0], 2000, 0, substeps=substeps,
                              antithetic=True)
        errs.append(abs(ens.expectation(ens.x[-1, :, 1])[0] - np.exp(-1)))
    assert np.log2(errs[0] / errs[1]) == pytest.approx(1.0, abs=0.1)


def test_node_rejection_and_collapse():
    field = VelocityField1D(harmonic_first_excited(1.0), PhysicalParams(hbar_eff=1.0))
    with pytest.raises(EnsembleCollapse):
        sample_nelson1d(field, PointInitial((0.0,)), [0.0, 0.1], 10, 0)
    ens = sample_nelson1d(field, GaussianInitial((0.0,), (1.0,)), np.linspace(0, 0.5, 6), 2000, 0, substeps=20)
    assert 0 < ens.alive_fraction <= 1.0
    assert np.all(np.isnan(ens.rejected_at[ens.alive]))


def test_grid_validation():
    field = zero_drift(0.1)
    with pytest.raises(DomainError):
        sample_ensemble(PointInitial(ORIGIN), field, [0.0, 1.0, 0.5], 10, 0)
    with pytest.raises(DomainError):
        sample_ensemble(PointInitial(ORIGIN), field, [0.0, 1.0], 10, 0, "backward")
    with pytest.raises(DomainError):
        sample_ensemble(PointInitial(ORIGIN), field, [0.0, 1.0], 0, 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_expectation_is_linear(seed, a, b):
    ens = sample_ensemble(GaussianInitial(ORIGIN, (1.0,) * 4), zero_drift(0.2), [0.0, 0.1], 64, seed)
    f, g = ens.x[-1, :, 1], ens.x[-1, :, 2]
    lhs = ens.expectation(a * f + b * g)[0]
    rhs = a * ens.expectation(f)[0] + b * ens.expectation(g)[0]
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(a) + abs(b)) * 10)


# -- mean derivatives --------------------------------------------------------


def volkov_field(lam):
    wave = PlaneWave(0.6, cycles=3)
    phi = ScalarVolkov(tuple(unit_rapidity_velocity(1.5, (0.2, 0.0, -1.0))), wave)
    return ComplexVelocityField(phi, wave, PhysicalParams.from_lambda(lam))


rng = np.random.default_rng(0)
SAMPLE = rng.uniform(-1, 1, (30, 4)) + np.array([9.0, 0, 0, 0])


def test_mean_derivative_of_coordinates_is_the_velocity():
    field = volkov_field(0.3)
    op = MeanDerivativeOperator(field)
    v = field.complex_velocity(SAMPLE)
    np.testing.assert_allclose(apply_mean_derivative(op, lambda x: x, SAMPLE, "complex"), v, atol=1e-9)
    c = np.array([0.3, -1.0, 2.0, 0.5])
    linear = apply_mean_derivative(op, lambda x: x @ c, SAMPLE, "complex")
    np.testing.assert_allclose(linear, v @ c, atol=1e-9)


def test_mean_derivative_of_a_square_without_drift():
    lam = 0.3
    op = MeanDerivativeOperator(zero_drift(lam))
    f = lambda x: x[..., 1] ** 2
    x = np.zeros((1, 4))
    # box x1^2 = g^{11} 2 = -2
    assert apply_mean_derivative(op, f, x, "complex")[0] == pytest.approx(-1j * lam**2)
    assert apply_mean_derivative(op, f, x, "plus")[0] == pytest.approx(lam**2)
    assert apply_mean_derivative(op, f, x, "minus")[0] == pytest.approx(-(lam**2))
    # the forward generator is what the sampled d E[x1^2]/dtau shows
    ens = sample_ensemble(PointInitial(ORIGIN), zero_drift(lam), [0.0, 0.5, 1.0], 40000, 1)
    report = verify_ito({"square": f}, ens, zero_drift(lam))
    assert report.passed()


def test_complex_derivative_is_a_combination_of_the_progressive_ones():
    field = volkov_field(0.3)
    op = MeanDerivativeOperator(field)
    f = lambda x: np.sin(x[..., 0] - x[..., 3]) * x[..., 1] + x[..., 2] ** 2
    d = op.apply(f, SAMPLE, "complex")
    combo = (1 - 1j) / 2 * op.apply(f, SAMPLE, "plus") + (1 + 1j) / 2 * op.apply(f, SAMPLE, "minus")
    np.testing.assert_allclose(d, combo, atol=1e-12)
    np.testing.assert_allclose(op.apply(f, SAMPLE, "complex_conj"), np.conj(d), atol=1e-12)


def test_mean_derivative_validates_variant_and_domain():
    op = MeanDerivativeOperator(zero_drift(0.1))
    with pytest.raises(DomainError):
        op.apply(lambda x: x[..., 0], np.zeros(4), "sideways")
    flow = classical_flow_field(ConstantMagnetic(1.0), PhysicalParams(), ClassicalState(ORIGIN, (1.0, 0, 0, 0)),
                                (0.0, 1.0), 0.01, 0.1, margin=0.02)
    with pytest.raises(StencilOutOfDomain):
        MeanDerivativeOperator(flow).apply(lambda x: x[..., 1], np.array([[5.0, 0, 0, 0]]), "plus")


# -- identity kits -----------------------------------------------------------


def test_verify_ito_free_particle_battery():
    p = unit_rapidity_velocity(1.4, (1, 0.5, 0))
    field = free_field(p, 0.2)
    ens = sample_ensemble(PointInitial(ORIGIN), field, np.linspace(0, 1, 6), 20000, 12)
    functions = {
        "const": lambda x: np.full(x.shape[:-1], 2.0),
        "time": lambda x: x[..., 0],
        "quadratic": lambda x: x[..., 1] ** 2 + x[..., 1] * x[..., 2],
        "trig": lambda x: np.cos(x[..., 2]) * x[..., 3],
    }
    report = verify_ito(functions, ens, field)
    assert report.passed()
    for check in report.checks:
        if check.name == "const":
            assert check.lhs == 0 and check.rhs == 0
        if check.name == "time":
            assert abs(check.lhs - p[0]) < 4 * check.stderr
            assert check.rhs == pytest.approx(p[0], rel=1e-9)


def test_verify_ito_harmonic_battery():
    field = VelocityField1D(harmonic_ground_state(1.0), PhysicalParams(hbar_eff=1.0))
    start = GaussianInitial((0.0,), (np.sqrt(0.5),))
    ens = sample_nelson1d(field, start, np.linspace(0, 0.2, 5), 40000, 2, substeps=20)
    functions = {"x": lambda x: x[..., 0], "x2": lambda x: x[..., 0] ** 2, "cos": lambda x: np.cos(x[..., 0])}
    assert verify_ito(functions, ens, field).passed()


def test_partial_integration_trivial_cases():
    p = unit_rapidity_velocity(1.4, (1, 0.5, 0))
    field = free_field(p, 0.2)
    ens = sample_ensemble(PointInitial(ORIGIN), field, np.linspace(0, 1, 5), 5000, 3)
    const = np.array([1.0, 0.5, -0.2, 0.3])
    report = verify_partial_integration(lambda x: np.broadcast_to(const, x.shape),
                                        lambda x: np.broadcast_to(const, x.shape), ens, field)
    assert all(c.lhs == 0 for c in report.checks)
    assert all(abs(c.rhs) < 1e-10 for c in report.checks)
    beta = np.array([0.0, 1.0, 0.0, 0.0])
    report = verify_partial_integration(lambda x: x, lambda x: np.broadcast_to(beta, x.shape), ens, field,
                                        forms=("plus_minus",), atol=1e-9)
    v_dot_beta = -p[1]
    for c in report.checks:
        assert abs(c.lhs - v_dot_beta) < 4 * c.stderr + 1e-9
        assert c.rhs == pytest.approx(v_dot_beta, rel=1e-8)


def test_invariant_is_exact_for_free_particle():
    field = free_field(unit_rapidity_velocity(2.0, (0, 0, 1)), 0.3)
    ens = sample_ensemble(PointInitial(ORIGIN), field, np.linspace(0, 1, 5), 1000, 0)
    for check in verify_invariant(ens, field):
        assert check.mean == pytest.approx(1.0, abs=1e-14)
        assert check.z < 1e-3
