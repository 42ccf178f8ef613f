"""Radiation reaction: classical integrators and ensemble estimators.

With ``e > 0`` and the electron force ``-e F u`` (see :mod:`stochrr.fields`),
the equations used here are, for unit four-velocities,

    LAD:  da/dtau = (a + (e/m0) F u) / tau0 - (a.a) u
    LL:   m0 du/dtau = -e F u - e tau0 (u.d F) u + (e^2 tau0 / m0) [F F u + (Fu . Fu) u]

where ``F u`` is ``F^{mu nu} u_nu``.  The stochastic estimators work on a
:class:`~stochrr.kinematics.PathEnsemble` and report Monte Carlo standard
errors.  The equal-position restriction of the radiation-reaction field is
replaced by a spatial window of radius ``epsilon`` around an anchor.
"""
import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.signal import savgol_coeffs

from .core import PhysicalParams, lower, minkowski_dot, tensor_vector
from .errors import DegenerateVelocity, DomainError, InsufficientStatistics, IntegratorAuditWarning, RunawayDetected
from .fields import ConstantMagnetic, PlaneWave, Superposition
from .kinematics import MeanDerivativeOperator, _paired_z
from .wavefunction import ClassicalFlowField

TRAJECTORY_HEADER = ("tau", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "power", "p_ave", "errors")
STEPS_PER_PERIOD = 50
NORM_DRIFT_PER_PERIOD = 1e-8


@dataclass(frozen=True)
class ClassicalState:
    """Position, four-velocity and (for LAD) four-acceleration."""

    x: np.ndarray
    v: np.ndarray
    a: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.a is not None:
            object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        for name in ("x", "v") + (("a",) if self.a is not None else ()):
            if getattr(self, name).shape != (4,):
                raise DomainError(f"state component {name} must be a four-vector")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution ``tau -> (x, v, a)`` of a classical integrator."""

    tau: np.ndarray
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray

    @property
    def gamma(self):
        return self.v[:, 0]

    def norm_drift(self):
        """Largest relative change of ``v.v`` along the trajectory."""
        vv = minkowski_dot(self.v, self.v)
        return float(np.max(np.abs(vv - vv[0])) / abs(vv[0]))

    def state(self, k):
        return ClassicalState(self.x[k], self.v[k], self.a[k])

    def write_csv(self, path, power=None, p_ave=None, errors=None):
        write_trajectory_csv(path, self.tau, self.x, self.v, power, p_ave, errors)


@dataclass(frozen=True)
class RRFieldEstimate:
    """Monte Carlo estimate of the radiation-reaction field tensor."""

    tensor: np.ndarray
    stderr: np.ndarray
    epsilon: float
    n_window: int
    tau: float
    anchor: object


@dataclass(frozen=True)
class OmegaAveEstimate:
    """Fraction of paths within ``epsilon`` of the mean position, with a Wilson interval."""

    probability: float
    epsilon: float
    stderr: float
    low: float
    high: float
    n_inside: int
    n_alive: int


# ---------------------------------------------------------------------------
# field tensors and forces


def lorentz_accel(x, v, profile, params):
    """``-(e/m0) F u`` at x."""
    return -(params.charge_e / params.m0) * tensor_vector(profile.field(x), v)


def lad_field(v, jerk, params):
    """F_LAD = -(m0 tau0 / e c^2) [jerk (x) v - v (x) jerk]."""
    scale = -params.m0 * params.tau0 / (params.charge_e * params.c**2)
    return scale * (np.multiply.outer(jerk, v) - np.multiply.outer(v, jerk))


def ll_field(x, v, profile, params):
    """Landau-Lifshitz field tensor at a point of a trajectory.

    ``tau0 (v.d) F - (e tau0 / m0 c^2) [w (x) v - v (x) w]`` with
    ``w^mu = F^{mu a} g_{ab} F^{b c} v_c``.
    """
    if params.tau0 == 0:
        return np.zeros((4, 4))
    f = profile.field(x)
    gradient = profile.field_gradient(x)  # (alpha, mu, nu)
    w = tensor_vector(f, tensor_vector(f, v))
    transport = params.tau0 * np.einsum("a,amn->mn", v, gradient)
    quadratic = params.charge_e * params.tau0 / (params.m0 * params.c**2) * (np.outer(w, v) - np.outer(v, w))
    return transport - quadratic


def ll_accel(x, v, profile, params):
    """Four-acceleration of the Landau-Lifshitz equation."""
    total = profile.field(x) + ll_field(x, v, profile, params)
    return -(params.charge_e / params.m0) * tensor_vector(total, v)


def lad_rhs(state, profile, params):
    """``(dx, dv, da) / dtau`` of the LAD equation as a third-order system.

    The jerk follows from ``m0 a = -e (F + F_LAD) v`` together with
    ``v.jerk = -a.a``, which holds along every solution of ``v.v = const``.
    The constant is taken as ``c^2`` and ``a.a`` is formed without
    subtracting squares: on a run-away both differences cancel
    catastrophically long before anything overflows.
    """
    if params.tau0 <= 0:
        raise DomainError("LAD needs tau0 > 0")
    x, v, a = state.x, state.v, state.a
    if not v[0] > 0:
        raise DomainError("LAD needs a future-pointing velocity")
    vv = params.c**2
    e_over_m = params.charge_e / params.m0
    # a.a through the cancellation-free form, using a.v = 0
    a_dot_a = -proper_acceleration(v, a) ** 2
    jerk = (a + e_over_m * tensor_vector(profile.field(x), v) - params.tau0 * a_dot_a * v) / (params.tau0 * vv)
    return v.copy(), a.copy(), jerk


def proper_acceleration(v, a):
    """``sqrt(-a.a)`` written without cancellation for ``a.v = 0``.

    Uses ``-a.a = (|a|^2 + |a x v|^2) / v0^2`` for spatial parts (``c = 1``),
    which stays accurate when the components are much larger than the
    invariant.  It is evaluated as ``hypot(|a|/v0, |a| |a_hat x v/v0|)`` so
    that no intermediate square overflows or underflows.
    """
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    sa, sv = a[..., 1:], v[..., 1:]
    size = np.hypot(np.hypot(sa[..., 0], sa[..., 1]), sa[..., 2])
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(size[..., None] > 0, sa / size[..., None], 0.0)
        cross = np.cross(unit, sv / v[..., :1])
        return np.hypot(size / v[..., 0], size * np.sqrt(np.sum(cross * cross, axis=-1)))


def field_period(profile, v, params):
    """Shortest proper-time period of the field as seen by velocity v."""
    if isinstance(profile, Superposition):
        return min(field_period(p, v, params) for p in profile.parts)
    if isinstance(profile, ConstantMagnetic):
        b = abs(profile.b_z)
        return np.inf if b == 0 else 2 * np.pi * params.m0 / (params.charge_e * b)
    if isinstance(profile, PlaneWave):
        kv = abs(minkowski_dot(np.asarray(profile.k, float), v))
        return np.inf if kv == 0 else 2 * np.pi / kv
    return np.inf


# ---------------------------------------------------------------------------
# integrators


def _rk4(rhs, y0, t0, h, n, check=None):
    ys = np.empty((n + 1, len(y0)))
    ys[0] = y0
    y = np.asarray(y0, dtype=float)
    t = t0
    for i in range(n):
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
        ys[i + 1] = y
        if check is not None:
            check(t, ys[: i + 2])
    return t0 + h * np.arange(n + 1), ys


def _grid(tau_span, dtau):
    if not dtau > 0:
        raise DomainError("dtau must be positive")
    t0, t1 = map(float, tau_span)
    n = int(round(abs(t1 - t0) / dtau))
    if n < 1:
        raise DomainError("tau_span is shorter than one step")
    return t0, (t1 - t0) / n, n


def _audit(traj, profile, params, h):
    """Warn when the step is coarse or v.v drifts beyond budget."""
    period = field_period(profile, traj.v[0], params)
    metrics = {"dtau": abs(h), "period": period, "norm_drift": traj.norm_drift()}
    if np.isfinite(period) and abs(h) > period / STEPS_PER_PERIOD:
        warnings.warn(IntegratorAuditWarning(f"fewer than {STEPS_PER_PERIOD} steps per field period: {metrics}"))
    span = abs(traj.tau[-1] - traj.tau[0])
    periods = max(span / period, 1.0) if np.isfinite(period) else 1.0
    if metrics["norm_drift"] / periods > NORM_DRIFT_PER_PERIOD:
        warnings.warn(IntegratorAuditWarning(f"v.v drift exceeds {NORM_DRIFT_PER_PERIOD:g} per period: {metrics}"))
    return metrics


def _integrate_second_order(accel, initial, tau_span, dtau):
    t0, h, n = _grid(tau_span, dtau)

    def rhs(t, y):
        return np.concatenate([y[4:], accel(y[:4], y[4:])])

    tau, ys = _rk4(rhs, np.concatenate([initial.x, initial.v]), t0, h, n)
    a = np.array([accel(y[:4], y[4:]) for y in ys])
    return Trajectory(tau, ys[:, :4], ys[:, 4:], a), h


def integrate_ll(initial, profile, params, tau_span, dtau, audit=True):
    """RK4 integration of the Landau-Lifshitz equation.

    ``tau_span = (start, end)``; ``end < start`` integrates backwards.
    With ``audit`` a :class:`IntegratorAuditWarning` reports a step coarser
    than 1/50 of the field period or a ``v.v`` drift above 1e-8 per period.
    """
    traj, h = _integrate_second_order(lambda x, v: ll_accel(x, v, profile, params), initial, tau_span, dtau)
    if audit:
        _audit(traj, profile, params, h)
    return traj


def _directional(func, x, v, a, h):
    """Derivative of ``func(x, v)`` along the flow ``(dx, dv) = (v, a)``."""
    return (func(x + h * v, v + h * a) - func(x - h * v, v - h * a)) / (2 * h)


def reduced_order_accel(profile, params, iterations=2, h=1e-4):
    """Acceleration from iterating the LAD substitution ``a -> a(x, v)``.

    Each iteration evaluates ``a = -(e/m0) F v + tau0 [j + (a.a) v]`` with
    the jerk ``j`` of the previous iterate taken along the flow by central
    differences.  The first iterate is the LL acceleration, which the
    substitution reproduces exactly; each further iteration adds one order
    in ``tau0``.
    """
    if iterations < 1:
        raise DomainError("need at least one iteration")
    current = lambda x, v: ll_accel(x, v, profile, params)
    for _ in range(iterations - 1):
        current = _next_iterate(current, profile, params, h)
    return current


def _next_iterate(previous, profile, params, h):
    def accel(x, v):
        a = previous(x, v)
        jerk = _directional(previous, x, v, a, h)
        vv = minkowski_dot(v, v)
        return lorentz_accel(x, v, profile, params) + params.tau0 * (jerk * vv + minkowski_dot(a, a) * v)

    return accel


def integrate_lad(initial, profile, params, tau_span, dtau, mode="forward", overflow=1e6, iterations=2):
    """Integrate the LAD equation.

    ``mode="forward"`` integrates the third-order system from ``a(0)`` and
    raises :class:`RunawayDetected` once the proper acceleration exceeds
    ``overflow``; the partial trajectory is attached.  ``mode="reduced_order"``
    integrates the second-order system of :func:`reduced_order_accel`.
    """
    if mode == "reduced_order":
        accel = reduced_order_accel(profile, params, iterations)
        return _integrate_second_order(accel, initial, tau_span, dtau)[0]
    if mode != "forward":
        raise DomainError(f"unknown LAD mode {mode!r}")
    if initial.a is None:
        raise DomainError("forward LAD needs an initial acceleration")
    t0, h, n = _grid(tau_span, dtau)

    if params.tau0 <= 0:
        raise DomainError("LAD needs tau0 > 0")
    vv = minkowski_dot(initial.v, initial.v)
    if abs(vv - params.c**2) > 1e-8 * params.c**2:
        raise DomainError(f"initial velocity is off shell: v.v = {vv!r}")

    def rhs(t, y):
        if not y[4] > 0:
            # only reachable once the state has overflowed
            return np.full(12, np.nan)
        dx, dv, da = lad_rhs(ClassicalState(y[:4], y[4:8], y[8:]), profile, params)
        return np.concatenate([dx, dv, da])

    def check(t, ys):
        y = ys[-1]
        finite = bool(np.all(np.isfinite(y)))
        if not finite or proper_acceleration(y[4:8], y[8:]) > overflow:
            kept = ys if finite else ys[:-1]
            traj = Trajectory(t0 + h * np.arange(len(kept)), kept[:, :4], kept[:, 4:8], kept[:, 8:])
            raise RunawayDetected(f"LAD run-away at tau={t:.6g}", tau=t, trajectory=traj)

    # overflow is detected by ``check``; numpy's own warnings add nothing
    with np.errstate(over="ignore", invalid="ignore"):
        tau, ys = _rk4(rhs, np.concatenate([initial.x, initial.v, initial.a]), t0, h, n, check)
    return Trajectory(tau, ys[:, :4], ys[:, 4:8], ys[:, 8:])


def integrate_mean_rr(initial, profile, params, p_ave, tau_span, dtau, form="field"):
    """Mean-trajectory dynamics with radiation reaction weighted by ``p_ave``.

    ``form="field"`` adds ``-(e/m0) p_ave F_LL v``; ``form="power"`` uses the
    radiated-power friction ``-(dW/dt) v / m0`` with the Larmor power of the
    Lorentz acceleration.  On the mass shell in a uniform magnetic field both
    give the same ``dgamma/dtau``; the power form does not keep ``v.v``
    fixed, so the two separate slowly along a trajectory.
    """
    e_over_m = params.charge_e / params.m0

    if form == "field":
        def accel(x, v):
            extra = p_ave * ll_field(x, v, profile, params)
            return -e_over_m * tensor_vector(profile.field(x) + extra, v)
    elif form == "power":
        def accel(x, v):
            lorentz = lorentz_accel(x, v, profile, params)
            power = p_ave * larmor_power(v, lorentz, params)
            return lorentz - power * v / params.m0
    else:
        raise DomainError(f"unknown form {form!r}")
    return _integrate_second_order(accel, initial, tau_span, dtau)[0]


def constant_b_gamma(gamma0, omega, tau0, tau):
    """Lorentz factor under LL in a uniform magnetic field (motion in the plane).

    ``beta = beta0 exp(-tau0 omega^2 tau)`` solves
    ``dgamma/dtau = -tau0 omega^2 gamma (gamma^2 - 1)``.
    """
    beta0 = np.sqrt(1.0 - 1.0 / gamma0**2)
    beta = beta0 * np.exp(-tau0 * omega**2 * np.asarray(tau, dtype=float))
    return 1.0 / np.sqrt(1.0 - beta**2)


def classical_flow_field(profile, params, initial, tau_span, dtau, lam, margin=1.0):
    """Velocity field carried by an LL reference trajectory (see ClassicalFlowField).

    The reference is integrated over ``tau_span`` widened by ``margin`` on
    both sides so that diffusing time coordinates stay inside the spline.
    """
    t0, t1 = map(float, tau_span)
    ahead = integrate_ll(initial, profile, params, (t0, t1 + margin), dtau, audit=False)
    behind = integrate_ll(initial, profile, params, (t0, t0 - margin), dtau, audit=False)
    tau = np.concatenate([behind.tau[:0:-1], ahead.tau])
    x = np.concatenate([behind.x[:0:-1], ahead.x])
    u = np.concatenate([behind.v[:0:-1], ahead.v])
    field_params = PhysicalParams(
        hbar_eff=params.m0 * lam**2, tau0=params.tau0, charge_e=params.charge_e, m0=params.m0, c=params.c
    )
    return ClassicalFlowField(tau, x, u, field_params)


# ---------------------------------------------------------------------------
# velocity-field kernels


def _field_params(field_, params):
    return params if params is not None else getattr(field_, "params", PhysicalParams())


def _real_norm(re):
    norm = minkowski_dot(re, re)
    if np.any(~(norm > 1e-12)):
        raise DegenerateVelocity("Re V is null or spacelike")
    return norm


def a_dot(field_, x, tau=0.0, h=5e-3, params=None):
    """Radiation-reaction jerk of a velocity field by nested mean derivatives.

    ``c^4 Re D^2 V / (ReV.ReV)^2 - (27/8) c^4 (ReV . Re DV) Re DV / (ReV.ReV)^3``
    with ``D`` the complex mean derivative, applied twice through nested
    central differences of the field.
    """
    c = _field_params(field_, params).c
    x = np.asarray(x, dtype=float)
    op = MeanDerivativeOperator(field_, h=h)
    velocity = lambda y: field_.complex_velocity(y, tau)
    first = lambda y: op.apply(velocity, y, "complex", tau)
    re = velocity(x).real
    norm = _real_norm(re)
    d1 = first(x).real
    d2 = op.apply(first, x, "complex", tau).real
    lead = c**4 * d2 / norm[..., None] ** 2
    correction = 27.0 / 8.0 * c**4 * minkowski_dot(re, d1)[..., None] / norm[..., None] ** 3 * d1
    return lead - correction


def ll_adot(field_, profile, x, tau=0.0, params=None):
    """First-order jerk from field gradients (no nested derivatives).

    ``c^4 Re Vdd / (ReV.ReV)^2`` with
    ``Re Vdd = -(e/m0) ReV_a ReV^b d_b F^{mu a} + (e/m0) ImV_a ImV^b d_b F^{mu a}
    + (e/m0)^2 F^{mu a} g_{ab} F^{b c} ReV_c``.
    """
    p = _field_params(field_, params)
    x = np.asarray(x, dtype=float)
    v = field_.complex_velocity(x, tau)
    re, im = v.real, v.imag
    norm = _real_norm(re)
    e_over_m = p.charge_e / p.m0
    gradient = profile.field_gradient(x)  # (..., beta, mu, alpha)
    transport = np.einsum("...b,...bma,...a->...m", re, gradient, lower(re))
    osmotic = np.einsum("...b,...bma,...a->...m", im, gradient, lower(im))
    f = profile.field(x)
    quadratic = tensor_vector(f, tensor_vector(f, re))
    vdd = -e_over_m * transport + e_over_m * osmotic + e_over_m**2 * quadratic
    return p.c**4 * vdd / norm[..., None] ** 2


# ---------------------------------------------------------------------------
# ensemble estimators


def _spatial(ensemble):
    return slice(1, 4) if ensemble.x.shape[-1] == 4 else slice(0, None)


def default_epsilon(ensemble, window_steps=10):
    """``lam sqrt(window_steps * dtau)`` with the recording step of the ensemble."""
    dtau = abs(float(ensemble.tau[1] - ensemble.tau[0]))
    return float(ensemble.lam * np.sqrt(window_steps * dtau))


def _anchor_position(ensemble, tau_index, anchor):
    if isinstance(anchor, str):
        if anchor != "average":
            raise DomainError("anchor must be 'average' or a path index")
        return ensemble.expectation(ensemble.x[tau_index])[0]
    index = int(anchor)
    if not ensemble.alive[index]:
        raise DomainError(f"anchor path {index} was rejected")
    return ensemble.x[tau_index, index]


def _window(ensemble, tau_index, centre, epsilon):
    s = _spatial(ensemble)
    dist = np.linalg.norm(ensemble.x[tau_index][:, s] - centre[s], axis=-1)
    return (dist <= epsilon) & ensemble.alive


def stochastic_rr_field(ensemble, field_, tau_index, anchor="average", epsilon=None, params=None, h=5e-3,
                        min_paths=100):
    """Window estimate of the stochastic radiation-reaction field.

    Averages ``-(m0 tau0 / e c^2) [adot (x) ReV - ReV (x) adot]`` with
    ``adot`` from :func:`a_dot` over all alive paths, counting only those
    within spatial distance ``epsilon`` of the anchor (the probability
    measure of the window is kept, not renormalised).
    """
    p = _field_params(field_, params)
    epsilon = default_epsilon(ensemble) if epsilon is None else float(epsilon)
    if epsilon < 0:
        raise DomainError("epsilon must be >= 0")
    centre = _anchor_position(ensemble, tau_index, anchor)
    inside = _window(ensemble, tau_index, centre, epsilon)
    n_in = int(np.count_nonzero(inside))
    if n_in < min_paths:
        raise InsufficientStatistics(f"{n_in} paths in the window (epsilon={epsilon:g}); need {min_paths}")
    tau = float(ensemble.tau[tau_index])
    pts = ensemble.x[tau_index][inside]
    jerk = a_dot(field_, pts, tau, h, p)
    re = field_.complex_velocity(pts, tau).real
    kernel = np.einsum("nm,nk->nmk", jerk, re)
    kernel = kernel - np.swapaxes(kernel, -1, -2)
    values = np.zeros((ensemble.n_paths, 4, 4))
    values[inside] = -p.m0 * p.tau0 / (p.charge_e * p.c**2) * kernel
    mean, se = ensemble.expectation(values)
    return RRFieldEstimate(mean, se, epsilon, n_in, tau, anchor)


def p_omega_ave(ensemble, tau_index, epsilon):
    """Fraction of alive paths within ``epsilon`` of the ensemble mean position."""
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    centre = ensemble.expectation(ensemble.x[tau_index])[0]
    inside = int(np.count_nonzero(_window(ensemble, tau_index, centre, epsilon)))
    n = ensemble.n_alive
    prob = inside / n
    ci = stats.binomtest(inside, n).proportion_ci(0.95, method="wilson")
    return OmegaAveEstimate(prob, float(epsilon), float(np.sqrt(prob * (1 - prob) / n)), ci.low, ci.high, inside, n)


def _poly_weights(tau, tau_index, half_width, order, deriv):
    """Local polynomial derivative weights on a uniform grid."""
    dtau = float(tau[1] - tau[0])
    if not np.allclose(np.diff(tau), dtau):
        raise DomainError("derivative filter needs a uniform tau grid")
    lo, hi = tau_index - half_width, tau_index + half_width
    if lo < 0 or hi >= len(tau):
        raise DomainError("derivative window leaves the tau grid")
    # savgol_coeffs with use="dot" returns weights for samples ordered left to right
    w = savgol_coeffs(2 * half_width + 1, order, deriv=deriv, delta=dtau, use="dot")
    return slice(lo, hi + 1), w


def mean_path_derivatives(ensemble, tau_index, half_width=6, order=5):
    """Per-path first and third tau-derivatives by a local polynomial fit.

    The filter is linear, so ensemble means of the per-path values are the
    derivatives of the mean trajectory.  Returns arrays ``(N, 4)``.
    """
    s, w1 = _poly_weights(ensemble.tau, tau_index, half_width, order, 1)
    _, w3 = _poly_weights(ensemble.tau, tau_index, half_width, order, 3)
    window = ensemble.x[s]
    return np.einsum("k,knm->nm", w1, window), np.einsum("k,knm->nm", w3, window)


def averaged_bridge(ensemble, field_, tau_index, epsilon, params=None, h=5e-3, half_width=6, order=5,
                    min_paths=100):
    """Compare the window estimate of the RR field with ``P x F_LAD(<x>)``.

    Both sides come from the same paths, so the standard error is that of
    the per-path influence values of the difference (delta method for the
    bilinear ``F_LAD`` and the product with ``P``).  Returns
    ``(rr_estimate, p_estimate, predicted, z)`` with ``z`` per component.
    """
    p = _field_params(field_, params)
    rr = stochastic_rr_field(ensemble, field_, tau_index, "average", epsilon, p, h, min_paths)
    prob = p_omega_ave(ensemble, tau_index, epsilon)
    vel, jerk = mean_path_derivatives(ensemble, tau_index, half_width, order)
    v_bar = ensemble.expectation(vel)[0]
    j_bar = ensemble.expectation(jerk)[0]
    f_lad = lad_field(v_bar, j_bar, p)
    predicted = prob.probability * f_lad
    # influence values: linearise P F_LAD(v, j) around the means
    scale = -p.m0 * p.tau0 / (p.charge_e * p.c**2)
    dv, dj = vel - v_bar, jerk - j_bar
    d_flad = scale * (np.einsum("nm,k->nmk", dj, v_bar) + np.einsum("m,nk->nmk", j_bar, dv))
    d_flad = d_flad - np.swapaxes(d_flad, -1, -2)
    centre = ensemble.expectation(ensemble.x[tau_index])[0]
    indicator = _window(ensemble, tau_index, centre, epsilon).astype(float)
    influence_pred = (indicator - prob.probability)[:, None, None] * f_lad + prob.probability * d_flad
    # per-path rr values, recomputed so that they can be paired with the prediction
    inside = indicator > 0
    rr_values = np.zeros((ensemble.n_paths, 4, 4))
    pts = ensemble.x[tau_index][inside]
    jerk_field = a_dot(field_, pts, rr.tau, h, p)
    re = field_.complex_velocity(pts, rr.tau).real
    kernel = np.einsum("nm,nk->nmk", jerk_field, re)
    rr_values[inside] = scale * (kernel - np.swapaxes(kernel, -1, -2))
    diff = rr_values - influence_pred
    _, se = ensemble.expectation(diff)
    gap = rr.tensor - predicted
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(gap) / se, np.where(gap == 0, 0.0, np.inf))
    return rr, prob, predicted, z


@dataclass(frozen=True)
class EhrenfestCheck:
    tau: float
    lhs: np.ndarray
    rhs: np.ndarray
    stderr: np.ndarray
    z: float
    remainder: np.ndarray


def ehrenfest_check(ensemble, field_, profile, params=None, indices=None):
    """Compare ``m0 d^2<x>/dtau^2`` with ``E[-e F Re V]`` at interior grid points.

    The second difference is formed per path so that the z-score of the
    difference uses paired samples.  ``remainder`` is
    ``E[-e F(x) ReV(x)] - (-e F(<x>) d<x>/dtau)``, the covariance correction
    of the mean-field equation.
    """
    p = _field_params(field_, params)
    tau = ensemble.tau
    if len(tau) < 3:
        raise DomainError("Ehrenfest check needs at least three tau points")
    ks = range(1, len(tau) - 1) if indices is None else indices
    out = []
    for k in ks:
        h0, h1 = tau[k] - tau[k - 1], tau[k + 1] - tau[k]
        x_prev, x_k, x_next = ensemble.x[k - 1], ensemble.x[k], ensemble.x[k + 1]
        second = 2 * ((x_next - x_k) / h1 - (x_k - x_prev) / h0) / (h0 + h1)
        lhs_path = p.m0 * second
        re = field_.complex_velocity(x_k, tau[k]).real
        rhs_path = -p.charge_e * tensor_vector(profile.field(x_k), re)
        diffs = []
        for mu in range(4):
            diffs.append(_paired_z(ensemble, lhs_path[:, mu] - rhs_path[:, mu], 0.0))
        lhs = ensemble.expectation(lhs_path)[0]
        rhs = ensemble.expectation(rhs_path)[0]
        mean_x = ensemble.expectation(x_k)[0]
        mean_v = (ensemble.expectation(x_next)[0] - ensemble.expectation(x_prev)[0]) / (h0 + h1)
        mean_field = -p.charge_e * tensor_vector(profile.field(mean_x), mean_v)
        out.append(
            EhrenfestCheck(
                float(tau[k]), lhs, rhs, np.array([d[1] for d in diffs]), max(d[2] for d in diffs), rhs - mean_field
            )
        )
    return out


# ---------------------------------------------------------------------------
# radiated power


def larmor_power(v, a, params):
    """``-m0 tau0 a.a``; positive for spacelike accelerations."""
    return -params.m0 * params.tau0 * minkowski_dot(np.asarray(a, float), np.asarray(a, float))


def _mean_kinematics(tau, x):
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    if len(tau) < 3:
        raise DomainError("radiated power needs at least three tau points")
    h0 = tau[1:-1] - tau[:-2]
    h1 = tau[2:] - tau[1:-1]
    v = (x[2:] - x[:-2]) / (h0 + h1)[:, None]
    a = 2 * ((x[2:] - x[1:-1]) / h1[:, None] - (x[1:-1] - x[:-2]) / h0[:, None]) / (h0 + h1)[:, None]
    return tau[1:-1], v, a


def radiated_power_stochastic(tau, mean_x, p_ave, params):
    """``-m0 tau0 P d^2<x_mu>/dtau^2 d^2<x^mu>/dtau^2`` at interior grid points.

    ``p_ave`` is a number, an array over the interior points or an
    :class:`OmegaAveEstimate`.  Returns ``(tau_interior, power)``.
    """
    if isinstance(p_ave, OmegaAveEstimate):
        p_ave = p_ave.probability
    t, v, a = _mean_kinematics(tau, mean_x)
    power = -params.m0 * params.tau0 * np.asarray(p_ave) * minkowski_dot(a, a)
    return t, power


def max_mean_deviation(ensemble, reference):
    """Largest Euclidean distance between the ensemble mean and a reference trajectory.

    ``reference`` must be sampled on the ensemble's tau grid.
    """
    mean, _ = ensemble.mean_trajectory()
    if mean.shape != reference.x.shape or not np.allclose(ensemble.tau, reference.tau):
        raise DomainError("reference trajectory must share the ensemble tau grid")
    return float(np.max(np.linalg.norm(mean - reference.x, axis=-1)))


def write_trajectory_csv(path, tau, x, v, power=None, p_ave=None, errors=None):
    """CSV with columns ``tau, x0..x3, v0..v3, power, p_ave, errors``.

    Missing optional columns are written as ``nan``.
    """
    n = len(tau)
    fill = lambda col: np.full(n, np.nan) if col is None else np.broadcast_to(np.asarray(col, float), (n,))
    power, p_ave, errors = fill(power), fill(p_ave), fill(errors)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for k in range(n):
            row = [tau[k], *x[k], *v[k], power[k], p_ave[k], errors[k]]
            writer.writerow([repr(float(r)) for r in row])
