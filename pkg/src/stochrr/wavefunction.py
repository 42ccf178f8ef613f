"""Klein-Gordon wave functions and the complex velocity fields they induce.

The complex velocity is ``V^mu = (i hbar d^mu ln phi + e A^mu) / m0`` and
splits into the forward and backward drifts ``V+ = Re V - Im V`` and
``V- = Re V + Im V``.  Wave functions are known only up to a constant
factor; nothing here depends on their normalisation.

Velocity fields share a small protocol used by the samplers and by the
mean-derivative operators:

* ``dim`` and ``metric`` describe the coordinates (4D Minkowski or the 1D
  spatial test bed);
* ``lam`` is the diffusion scale;
* ``velocity(x, tau)`` returns ``(V, node_mask)`` without raising, so that
  samplers can reject paths that hit a node;
* ``complex_velocity(x, tau)`` raises :class:`NodeSingularity` instead.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import make_interp_spline

from .core import METRIC, PhysicalParams, minkowski_dot
from .errors import DomainError, NodeSingularity
from .fields import PlaneWave, Vacuum

NODE_THRESHOLD = 1e-12
_FD_STEP = 1e-4


def _fd4(func, x, axis_index, h):
    """Fourth-order central derivative of ``func`` along one coordinate."""
    step = np.zeros(x.shape[-1])
    step[axis_index] = h
    return (-func(x + 2 * step) + 8 * func(x + step) - 8 * func(x - step) + func(x - 2 * step)) / (12 * h)


class WaveFunction:
    """A scalar wave function phi(x) on Minkowski space."""

    scale = 1.0

    def value(self, x, params):
        raise NotImplementedError

    def log_gradient(self, x, params):
        """Contravariant d^mu ln phi; finite-difference fallback."""
        x = np.asarray(x, dtype=float)
        f = lambda y: self.value(y, params)
        phi = f(x)
        grads = [_fd4(f, x, mu, _FD_STEP) for mu in range(4)]
        return np.stack(grads, axis=-1) * METRIC / phi[..., None]


@dataclass(frozen=True)
class FreeParticle(WaveFunction):
    """Plane wave ``exp(-i p.x / hbar)``."""

    p: tuple

    def value(self, x, params):
        return np.exp(-1j * minkowski_dot(np.asarray(self.p, float), x) / params.hbar_eff)

    def log_gradient(self, x, params):
        x = np.asarray(x, dtype=float)
        return -1j * self.action_gradient(x, params) / params.hbar_eff

    def action_gradient(self, x, params):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(self.p, float), x.shape).copy()


@dataclass(frozen=True)
class ScalarVolkov(WaveFunction):
    """Scalar Volkov state ``exp(-i S / hbar)`` in a plane wave.

    With ``phi = k.x`` and the carrier ``h(phi)`` of the wave,

        S = p.x - e a0 (p.eps)/(k.p) H1(phi) - e^2 a0^2 (eps.eps)/(2 k.p) H2(phi)

    where ``H1`` and ``H2`` are the running integrals of ``h`` and ``h^2``.
    The kinetic momentum ``d^mu S + e A^mu`` is real and on shell, so the
    complex velocity of this state has no imaginary part.
    """

    p: tuple
    wave: PlaneWave

    def __post_init__(self):
        if abs(self._k_dot_p()) < 1e-14:
            raise DomainError("Volkov state needs k.p != 0")

    def _k_dot_p(self):
        return minkowski_dot(np.asarray(self.wave.k, float), np.asarray(self.p, float))

    def _coefficients(self, params):
        k = np.asarray(self.wave.k, float)
        eps = np.asarray(self.wave.eps, float)
        p = np.asarray(self.p, float)
        kp = self._k_dot_p()
        e = params.charge_e
        linear = e * self.wave.a0 * minkowski_dot(p, eps) / kp
        quadratic = e**2 * self.wave.a0**2 * minkowski_dot(eps, eps) / (2.0 * kp)
        return k, p, linear, quadratic

    def action(self, x, params):
        k, p, linear, quadratic = self._coefficients(params)
        phase = self.wave.phase(x)
        carrier = self.wave.carrier
        return minkowski_dot(p, x) - linear * carrier.integral(phase) - quadratic * carrier.square_integral(phase)

    def action_gradient(self, x, params):
        """Contravariant d^mu S."""
        k, p, linear, quadratic = self._coefficients(params)
        h = self.wave.carrier.value(self.wave.phase(x))
        return p - (linear * h + quadratic * h * h)[..., None] * k

    def value(self, x, params):
        return np.exp(-1j * self.action(x, params) / params.hbar_eff)

    def log_gradient(self, x, params):
        return -1j * self.action_gradient(x, params) / params.hbar_eff


@dataclass(frozen=True)
class CustomWave(WaveFunction):
    """Wave function given by a vectorised callable ``phi(x, params)``.

    The log-gradient uses fourth-order central differences.
    """

    func: object
    scale: float = 1.0

    def value(self, x, params):
        return self.func(np.asarray(x, dtype=float), params)


@dataclass(frozen=True)
class Custom1D:
    """One-dimensional Schrodinger test bed ``psi(x, t)``.

    ``psi`` is a vectorised callable ``psi(x, t)``; ``dlog`` optionally gives
    the analytic ``d_x ln psi``.  The complex velocity is
    ``V = -i (hbar/m0) d_x ln psi`` with ``v = Re V`` and ``u = -Im V``.
    """

    psi: object
    dlog: object = None
    scale: float = 1.0
    name: str = "custom"

    def value(self, x, t=0.0):
        return self.psi(np.asarray(x, dtype=float), t)

    def log_derivative(self, x, t=0.0):
        x = np.asarray(x, dtype=float)
        if self.dlog is not None:
            return self.dlog(x, t)
        h = _FD_STEP
        f = lambda y: self.psi(y, t)
        return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h) / f(x)


def harmonic_ground_state(sigma):
    """Ground state ``exp(-x^2 / 2 sigma^2)`` (time factor dropped)."""
    return Custom1D(
        psi=lambda x, t: np.exp(-x * x / (2 * sigma**2)) + 0j,
        dlog=lambda x, t: -x / sigma**2 + 0j,
        name="harmonic-ground",
    )


def harmonic_first_excited(sigma):
    """First excited state ``x exp(-x^2 / 2 sigma^2)``, with a node at 0."""
    return Custom1D(
        psi=lambda x, t: x / sigma * np.exp(-x * x / (2 * sigma**2)) + 0j,
        name="harmonic-first-excited",
        scale=np.exp(-0.5),
    )


def harmonic_coherent_state(sigma, amplitude, params):
    """Oscillating Gaussian packet of a harmonic oscillator.

    The centre follows ``q(t) = amplitude cos(omega t)`` with
    ``omega = hbar / (m0 sigma^2)`` and the packet keeps the ground-state width.
    """
    omega = params.hbar_eff / (params.m0 * sigma**2)
    hbar = params.hbar_eff

    def centre(t):
        return amplitude * np.cos(omega * t), -params.m0 * omega * amplitude * np.sin(omega * t)

    def psi(x, t):
        q, p = centre(t)
        return np.exp(-((x - q) ** 2) / (2 * sigma**2) + 1j * p * x / hbar)

    def dlog(x, t):
        q, p = centre(t)
        return -(x - q) / sigma**2 + 1j * p / hbar

    return Custom1D(psi=psi, dlog=dlog, name="harmonic-coherent")


def drift_pair_from(v):
    """Split a complex velocity into (V+, V-)."""
    return v.real - v.imag, v.real + v.imag


def recompose(v_plus, v_minus):
    """Inverse of :func:`drift_pair_from`."""
    return 0.5 * (v_plus + v_minus) - 0.5j * (v_plus - v_minus)


def _raise_on_nodes(x, nodes):
    if np.any(nodes):
        where = np.asarray(x)[nodes] if np.ndim(nodes) else np.asarray(x)
        raise NodeSingularity("wave function vanishes; the complex velocity is singular", point=where)


class VelocityField:
    """Shared helpers for velocity fields."""

    dim = 4
    metric = METRIC

    @property
    def lam(self):
        return self.params.lambda_()

    def complex_velocity(self, x, tau=0.0):
        v, nodes = self.velocity(x, tau)
        _raise_on_nodes(x, nodes)
        return v

    def drift_pair(self, x, tau=0.0):
        return drift_pair_from(self.complex_velocity(x, tau))


@dataclass(frozen=True)
class ComplexVelocityField(VelocityField):
    """The velocity field of a wave function in an external profile."""

    wave: WaveFunction
    profile: object = field(default_factory=Vacuum)
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def velocity(self, x, tau=0.0):
        x = np.asarray(x, dtype=float)
        p = self.params
        if p.hbar_eff == 0:
            # classical limit: only the phase survives; use its gradient directly
            grad = self.wave.action_gradient(x, p) + 0j
            nodes = np.zeros(x.shape[:-1], dtype=bool)
        else:
            phi = self.wave.value(x, p)
            nodes = np.abs(phi) < NODE_THRESHOLD * self.wave.scale
            with np.errstate(all="ignore"):
                grad = 1j * p.hbar_eff * self.wave.log_gradient(x, p)
        v = (grad + p.charge_e * self.profile.potential(x)) / p.m0
        if np.any(nodes):
            v = np.where(nodes[..., None], 0.0, v)
        return v, nodes


@dataclass(frozen=True)
class VelocityField1D(VelocityField):
    """Velocity field of a :class:`Custom1D` state; coordinates are ``(x,)``."""

    wave: Custom1D
    params: PhysicalParams = field(default_factory=PhysicalParams)
    dim = 1
    metric = np.array([-1.0])

    def velocity(self, x, tau=0.0):
        x = np.asarray(x, dtype=float)
        xs = x[..., 0]
        psi = self.wave.value(xs, tau)
        nodes = np.abs(psi) < NODE_THRESHOLD * self.wave.scale
        with np.errstate(all="ignore"):
            dlog = self.wave.log_derivative(xs, tau)
            v = -1j * (self.params.hbar_eff / self.params.m0) * dlog
        v = np.where(nodes, 0.0, v)
        return v[..., None], nodes


@dataclass(frozen=True, eq=False)
class ClassicalFlowField(VelocityField):
    """Real velocity field carried by a reference trajectory.

    ``V^mu(x) = u^mu(t = x^0)`` where ``u(t)`` is the four-velocity of the
    reference trajectory as a function of coordinate time.  Spatial
    translates of a trajectory in a uniform field are again trajectories,
    so this is a consistent flow there.  It is used for uniform fields
    that have no closed-form Klein-Gordon state; as ``lam -> 0`` its paths
    reduce to the reference trajectory.
    """

    tau: np.ndarray
    x: np.ndarray
    u: np.ndarray
    params: PhysicalParams = field(default_factory=PhysicalParams)

    def __post_init__(self):
        t = np.asarray(self.x)[:, 0]
        if np.any(np.diff(t) <= 0):
            raise DomainError("reference trajectory must move forward in coordinate time")
        object.__setattr__(self, "_spline", make_interp_spline(t, np.asarray(self.u), k=5))
        object.__setattr__(self, "_t_range", (t[0], t[-1]))

    @property
    def t_range(self):
        return self._t_range

    def in_domain(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return (t >= self._t_range[0]) & (t <= self._t_range[1])

    def velocity(self, x, tau=0.0):
        x = np.asarray(x, dtype=float)
        v = self._spline(x[..., 0]) + 0j
        return v, np.zeros(x.shape[:-1], dtype=bool)


def complex_velocity(wave, profile, x, params):
    """V^mu at x for a 4D wave function; raises NodeSingularity at nodes."""
    return ComplexVelocityField(wave, profile, params).complex_velocity(x)


def drift_pair(field_, x, tau=0.0):
    """Forward and backward drifts (V+, V-) of a velocity field at x."""
    return field_.drift_pair(x, tau)


def kg_residual(wave, profile, x, h, params):
    """Finite-difference Klein-Gordon residual normalised by m0^2 |phi|.

    Evaluates ``-hbar^2 box phi + i hbar e (d.A) phi + 2 i hbar e A.d phi
    + e^2 A.A phi - m0^2 phi`` with second-order central stencils.
    """
    if not h > 0:
        raise DomainError("h must be positive")
    x = np.asarray(x, dtype=float)
    hbar, e, m = params.hbar_eff, params.charge_e, params.m0
    f = lambda y: wave.value(y, params)
    phi = f(x)
    a = profile.potential(x)
    box = 0.0
    a_dot_grad = 0.0
    div_a = 0.0
    for mu in range(4):
        step = np.zeros(4)
        step[mu] = h
        fp, fm = f(x + step), f(x - step)
        box = box + METRIC[mu] * (fp - 2 * phi + fm) / h**2
        a_dot_grad = a_dot_grad + a[..., mu] * (fp - fm) / (2 * h)
        div_a = div_a + (profile.potential(x + step)[..., mu] - profile.potential(x - step)[..., mu]) / (2 * h)
    total = -(hbar**2) * box + 1j * hbar * e * div_a * phi + 2j * hbar * e * a_dot_grad
    total = total + (e**2 * minkowski_dot(a, a) - m**2) * phi
    return total / (m**2 * np.abs(phi))
