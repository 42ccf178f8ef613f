"""Quantum parameter chi and the quantumness factor q(chi).

The factor is

    q(chi) = 9 sqrt(3) / (8 pi) [ int_0^{1/chi} dr r int_{r/(1-chi r)}^inf K_{5/3}
                                 + int_0^{1/chi} dr chi^2 r^3 / (1 - chi r) K_{2/3}(r/(1-chi r)) ]

Substituting ``s = r / (1 - chi r)`` maps the outer range onto ``(0, inf)``
and removes the endpoint divergence.  Integrating the first term by parts
in ``s`` then removes the inner integral, because the antiderivative of
``s / (1 + chi s)^3`` is ``s^2 / (2 (1 + chi s)^2)``.  The result is a
single integral with an exponentially decaying integrand,

    q(chi) = 9 sqrt(3) / (8 pi) int_0^inf [ s^2 K_{5/3}(s) / (2 (1 + chi s)^2)
                                            + chi^2 s^3 K_{2/3}(s) / (1 + chi s)^4 ] ds,

which is regular at ``chi = 0`` where it reduces to the normalisation
``int_0^inf s^2 K_{5/3} / 2 = 8 pi / (9 sqrt 3)``.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import PhysicalParams, lower, minkowski_dot, photon_energy_ratio, si_to_sim, unit_rapidity_velocity
from .errors import ConvergenceError, DomainError
from .fields import ConstantCrossed

PREFACTOR = 9.0 * np.sqrt(3.0) / (8.0 * np.pi)
Q_TABLE_HEADER = ("intensity_W_cm2", "energy_MeV", "chi", "q_full", "q_sqed")


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x) for x > 0.

    Above x = 600 the scaled function is used, since ``kv`` flushes to zero
    near x = 700 while the true value is still a normal double.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(np.isnan(x)):
        raise DomainError("bessel_k needs x > 0")
    with np.errstate(under="ignore"):
        return np.where(x < 600.0, special.kv(nu, x), special.kve(nu, x) * np.exp(-x))


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule in ``u = s^(1/3)`` on ``[0, s_max^(1/3)]``.

    The cube-root map smooths the ``s^(1/3)`` behaviour of the integrand at
    the origin.  ``tolerance`` is the convergence gate: the rule is
    re-evaluated with twice the panels and must agree to this level.
    """

    panels: int = 48
    order: int = 16
    s_max: float = 90.0
    tolerance: float = 1e-6
    check: bool = True

    def nodes(self, panels=None):
        panels = panels or self.panels
        g, w = np.polynomial.legendre.leggauss(self.order)
        edges = np.linspace(0.0, self.s_max ** (1.0 / 3.0), panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        u = (mid[:, None] + half[:, None] * g[None, :]).ravel()
        wu = (half[:, None] * w[None, :]).ravel()
        # s = u^3, ds = 3 u^2 du
        return u**3, 3.0 * u**2 * wu


DEFAULT_QUADRATURE = QuadratureSpec()


def _integrand(s, chi, recoil):
    d = 1.0 + chi * s
    val = s * s * special.kv(5.0 / 3.0, s) / (2.0 * d * d)
    if recoil:
        val = val + chi * chi * s**3 * special.kv(2.0 / 3.0, s) / d**4
    return val


def _q(chi, quad, recoil):
    chi = float(chi)
    if not chi >= 0 or not np.isfinite(chi):
        raise DomainError(f"chi must be finite and >= 0, got {chi}")
    s, w = quad.nodes()
    value = PREFACTOR * np.dot(w, _integrand(s, chi, recoil))
    if quad.check:
        s2, w2 = quad.nodes(2 * quad.panels)
        refined = PREFACTOR * np.dot(w2, _integrand(s2, chi, recoil))
        if abs(refined - value) > quad.tolerance:
            raise ConvergenceError(f"q({chi}) quadrature not converged: change {abs(refined - value):.3e}")
        value = refined
    return float(value)


def q_full(chi, quad=DEFAULT_QUADRATURE):
    """Quantumness factor including the recoil (K_{2/3}) term."""
    return _q(chi, quad, recoil=True)


def q_sqed(chi, quad=DEFAULT_QUADRATURE):
    """The first (K_{5/3}) term of q alone."""
    return _q(chi, quad, recoil=False)


@dataclass(frozen=True)
class ChiParams:
    """Field tensor and four-velocity at the particle, with physical constants."""

    field_tensor: np.ndarray
    velocity: np.ndarray
    params: PhysicalParams

    @classmethod
    def from_si(cls, intensity_W_cm2, energy_MeV, wavelength_um=0.8):
        """Head-on collision with the crossed-field limit of a plane wave.

        The wave runs along +z with its peak field, the electron along -z.
        Time is measured in inverse laser frequencies, so ``hbar_eff`` is the
        photon energy in units of the electron rest energy.
        """
        a0, gamma = si_to_sim(intensity_W_cm2, energy_MeV, wavelength_um)
        params = PhysicalParams(hbar_eff=photon_energy_ratio(wavelength_um), charge_e=1.0)
        f = ConstantCrossed(a0).field(np.zeros(4))
        return cls(f, unit_rapidity_velocity(gamma, (0.0, 0.0, -1.0)), params)


def compute_chi(chi_params, convention="three_halves"):
    """chi = (3/2) hbar / (m0^2 c^3) sqrt(-(e F v).(e F v)).

    ``convention="three_halves"`` keeps the 3/2 prefactor; ``"qed"`` returns the
    common quantum parameter, two thirds of it.
    """
    p = chi_params.params
    v = np.asarray(chi_params.velocity, dtype=float)
    if minkowski_dot(v, v) <= 0:
        raise DomainError("chi needs a timelike velocity")
    force = -p.charge_e * np.asarray(chi_params.field_tensor) @ lower(v)
    chi = 1.5 * p.hbar_eff / (p.m0**2 * p.c**3) * np.sqrt(max(-minkowski_dot(force, force), 0.0))
    if convention == "qed":
        return float(chi * 2.0 / 3.0)
    if convention != "three_halves":
        raise DomainError(f"unknown chi convention {convention!r}")
    return float(chi)


def emit_q_table(intensities=None, energies=None, chi_grid=None, wavelength_um=0.8, quad=DEFAULT_QUADRATURE):
    """Rows ``(intensity, energy, chi, q_full, q_sqed)`` over a grid.

    Either the outer product of ``intensities`` (W/cm^2) and ``energies``
    (MeV) or a bare ``chi_grid``; in the latter case the SI columns are NaN.
    """
    rows = []
    if chi_grid is not None:
        points = [(np.nan, np.nan, float(c)) for c in chi_grid]
    else:
        if intensities is None or energies is None or len(intensities) == 0 or len(energies) == 0:
            raise DomainError("q table needs a nonempty grid")
        points = []
        for intensity in intensities:
            for energy in energies:
                chi = compute_chi(ChiParams.from_si(intensity, energy, wavelength_um))
                points.append((float(intensity), float(energy), chi))
    if not points:
        raise DomainError("q table needs a nonempty grid")
    for intensity, energy, chi in points:
        rows.append((intensity, energy, chi, q_full(chi, quad), q_sqed(chi, quad)))
    return rows


def write_q_table(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(Q_TABLE_HEADER)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
