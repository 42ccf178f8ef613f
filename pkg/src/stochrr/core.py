"""Minkowski algebra, physical parameters and the unit system.

Four-vectors are plain ``numpy`` arrays whose last axis has length 4 and
holds contravariant components ``(t, x, y, z)``.  Leading axes broadcast,
so a whole ensemble of positions is an array of shape ``(n, 4)``.

Simulation units set ``m0 = c = 1``.  The elementary charge ``e`` is a
positive parameter and the electron carries charge ``-e``, so the Lorentz
force reads ``m0 du/dtau = -e F u``.  The field tensor follows
``F^{mu nu} = d^mu A^nu - d^nu A^mu`` which gives ``F^{0i} = -E^i`` and
``F^{ij} = -eps_{ijk} B^k``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import DomainError

METRIC = np.array([1.0, -1.0, -1.0, -1.0])

# SI values used only at the conversion boundary
ELECTRON_MASS_MEV = constants.physical_constants["electron mass energy equivalent in MeV"][0]
TAU0_SI = constants.e**2 / (6 * np.pi * constants.epsilon_0 * constants.m_e * constants.c**3)
SCHWINGER_FIELD_SI = constants.m_e**2 * constants.c**3 / (constants.e * constants.hbar)


def lower(a):
    """Lower the index of a (possibly complex) four-vector array."""
    return np.asarray(a) * METRIC


def minkowski_dot(a, b):
    """Bilinear product a^mu b_mu with signature (+,-,-,-).

    No complex conjugation is applied; see :func:`complex_norm` for the
    Hermitian form.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    return a[..., 0] * b[..., 0] - a[..., 1] * b[..., 1] - a[..., 2] * b[..., 2] - a[..., 3] * b[..., 3]


def complex_norm(a, rtol=1e-12):
    """Return A*_mu A^mu, which is real for any complex four-vector.

    The imaginary residue is checked against ``rtol`` times the Euclidean
    size of ``A`` and the real part is returned.
    """
    a = np.asarray(a, dtype=complex)
    value = minkowski_dot(np.conj(a), a)
    scale = np.sum(np.abs(a) ** 2, axis=-1)
    assert np.all(np.abs(value.imag) <= rtol * scale + 1e-300), "complex_norm is not real"
    return value.real


def tensor_vector(f, v):
    """Contract F^{mu nu} v_nu for tensor arrays ``(..., 4, 4)``."""
    return np.einsum("...mn,...n->...m", f, lower(v))


def unit_rapidity_velocity(gamma, direction):
    """Four-velocity with Lorentz factor ``gamma`` along a spatial ``direction``."""
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    return np.concatenate([[gamma], np.sqrt(gamma**2 - 1.0) * n])


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants in simulation units.

    ``hbar_eff`` fixes the diffusion scale ``lambda**2 = hbar_eff / m0`` and
    ``tau0`` the radiation-reaction time.  The two are independent knobs so
    that the classical limit can be taken at fixed ``tau0``.
    """

    hbar_eff: float = 0.0
    tau0: float = 0.0
    charge_e: float = 1.0
    m0: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if self.hbar_eff < 0:
            raise DomainError(f"hbar_eff must be >= 0, got {self.hbar_eff}")
        if self.tau0 < 0:
            raise DomainError(f"tau0 must be >= 0, got {self.tau0}")
        if self.m0 <= 0 or self.c <= 0:
            raise DomainError("m0 and c must be positive")

    def lambda_(self):
        """Diffusion scale lambda = sqrt(hbar_eff / m0)."""
        return float(np.sqrt(self.hbar_eff / self.m0))

    @classmethod
    def from_lambda(cls, lam, m0=1.0, **kwargs):
        return cls(hbar_eff=m0 * lam**2, m0=m0, **kwargs)


def si_to_sim(intensity_W_cm2, energy_MeV, wavelength_um):
    """Convert laser and beam parameters to simulation units.

    Simulation time is measured in units of the inverse laser angular
    frequency, so the returned field amplitude is the normalised vector
    potential ``a0 = e E0 / (m c omega)`` of a linearly polarised wave with
    peak field ``E0 = sqrt(2 I / eps0 c)``.

    Returns
    -------
    field_amplitude : float
        Peak electric field in units of ``m c omega / e``.
    gamma : float
        Lorentz factor, ``energy / (m c^2)`` with ``energy`` the total energy.
    """
    for name, value in (("intensity", intensity_W_cm2), ("energy", energy_MeV), ("wavelength", wavelength_um)):
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    e_peak = np.sqrt(2.0 * intensity_W_cm2 * 1e4 / (constants.epsilon_0 * constants.c))
    omega = 2.0 * np.pi * constants.c / (wavelength_um * 1e-6)
    a0 = constants.e * e_peak / (constants.m_e * constants.c * omega)
    return float(a0), float(energy_MeV / ELECTRON_MASS_MEV)


def photon_energy_ratio(wavelength_um):
    """hbar omega / (m c^2) for a laser of the given wavelength.

    This is the value of ``hbar_eff`` when simulation time is measured in
    inverse laser frequencies.
    """
    if not wavelength_um > 0:
        raise DomainError("wavelength must be positive")
    omega = 2.0 * np.pi * constants.c / (wavelength_um * 1e-6)
    return float(constants.hbar * omega / (constants.m_e * constants.c**2))


def tau0_sim(wavelength_um):
    """The classical radiation time in units of the inverse laser frequency."""
    omega = 2.0 * np.pi * constants.c / (wavelength_um * 1e-6)
    return float(TAU0_SI * omega)
