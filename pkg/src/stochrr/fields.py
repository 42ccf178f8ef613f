"""External electromagnetic field profiles.

Each profile evaluates the potential ``A^mu(x)``, the tensor
``F^{mu nu}(x) = d^mu A^nu - d^nu A^mu`` and its gradient
``d_alpha F^{mu nu}`` (returned with axes ``(..., alpha, mu, nu)``).
All evaluations broadcast over leading axes of ``x``.

Conventions (shared by every module)

============================  ==========================================
quantity                      convention
============================  ==========================================
metric                        diag(+1, -1, -1, -1)
electric field                ``F^{0i} = -E^i``
magnetic field                ``F^{ij} = -eps_{ijk} B^k``, so ``F^{12} = -B_z``
electron force                ``m0 du^mu/dtau = -e F^{mu nu} u_nu``
plane-wave potential          ``A^mu = a0 eps^mu g(k.x) cos(k.x)``
============================  ==========================================
"""
from dataclasses import dataclass

import numpy as np

from .core import METRIC, lower, minkowski_dot
from .errors import DomainError

_ZERO4 = np.zeros(4)


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 4:
        raise DomainError(f"expected four-vectors, got shape {x.shape}")
    return x


def _wedge(a, b):
    """Antisymmetric tensor a^mu b^nu - a^nu b^mu."""
    return np.outer(a, b) - np.outer(b, a)


class FieldProfile:
    """Interface shared by all profiles."""

    def potential(self, x):
        raise NotImplementedError

    def field(self, x):
        raise NotImplementedError

    def field_gradient(self, x):
        raise NotImplementedError

    def __add__(self, other):
        return Superposition((self, other))


@dataclass(frozen=True)
class Vacuum(FieldProfile):
    def potential(self, x):
        return np.zeros_like(_as_points(x))

    def field(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1] + (4, 4))

    def field_gradient(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1] + (4, 4, 4))


@dataclass(frozen=True)
class ConstantMagnetic(FieldProfile):
    """Uniform magnetic field along z in the symmetric gauge."""

    b_z: float

    def potential(self, x):
        x = _as_points(x)
        a = np.zeros_like(x)
        a[..., 1] = -0.5 * self.b_z * x[..., 2]
        a[..., 2] = 0.5 * self.b_z * x[..., 1]
        return a

    def field(self, x):
        x = _as_points(x)
        f = np.zeros(x.shape[:-1] + (4, 4))
        f[..., 1, 2] = -self.b_z
        f[..., 2, 1] = self.b_z
        return f

    def field_gradient(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1] + (4, 4, 4))


class _TrigCarrier:
    """Carrier g(phi) cos(phi) written as a finite cosine sum.

    Supports the pulse window ``[0, 2 pi N]`` (or the whole line), its first
    two derivatives and the running integrals of the carrier and of its
    square, which the Volkov phase needs in closed form.
    """

    def __init__(self, cycles):
        self.cycles = cycles
        if cycles is None:
            self.terms = [(1.0, 1.0)]
            self.support = None
        else:
            n = float(cycles)
            # sin^2(phi/2N) cos(phi) = cos(phi)/2 - cos((1+1/N)phi)/4 - cos((1-1/N)phi)/4
            self.terms = [(0.5, 1.0), (-0.25, 1.0 + 1.0 / n), (-0.25, 1.0 - 1.0 / n)]
            self.support = (0.0, 2.0 * np.pi * n)

    def _inside(self, phi):
        if self.support is None:
            return np.ones_like(phi, dtype=bool)
        return (phi >= self.support[0]) & (phi <= self.support[1])

    def _clip(self, phi):
        if self.support is None:
            return phi
        return np.clip(phi, *self.support)

    def value(self, phi, order=0):
        phi = np.asarray(phi, dtype=float)
        out = np.zeros_like(phi)
        for c, w in self.terms:
            if order == 0:
                out += c * np.cos(w * phi)
            elif order == 1:
                out -= c * w * np.sin(w * phi)
            elif order == 2:
                out -= c * w * w * np.cos(w * phi)
            else:
                raise ValueError("order must be 0, 1 or 2")
        return np.where(self._inside(phi), out, 0.0)

    @staticmethod
    def _sin_integral(w, phi):
        if w == 0.0:
            return phi
        return np.sin(w * phi) / w

    def integral(self, phi):
        """Running integral of the carrier from 0 to phi."""
        phi = self._clip(np.asarray(phi, dtype=float))
        out = np.zeros_like(phi)
        for c, w in self.terms:
            out += c * self._sin_integral(w, phi)
        return out

    def square_integral(self, phi):
        """Running integral of the squared carrier from 0 to phi."""
        phi = self._clip(np.asarray(phi, dtype=float))
        out = np.zeros_like(phi)
        for cj, wj in self.terms:
            for ck, wk in self.terms:
                out += 0.5 * cj * ck * (self._sin_integral(wj - wk, phi) + self._sin_integral(wj + wk, phi))
        return out


@dataclass(frozen=True)
class PlaneWave(FieldProfile):
    """Plane wave ``A^mu = a0 eps^mu g(phi) cos(phi)`` with ``phi = k.x``.

    ``cycles=None`` gives an infinite wave; an integer gives a sin^2
    envelope ``g = sin^2(phi / 2N)`` supported on ``0 <= phi <= 2 pi N``.
    ``k`` must be null and ``eps`` spacelike unit and transverse to ``k``,
    which keeps the potential in Lorenz gauge and the field source free.
    """

    a0: float
    k: tuple = (1.0, 0.0, 0.0, 1.0)
    eps: tuple = (0.0, 1.0, 0.0, 0.0)
    cycles: int = None

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        eps = np.asarray(self.eps, dtype=float)
        scale = np.dot(k, k)
        if abs(minkowski_dot(k, k)) > 1e-12 * scale:
            raise DomainError("plane-wave k must be null")
        if abs(minkowski_dot(k, eps)) > 1e-12 * np.sqrt(scale):
            raise DomainError("polarization must satisfy eps.k = 0")
        if abs(minkowski_dot(eps, eps) + 1.0) > 1e-12:
            raise DomainError("polarization must satisfy eps.eps = -1")
        if self.cycles is not None and self.cycles < 1:
            raise DomainError("pulse needs at least one cycle")
        object.__setattr__(self, "_carrier", _TrigCarrier(self.cycles))

    @property
    def carrier(self):
        return self._carrier

    def phase(self, x):
        return minkowski_dot(np.asarray(self.k, dtype=float), _as_points(x))

    def potential(self, x):
        g = self._carrier.value(self.phase(x))
        return self.a0 * g[..., None] * np.asarray(self.eps, dtype=float)

    def field(self, x):
        dg = self._carrier.value(self.phase(x), order=1)
        w = _wedge(np.asarray(self.k, dtype=float), np.asarray(self.eps, dtype=float))
        return self.a0 * dg[..., None, None] * w

    def field_gradient(self, x):
        d2g = self._carrier.value(self.phase(x), order=2)
        k = np.asarray(self.k, dtype=float)
        w = _wedge(k, np.asarray(self.eps, dtype=float))
        return self.a0 * d2g[..., None, None, None] * lower(k)[:, None, None] * w


@dataclass(frozen=True)
class ConstantCrossed(FieldProfile):
    """Uniform crossed field with ``|E| = |B| = e0``.

    With the defaults the electric field points along x, the magnetic field
    along y, and the configuration is the local limit of a wave travelling
    along +z.  The potential is ``A^mu = -(e0 / k^0) eps^mu (k.x)``.
    """

    e0: float
    k: tuple = (1.0, 0.0, 0.0, 1.0)
    eps: tuple = (0.0, 1.0, 0.0, 0.0)

    def __post_init__(self):
        k = np.asarray(self.k, dtype=float)
        eps = np.asarray(self.eps, dtype=float)
        if abs(minkowski_dot(k, k)) > 1e-12 * np.dot(k, k) or abs(minkowski_dot(k, eps)) > 1e-12:
            raise DomainError("crossed field needs null k and eps.k = 0")
        if abs(minkowski_dot(eps, eps) + 1.0) > 1e-12:
            raise DomainError("polarization must satisfy eps.eps = -1")

    def potential(self, x):
        k = np.asarray(self.k, dtype=float)
        phi = minkowski_dot(k, _as_points(x))
        return -(self.e0 / k[0]) * phi[..., None] * np.asarray(self.eps, dtype=float)

    def field(self, x):
        x = _as_points(x)
        k = np.asarray(self.k, dtype=float)
        w = -(self.e0 / k[0]) * _wedge(k, np.asarray(self.eps, dtype=float))
        return np.broadcast_to(w, x.shape[:-1] + (4, 4)).copy()

    def field_gradient(self, x):
        x = _as_points(x)
        return np.zeros(x.shape[:-1] + (4, 4, 4))


@dataclass(frozen=True)
class Superposition(FieldProfile):
    """Sum of profiles; linearity keeps gauge and source-free properties."""

    parts: tuple

    def potential(self, x):
        return sum(p.potential(x) for p in self.parts)

    def field(self, x):
        return sum(p.field(x) for p in self.parts)

    def field_gradient(self, x):
        return sum(p.field_gradient(x) for p in self.parts)


def eval_potential(profile, x):
    """A^mu at x."""
    return profile.potential(x)


def eval_field(profile, x):
    """F^{mu nu} at x."""
    return profile.field(x)


def _partials(func, x, h):
    """Central differences d func / d x^alpha stacked on a new axis -2.

    ``func`` maps points ``(..., 4)`` to arrays ``(..., *s)``; the result has
    shape ``(..., 4, *s)``.
    """
    x = _as_points(x)
    out = []
    for alpha in range(4):
        step = np.zeros(4)
        step[alpha] = h
        out.append((func(x + step) - func(x - step)) / (2.0 * h))
    return np.stack(out, axis=x.ndim - 1)


def potential_curl(profile, x, h):
    """Finite-difference F^{mu nu} built from the potential alone."""
    d = _partials(profile.potential, x, h)  # (..., alpha, nu) = d_alpha A^nu
    d_up = d * METRIC[:, None]  # d^alpha A^nu
    return d_up - np.swapaxes(d_up, -1, -2)


def gauge_residual(profile, x, h):
    """Central-difference estimate of the Lorenz condition d_mu A^mu."""
    if not h > 0:
        raise DomainError("h must be positive")
    d = _partials(profile.potential, x, h)
    return np.trace(d, axis1=-2, axis2=-1)


def source_residual(profile, x, h):
    """Central-difference estimate of d_mu F^{mu nu} (a four-vector)."""
    if not h > 0:
        raise DomainError("h must be positive")
    d = _partials(profile.field, x, h)  # (..., alpha, mu, nu)
    return np.einsum("...aan->...n", d)
