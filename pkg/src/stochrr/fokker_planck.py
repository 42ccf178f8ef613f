"""Fokker-Planck grid solver, density estimators, osmotic and continuity checks.

The 1D equations

    d_tau p + d_x [v+ p] = + (lam^2 / 2) d_x^2 p      (forward)
    d_tau p + d_x [v- p] = - (lam^2 / 2) d_x^2 p      (backward)

are stepped explicitly in flux form on a uniform cell-centred grid with
zero-flux walls, so the discrete mass is conserved to round-off.  A
backward step moves tau down by ``dt``; in that direction the backward
equation is an ordinary diffusion with drift ``-v-`` and is stable.
"""
import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, InsufficientStatistics, StabilityError


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Density values on a uniform cell-centred grid.

    ``axes`` holds one array of cell centres per coordinate and ``values``
    the density with one axis per coordinate.
    """

    axes: tuple
    values: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        shape = tuple(len(a) for a in self.axes)
        if np.shape(self.values) != shape:
            raise DomainError(f"density values {np.shape(self.values)} do not match axes {shape}")

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) if len(a) > 1 else 1.0 for a in self.axes)

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def mass(self):
        return float(np.sum(self.values) * self.cell_volume)

    def moment(self, order, axis=0):
        """Central moment (order >= 2) or mean (order 1) along one axis of a 1D grid."""
        x = self.axes[axis]
        w = self.values / np.sum(self.values)
        mean = float(np.sum(w * x))
        if order == 1:
            return mean
        return float(np.sum(w * (x - mean) ** order))


def uniform_axis(lo, hi, n):
    """Cell centres of ``n`` equal cells covering ``[lo, hi]``."""
    dx = (hi - lo) / n
    return lo + dx * (np.arange(n) + 0.5)


def gaussian_grid(axis, mean, std, tau=0.0):
    """Normalised Gaussian density on a 1D axis (point values, renormalised)."""
    axis = np.asarray(axis, dtype=float)
    p = np.exp(-0.5 * ((axis - mean) / std) ** 2)
    p /= np.sum(p) * (axis[1] - axis[0])
    return DensityGrid((axis,), p, tau)


def drift_function(field_, branch):
    """Real drift ``v+`` or ``v-`` of a 1D velocity field as ``f(x, t)``."""
    if branch not in ("plus", "minus"):
        raise DomainError("branch must be 'plus' or 'minus'")

    def drift(x, t):
        v = field_.complex_velocity(np.asarray(x, dtype=float)[..., None], t)[..., 0]
        return v.real - v.imag if branch == "plus" else v.real + v.imag

    return drift


def stable_dt(dx, lambda0, max_speed):
    """Largest explicit step keeping every update coefficient nonnegative."""
    diffusion = 0.5 * lambda0**2
    rate = 2.0 * diffusion / dx**2 + max_speed / dx
    return np.inf if rate == 0 else 1.0 / rate


def _faces(x):
    return 0.5 * (x[1:] + x[:-1])


def fp1d_evolve(grid, drift, lambda0, dt, direction="forward"):
    """One explicit flux-form step of the 1D Fokker-Planck equation.

    ``drift(x, tau)`` returns ``v+`` for forward steps and ``v-`` for
    backward ones.  Faces use the drift at the face and the arithmetic mean
    of the neighbouring densities; the outer walls carry no flux.

    Raises
    ------
    StabilityError
        If ``dt`` exceeds the positivity bound or the cell Peclet number
        ``|v| dx / D`` exceeds 2; ``suggested_dt`` is attached.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    if direction not in ("forward", "backward"):
        raise DomainError("direction must be 'forward' or 'backward'")
    (x,) = grid.axes
    dx = x[1] - x[0]
    diffusion = 0.5 * lambda0**2
    xf = _faces(x)
    v = np.asarray(drift(xf, grid.tau), dtype=float)
    if direction == "backward":
        v = -v
    speed = float(np.max(np.abs(v))) if v.size else 0.0
    if speed * dx > 2.0 * diffusion:
        raise StabilityError(
            f"cell Peclet number {speed * dx / max(diffusion, 1e-300):.3g} > 2; refine the grid", suggested_dt=None
        )
    limit = stable_dt(dx, lambda0, speed)
    if dt > limit:
        raise StabilityError(f"dt={dt:.3e} exceeds the stability bound {limit:.3e}", suggested_dt=0.9 * limit)
    p = grid.values
    flux = np.zeros(len(x) + 1)
    flux[1:-1] = v * 0.5 * (p[1:] + p[:-1]) - diffusion * (p[1:] - p[:-1]) / dx
    new = p - dt / dx * (flux[1:] - flux[:-1])
    tau = grid.tau + dt if direction == "forward" else grid.tau - dt
    return replace(grid, values=new, tau=tau)


def fp1d_run(grid, drift, lambda0, dt, n_steps, direction="forward", record_every=None):
    """Repeat :func:`fp1d_evolve`; optionally keep snapshots every few steps."""
    snapshots = [grid]
    for i in range(n_steps):
        grid = fp1d_evolve(grid, drift, lambda0, dt, direction)
        if record_every and (i + 1) % record_every == 0:
            snapshots.append(grid)
    return grid, snapshots


def fp1d_stationary(axis, drift, lambda0, tau=0.0):
    """Zero-flux fixed point of :func:`fp1d_evolve` for a forward drift.

    Vanishing face fluxes give ``p[i+1] / p[i] = (D/dx + v/2) / (D/dx - v/2)``.
    """
    axis = np.asarray(axis, dtype=float)
    dx = axis[1] - axis[0]
    diffusion = 0.5 * lambda0**2
    v = np.asarray(drift(_faces(axis), tau), dtype=float)
    a = diffusion / dx
    if np.any(np.abs(v) >= 2 * a):
        raise StabilityError("cell Peclet number too large for a positive stationary state")
    log_ratio = np.log((a + 0.5 * v) / (a - 0.5 * v))
    logp = np.concatenate([[0.0], np.cumsum(log_ratio)])
    p = np.exp(logp - np.max(logp))
    p /= np.sum(p) * dx
    return DensityGrid((axis,), p, tau)


def density_estimate(ensemble, tau_index, edges=None, axes=(0,)):
    """Histogram density of the ensemble at one grid time.

    ``edges`` is a sequence of bin-edge arrays, one per selected coordinate;
    the default uses Scott's rule per coordinate.  The density is
    normalised by the total path count, so it integrates to the alive
    fraction.
    """
    pts = ensemble.positions(tau_index)[:, list(axes)]
    if pts.shape[0] == 0:
        raise InsufficientStatistics("no alive paths")
    if edges is None:
        edges = []
        for c in range(pts.shape[1]):
            col = pts[:, c]
            if np.ptp(col) == 0:
                edges.append(np.array([col[0] - 0.5, col[0] + 0.5]))
            else:
                edges.append(np.histogram_bin_edges(col, bins="scott"))
    counts, used = np.histogramdd(pts, bins=[np.asarray(e, dtype=float) for e in edges])
    widths = [np.diff(e) for e in used]
    volume = widths[0]
    for w in widths[1:]:
        volume = np.multiply.outer(volume, w)
    centres = tuple(0.5 * (e[1:] + e[:-1]) for e in used)
    values = counts / (ensemble.n_paths * volume)
    return DensityGrid(centres, values, float(ensemble.tau[tau_index]))


def _log_density_gradient(grid):
    """Central differences of ln p on a 1D grid (interior cells)."""
    (x,) = grid.axes
    p = grid.values
    grad = np.full_like(p, np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p)
        grad[1:-1] = (logp[2:] - logp[:-2]) / (x[2:] - x[:-2])
    return grad


def osmotic_residual(field_, grid, x, floor=None, tau=0.0):
    """Im V(x) - (lam^2/2) d^mu ln p(x) for a 1D velocity field.

    ``d^mu = g^{mu mu} d_mu`` with the field's metric, so in the 1D test bed
    this is ``Im V + (lam^2/2) d_x ln p = -(u - (lam^2/2) d_x ln p)``.  The
    log-gradient is interpolated linearly between cell centres.

    Raises
    ------
    InsufficientStatistics
        If the density at any requested point is below ``floor`` (default
        ``1e-3`` of the peak).
    """
    (axis,) = grid.axes
    x = np.atleast_1d(np.asarray(x, dtype=float))
    floor = 1e-3 * np.max(grid.values) if floor is None else floor
    dens = np.interp(x, axis, grid.values)
    grad = _log_density_gradient(grid)
    inside = (x >= axis[1]) & (x <= axis[-2])
    if np.any(dens < floor) or not np.all(inside):
        raise InsufficientStatistics("density below the noise floor or outside the interior of the grid")
    dlogp = np.interp(x, axis[1:-1], grad[1:-1])
    v = field_.complex_velocity(x[:, None], tau)[:, 0]
    lam = field_.lam
    return v.imag - 0.5 * lam**2 * field_.metric[0] * dlogp


def continuity_residual(snapshots, velocity_real):
    """Central-difference residual of ``d_t p + d_x [v p]`` on a (t, x) grid.

    ``snapshots`` is a sequence of 1D density grids at equally spaced times
    and ``velocity_real(x, t)`` the real part of the velocity.  Returns the
    residual on interior (t, x) nodes.
    """
    times = np.array([g.tau for g in snapshots])
    (x,) = snapshots[0].axes
    p = np.array([g.values for g in snapshots])
    dt = np.diff(times)
    if not np.allclose(dt, dt[0]):
        raise DomainError("snapshots must be equally spaced in time")
    dx = x[1] - x[0]
    flux = np.array([velocity_real(x, t) for t in times]) * p
    dp_dt = (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * dt[0])
    dflux_dx = (flux[1:-1, 2:] - flux[1:-1, :-2]) / (2 * dx)
    return dp_dt + dflux_dx


@dataclass(frozen=True, eq=False)
class CurrentDensityField:
    """Current ``j^mu`` and tau-integrated density ``rho`` on a grid.

    ``axes`` are the cell centres of the selected coordinates, ``current``
    has the grid shape plus a trailing component axis and ``stderr`` its
    Monte Carlo standard error (zero for grid-evaluated currents).
    """

    axes: tuple
    current: np.ndarray
    density: np.ndarray
    stderr: np.ndarray
    coordinates: tuple

    def divergence(self):
        """Central-difference divergence over the selected coordinates."""
        total = np.zeros(self.density.shape)
        for i, (axis, comp) in enumerate(zip(self.axes, self.coordinates)):
            total = total + np.gradient(self.current[..., comp], axis, axis=i, edge_order=2)
        return total


def _time_weights(tau):
    """Trapezoid weights for integrating over the recorded tau window."""
    tau = np.asarray(tau, dtype=float)
    w = np.zeros_like(tau)
    d = np.abs(np.diff(tau))
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def current_density(ensemble, field_, edges, coordinates=(0, 1), charge_e=1.0, c=1.0):
    """Stochastic current ``E[-e c int dtau Re V delta(x - x(tau))]`` on a grid.

    The tau integral covers only the simulated window, so densities near the
    initial and final clouds carry boundary terms.  Paths are histogrammed
    in the selected ``coordinates``; the remaining ones are integrated out.
    The standard error treats paths as independent units.
    """
    weights = _time_weights(ensemble.tau)
    edges = [np.asarray(e, dtype=float) for e in edges]
    shape = tuple(len(e) - 1 for e in edges)
    dim = ensemble.x.shape[-1]
    volume = np.prod([np.diff(e)[0] for e in edges])
    n = ensemble.n_paths
    alive = ensemble.alive
    # per-path sums so that the standard error reflects path-to-path spread
    per_path = np.zeros((n,) + shape + (dim,))
    per_path_rho = np.zeros((n,) + shape)
    coords = list(coordinates)
    for k, w in enumerate(weights):
        if w == 0:
            continue
        pts = ensemble.x[k]
        v = field_.complex_velocity(pts, ensemble.tau[k]).real
        idx = [np.searchsorted(e, pts[:, c], side="right") - 1 for e, c in zip(edges, coords)]
        ok = alive.copy()
        for i, s in zip(idx, shape):
            ok &= (i >= 0) & (i < s)
        rows = np.flatnonzero(ok)
        cell = tuple(i[ok] for i in idx)
        np.add.at(per_path, (rows,) + cell, w * v[ok])
        np.add.at(per_path_rho, (rows,) + cell, w)
    per_path /= volume
    per_path_rho /= volume
    scale = -charge_e * c
    mean_j = np.sum(per_path, axis=0) / n
    mean_rho = np.sum(per_path_rho, axis=0) / n
    var_j = np.sum((per_path - mean_j) ** 2, axis=0) / max(n - 1, 1)
    centres = tuple(0.5 * (e[1:] + e[:-1]) for e in edges)
    return CurrentDensityField(centres, scale * mean_j, mean_rho, np.abs(scale) * np.sqrt(var_j / n), tuple(coords))


def current_density_kg(wave, profile, points, density, params):
    """Klein-Gordon current normalised so that ``|phi|^2`` equals ``density``.

    ``j = -(i e c lam^2 / 2) [phi* D phi - phi D* phi*]`` with
    ``D^mu = d^mu - (i e / hbar) A^mu``, evaluated through the log-gradient:
    ``j = e c lam^2 rho Im(d^mu ln phi - (i e / hbar) A^mu)``.
    """
    points = np.asarray(points, dtype=float)
    lam2 = params.hbar_eff / params.m0
    covariant = wave.log_gradient(points, params) - 1j * params.charge_e / params.hbar_eff * profile.potential(points)
    return params.charge_e * params.c * lam2 * np.asarray(density)[..., None] * covariant.imag


def write_density_csv(grid, path, names=None):
    """Write a density snapshot with columns ``coordinates..., p``."""
    names = names or [f"x{i}" for i in range(len(grid.axes))]
    mesh = np.meshgrid(*grid.axes, indexing="ij")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(names) + ["p"])
        for idx in np.ndindex(grid.values.shape):
            writer.writerow([repr(float(m[idx])) for m in mesh] + [repr(float(grid.values[idx]))])
