"""Stochastic path samplers and mean-derivative operators.

Paths obey the Euler-Maruyama update

    forward:   x <- x + V+(x) dtau + lam dW     (tau increases)
    backward:  x <- x - V-(x) dtau + lam dW     (tau decreases)

with all components of ``dW`` independent ``N(0, dtau)``.  In 4D the time
coordinate is diffused together with the spatial ones; the opposite
filtration of ``x^0`` in the continuum construction is represented only
through the choice of drift branch and of the loop direction.  Generators
of the numerical process therefore agree with the mean derivatives for
functions whose second derivatives in ``x^0`` vanish.

Random numbers come from counter-based Philox streams.  Paths are grouped
in fixed blocks of :data:`BLOCK` paths; the stream of a block is keyed by
``(master_seed, direction, block_index)`` and each step draws one full
block of increments.  A path's noise is therefore a function of
``(master_seed, path_index, step)`` only, independent of the ensemble size
and of how blocks are distributed over worker threads.
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EnsembleCollapse, NodeSingularity, NumericError, StencilOutOfDomain

BLOCK = 2048
FORWARD, BACKWARD, INITIAL = 0, 1, 2
_DIRECTIONS = {"forward": FORWARD, "backward": BACKWARD}
_MAX_ROWS = 128
THREADS_ENV = "STOCHRR_THREADS"


def default_workers():
    """Worker threads from the ``STOCHRR_THREADS`` environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _direction_code(direction):
    try:
        return _DIRECTIONS[direction]
    except KeyError:
        raise DomainError(f"direction must be 'forward' or 'backward', got {direction!r}") from None


def block_generator(master_seed, block_index, stream):
    """Philox generator for one block of paths and one stream kind."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(stream), int(block_index)))
    return np.random.Generator(np.random.Philox(seq))


def _block_normals(gen, rows, dim, antithetic):
    if not antithetic:
        return gen.standard_normal((rows, BLOCK, dim))
    z = gen.standard_normal((rows, BLOCK // 2, dim))
    out = np.empty((rows, BLOCK, dim))
    out[:, 0::2] = z
    out[:, 1::2] = -z
    return out


@dataclass(frozen=True)
class WienerIncrement4:
    """One increment ``dW`` with covariance ``delta^{mu nu} dtau``."""

    dW: np.ndarray
    direction: str


def wiener_increments(master_seed, n, dtau, direction="forward", dim=4, step=0):
    """The increments that paths ``0..n-1`` receive at a given step."""
    code = _direction_code(direction)
    out = np.empty((n, dim))
    for b in range(-(-n // BLOCK)):
        gen = block_generator(master_seed, b, code)
        if step:
            gen.standard_normal((step, BLOCK, dim))
        lo, hi = b * BLOCK, min(n, (b + 1) * BLOCK)
        out[lo:hi] = gen.standard_normal((BLOCK, dim))[: hi - lo]
    return out * np.sqrt(dtau)


class WienerStream:
    """Sequential increments of a single path, consistent with the ensembles.

    The block stream is replayed, so the cost per step is one block draw.
    """

    def __init__(self, master_seed, path_index, direction="forward", dim=4, antithetic=False):
        self.master_seed = int(master_seed)
        self.path_index = int(path_index)
        self.direction = direction
        self.dim = dim
        self.antithetic = antithetic
        self._gen = block_generator(master_seed, path_index // BLOCK, _direction_code(direction))
        self._step = 0

    def increment(self, step, dtau):
        if step < self._step:
            raise DomainError("WienerStream only moves forward; make a new stream to replay")
        while self._step <= step:
            row = _block_normals(self._gen, 1, self.dim, self.antithetic)[0]
            self._step += 1
        return WienerIncrement4(row[self.path_index % BLOCK] * np.sqrt(dtau), self.direction)


@dataclass(frozen=True)
class PathState:
    """Position, proper time and RNG lineage ``(master_seed, path_index, step)``."""

    x: np.ndarray
    tau: float
    lineage: tuple = (0, 0, 0)


def _drift(field_, x, tau, backward):
    v, nodes = field_.velocity(x, tau)
    return (v.real + v.imag) if backward else (v.real - v.imag), nodes


def _single_step(state, field_, dtau, stream, backward):
    if not dtau > 0:
        raise DomainError("dtau must be positive")
    expected = "backward" if backward else "forward"
    if stream.direction != expected:
        raise DomainError(f"{expected} step needs a {expected} Wiener stream")
    x = np.asarray(state.x, dtype=float)
    drift, nodes = _drift(field_, x, state.tau, backward)
    if np.any(nodes):
        raise NodeSingularity("path reached a node of the wave function", point=x)
    if not np.all(np.isfinite(drift)):
        raise NumericError(f"non-finite drift {drift} at x={x}, tau={state.tau}")
    seed, index, step = state.lineage
    dw = stream.increment(step, dtau).dW
    sign = -1.0 if backward else 1.0
    x_new = x + (sign * drift * dtau + field_.lam * dw)
    return PathState(x_new, state.tau + sign * dtau, (seed, index, step + 1))


def step_forward(state, field_, dtau, stream):
    """One forward Euler-Maruyama step with drift V+."""
    return _single_step(state, field_, dtau, stream, backward=False)


def step_backward(state, field_, dtau, stream):
    """One backward Euler-Maruyama step with drift V-; tau decreases."""
    return _single_step(state, field_, dtau, stream, backward=True)


def nelson1d_step(state, field_, dt, stream, direction="forward"):
    """One step of the 1D Nelson process ``x <- x +/- v_(+/-) dt + lam dw``.

    ``state.x`` has shape ``(1,)`` and ``state.tau`` is the time ``t``.
    """
    if direction not in _DIRECTIONS:
        raise DomainError(f"unknown direction {direction!r}")
    return _single_step(state, field_, dt, stream, backward=direction == "backward")


@dataclass(frozen=True)
class PointInitial:
    """All paths start at ``x0``."""

    x0: tuple

    def sample(self, gen, n, dim):
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (dim,):
            raise DomainError(f"initial point has shape {x0.shape}, expected ({dim},)")
        return np.broadcast_to(x0, (n, dim)).copy()


@dataclass(frozen=True)
class GaussianInitial:
    """Independent Gaussian components with the given means and widths."""

    mean: tuple
    std: tuple

    def sample(self, gen, n, dim):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != (dim,) or std.shape != (dim,):
            raise DomainError("Gaussian initial condition has the wrong dimension")
        return mean + std * gen.standard_normal((n, dim))


@dataclass(frozen=True, eq=False)
class FunctionVelocityField:
    """Velocity field given directly by a callable ``V(x, tau) -> complex``."""

    func: object
    lam: float = 0.0
    dim: int = 4
    metric: np.ndarray = field(default_factory=lambda: np.array([1.0, -1.0, -1.0, -1.0]))

    def velocity(self, x, tau=0.0):
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.func(x, tau), dtype=complex)
        return np.broadcast_to(v, x.shape).copy(), np.zeros(x.shape[:-1], dtype=bool)

    def complex_velocity(self, x, tau=0.0):
        return self.velocity(x, tau)[0]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Sampled paths on a shared proper-time grid.

    ``x`` has shape ``(K, N, dim)``.  Rejected paths are frozen at the point
    where they hit a node and are excluded from every expectation.
    """

    tau: np.ndarray
    x: np.ndarray
    alive: np.ndarray
    rejected_at: np.ndarray
    master_seed: int
    direction: str
    antithetic: bool = False
    lam: float = 0.0

    @property
    def n_paths(self):
        return self.x.shape[1]

    @property
    def n_alive(self):
        return int(np.count_nonzero(self.alive))

    @property
    def alive_fraction(self):
        return self.n_alive / self.n_paths

    def lineage(self, path_index):
        return (self.master_seed, int(path_index), len(self.tau) - 1)

    def positions(self, k):
        """Alive positions at grid index k."""
        return self.x[k][self.alive]

    def _units(self, values):
        """Independent sampling units: single paths, or antithetic pair means."""
        if not self.antithetic:
            return values[self.alive]
        n = values.shape[0] - values.shape[0] % 2
        pair_alive = self.alive[0:n:2] & self.alive[1:n:2]
        units = 0.5 * (values[0:n:2] + values[1:n:2])
        return units[pair_alive]

    def expectation(self, values):
        """Mean over alive paths and its standard error.

        ``values`` has the path axis first.  Sums use numpy's pairwise
        summation over a fixed order, so the result does not depend on how
        the ensemble was produced.
        """
        values = np.asarray(values)
        if values.shape[0] != self.n_paths:
            raise DomainError("values must have one entry per path")
        units = self._units(values)
        m = units.shape[0]
        if m == 0:
            raise EnsembleCollapse("no alive paths")
        mean = np.sum(np.moveaxis(units, 0, -1), axis=-1) / m
        if m > 1:
            var = np.sum(np.moveaxis(np.abs(units - mean) ** 2, 0, -1), axis=-1) / (m - 1)
            se = np.sqrt(var / m)
        else:
            se = np.full(np.shape(mean), np.inf)
        return mean, se

    def mean_trajectory(self):
        """Ensemble mean position and standard error at every grid point."""
        means, errs = zip(*(self.expectation(self.x[k]) for k in range(len(self.tau))))
        return np.array(means), np.array(errs)


def _simulate_block(args):
    (field_, initial, taus, substeps, seed, block, n, code, antithetic) = args
    dim = field_.dim
    lam = field_.lam
    backward = code == BACKWARD
    x = initial.sample(block_generator(seed, block, INITIAL), BLOCK, dim)[:n]
    gen = block_generator(seed, block, code)
    out = np.empty((len(taus), n, dim))
    out[0] = x
    alive = np.ones(n, dtype=bool)
    rejected = np.full(n, np.nan)
    sign = -1.0 if backward else 1.0
    for k in range(len(taus) - 1):
        h = abs(taus[k + 1] - taus[k]) / substeps
        sqrt_h = np.sqrt(h)
        done = 0
        while done < substeps:
            rows = min(_MAX_ROWS, substeps - done)
            z = _block_normals(gen, rows, dim, antithetic)[:, :n]
            for r in range(rows):
                tau = taus[k] + sign * h * (done + r)
                drift, nodes = _drift(field_, x, tau, backward)
                hit = nodes & alive
                if np.any(hit):
                    rejected[hit] = tau
                    alive &= ~nodes
                bad = alive & ~np.all(np.isfinite(drift), axis=-1)
                if np.any(bad):
                    i = int(np.flatnonzero(bad)[0])
                    raise NumericError(
                        f"non-finite drift on path {block * BLOCK + i} at tau={tau}: x={x[i]}, drift={drift[i]}"
                    )
                step = sign * drift * h + lam * (z[r] * sqrt_h)
                x = np.where(alive[:, None], x + step, x)
            done += rows
        out[k + 1] = x
    return out, alive, rejected


def sample_ensemble(initial, field_, tau_grid, n_paths, master_seed, direction="forward", substeps=1,
                    workers=None, antithetic=False):
    """Sample ``n_paths`` paths of the process driven by ``field_``.

    Parameters
    ----------
    initial : PointInitial or GaussianInitial
        Distribution at the first grid point (the terminal point for a
        backward run).
    field_ : velocity field
        Any object following the velocity-field protocol.
    tau_grid : array_like
        Recording grid, increasing for forward and decreasing for backward
        runs.  Each interval is split into ``substeps`` Euler-Maruyama steps.
    antithetic : bool
        Pair path ``2j+1`` with the negated noise of path ``2j``.

    Returns
    -------
    PathEnsemble
    """
    code = _direction_code(direction)
    taus = np.asarray(tau_grid, dtype=float)
    if n_paths < 1:
        raise DomainError("need at least one path")
    if taus.ndim != 1 or len(taus) < 2:
        raise DomainError("tau grid needs at least two points")
    steps = np.diff(taus)
    if (code == FORWARD and np.any(steps <= 0)) or (code == BACKWARD and np.any(steps >= 0)):
        raise DomainError("tau grid must increase for forward runs and decrease for backward runs")
    if substeps < 1:
        raise DomainError("substeps must be >= 1")
    workers = workers or default_workers()
    n_blocks = -(-n_paths // BLOCK)
    tasks = [
        (field_, initial, taus, int(substeps), int(master_seed), b, min(BLOCK, n_paths - b * BLOCK), code, antithetic)
        for b in range(n_blocks)
    ]
    if workers == 1 or n_blocks == 1:
        results = [_simulate_block(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_simulate_block, tasks))
    x = np.concatenate([r[0] for r in results], axis=1)
    alive = np.concatenate([r[1] for r in results])
    rejected = np.concatenate([r[2] for r in results])
    if not np.any(alive):
        raise EnsembleCollapse(f"all {n_paths} paths were rejected at nodes")
    return PathEnsemble(taus, x, alive, rejected, int(master_seed), direction, antithetic, field_.lam)


def sample_nelson1d(wave_field, initial, t_grid, n_paths, master_seed, direction="forward", substeps=1,
                    workers=None):
    """1D Nelson ensemble; ``wave_field`` is a 1D velocity field."""
    if wave_field.dim != 1:
        raise DomainError("sample_nelson1d needs a one-dimensional field")
    return sample_ensemble(initial, wave_field, t_grid, n_paths, master_seed, direction, substeps, workers)


# ---------------------------------------------------------------------------
# mean derivatives

_VARIANTS = ("plus", "minus", "complex", "complex_conj")


@dataclass(frozen=True, eq=False)
class MeanDerivativeOperator:
    """Mean derivatives of a velocity field, by fourth-order central differences.

    =============  ==================================================
    variant        operator
    =============  ==================================================
    plus           ``V+ . d f - (lam^2/2) box f``
    minus          ``V- . d f + (lam^2/2) box f``
    complex        ``V . d f + i (lam^2/2) box f``
    complex_conj   ``V* . d f - i (lam^2/2) box f``
    =============  ==================================================

    ``box = g^{mu mu} d_mu d_mu`` with the field's diagonal metric, so in the
    1D test bed ``box = -d_x^2``.
    """

    field: object
    lam: float = None
    h: float = 5e-3

    @property
    def diffusion(self):
        lam = self.field.lam if self.lam is None else self.lam
        return 0.5 * lam * lam

    def _check_domain(self, x):
        check = getattr(self.field, "in_domain", None)
        if check is None:
            return
        reach = 2 * self.h
        for mu in range(self.field.dim):
            for s in (-reach, reach):
                y = np.array(x, dtype=float, copy=True)
                y[..., mu] += s
                if not np.all(check(y)):
                    raise StencilOutOfDomain(f"stencil leaves the field domain along axis {mu}")

    def derivatives(self, f, x):
        """First and pure second partials of ``f``; axis -1 of ``x`` is mapped to a new last axis."""
        x = np.asarray(x, dtype=float)
        self._check_domain(x)
        h = self.h
        f0 = np.asarray(f(x))
        first, second = [], []
        for mu in range(self.field.dim):
            step = np.zeros(self.field.dim)
            step[mu] = h
            fp1, fm1 = f(x + step), f(x - step)
            fp2, fm2 = f(x + 2 * step), f(x - 2 * step)
            first.append((-fp2 + 8 * fp1 - 8 * fm1 + fm2) / (12 * h))
            second.append((-fp2 + 16 * fp1 - 30 * f0 + 16 * fm1 - fm2) / (12 * h * h))
        return f0, np.stack(first, axis=-1), np.stack(second, axis=-1)

    def apply(self, f, x, variant="complex", tau=0.0):
        """Apply a mean derivative to a scalar or vector function ``f``.

        ``f`` maps points ``(..., dim)`` to ``(...)`` or ``(..., n)``.
        """
        if variant not in _VARIANTS:
            raise DomainError(f"variant must be one of {_VARIANTS}")
        x = np.asarray(x, dtype=float)
        v = self.field.complex_velocity(x, tau)
        _, first, second = self.derivatives(f, x)
        box = second @ self.field.metric
        extra = first.ndim - v.ndim
        vv = v.reshape(v.shape[:-1] + (1,) * extra + v.shape[-1:])
        d = self.diffusion
        if variant == "plus":
            return np.sum((vv.real - vv.imag) * first, axis=-1) - d * box
        if variant == "minus":
            return np.sum((vv.real + vv.imag) * first, axis=-1) + d * box
        if variant == "complex":
            return np.sum(vv * first, axis=-1) + 1j * d * box
        return np.sum(np.conj(vv) * first, axis=-1) - 1j * d * box


def apply_mean_derivative(op, f, x, variant="complex", tau=0.0):
    return op.apply(f, x, variant, tau)


# ---------------------------------------------------------------------------
# Monte Carlo identity checks


@dataclass(frozen=True)
class IdentityCheck:
    """One comparison of a time derivative with an expectation."""

    name: str
    tau: float
    lhs: complex
    rhs: complex
    stderr: float
    z: float


@dataclass(frozen=True)
class IdentityReport:
    checks: tuple

    @property
    def max_z(self):
        return max((c.z for c in self.checks), default=0.0)

    def passed(self, threshold=3.0):
        return self.max_z < threshold


def _paired_z(ensemble, per_path_diff, atol):
    """Mean of a per-path difference, its standard error and z-score.

    Complex differences are scored on the real and imaginary parts
    separately and the larger z is returned.
    """
    diff = np.asarray(per_path_diff)
    parts = (diff.real, diff.imag) if np.iscomplexobj(diff) else (diff,)
    z, se_total = 0.0, 0.0
    for part in parts:
        m, se = ensemble.expectation(part)
        scale = np.hypot(se, atol)
        z = max(z, abs(m) / scale if scale > 0 else (0.0 if m == 0 else np.inf))
        se_total = np.hypot(se_total, se)
    return ensemble.expectation(diff)[0], float(se_total), float(z)


def _interior(ensemble, indices):
    k_all = range(1, len(ensemble.tau) - 1)
    if indices is None:
        return list(k_all)
    for k in indices:
        if k not in k_all:
            raise DomainError("identity checks need interior grid indices")
    return list(indices)


def _slope(ensemble, values_next, values_prev, k):
    return (values_next - values_prev) / (ensemble.tau[k + 1] - ensemble.tau[k - 1])


def verify_ito(functions, ensemble, field_, indices=None, h=5e-3, atol=0.0):
    """Compare d E[f]/dtau with E[D+/- f] along the ensemble grid.

    Forward ensembles use the ``plus`` variant and backward ensembles the
    ``minus`` one.  ``functions`` maps names to scalar callables.  The
    z-score uses the per-path difference of the two sides, so the common
    noise cancels.
    """
    variant = "plus" if ensemble.direction == "forward" else "minus"
    op = MeanDerivativeOperator(field_, lam=ensemble.lam, h=h)
    checks = []
    for k in _interior(ensemble, indices):
        for name, f in functions.items():
            slope = _slope(ensemble, f(ensemble.x[k + 1]), f(ensemble.x[k - 1]), k)
            gen = op.apply(f, ensemble.x[k], variant, ensemble.tau[k])
            diff, se, z = _paired_z(ensemble, slope - gen, atol)
            lhs = ensemble.expectation(slope)[0]
            checks.append(IdentityCheck(name, float(ensemble.tau[k]), lhs, lhs - diff, se, z))
    return IdentityReport(tuple(checks))


def _metric_dot(metric, a, b):
    return np.sum(metric * a * b, axis=-1)


def verify_partial_integration(alpha, beta, ensemble, field_, indices=None, h=5e-3, atol=0.0,
                               forms=("plus_minus", "minus_plus", "complex", "complex_conj")):
    """Check d/dtau E[alpha . beta] against the partial-integration forms.

    ``alpha`` and ``beta`` are vector callables (contravariant components,
    possibly complex); the product is ``g_{mu nu} alpha^mu beta^nu``
    without conjugation.  The forms are

    * ``plus_minus``:    E[D+ alpha . beta + alpha . D- beta]
    * ``minus_plus``:    E[D- alpha . beta + alpha . D+ beta]
    * ``complex``:       E[D alpha . beta + alpha . D* beta]
    * ``complex_conj``:  E[D* alpha . beta + alpha . D beta]

    ``atol`` is an absolute floor added in quadrature to the standard error,
    for identities that hold pointwise so that only round-off remains.
    """
    pairs = {
        "plus_minus": ("plus", "minus"),
        "minus_plus": ("minus", "plus"),
        "complex": ("complex", "complex_conj"),
        "complex_conj": ("complex_conj", "complex"),
    }
    metric = field_.metric
    op = MeanDerivativeOperator(field_, lam=ensemble.lam, h=h)
    product = lambda y: _metric_dot(metric, alpha(y), beta(y))
    checks = []
    for k in _interior(ensemble, indices):
        xk = ensemble.x[k]
        slope = _slope(ensemble, product(ensemble.x[k + 1]), product(ensemble.x[k - 1]), k)
        a, b = alpha(xk), beta(xk)
        lhs = ensemble.expectation(slope)[0]
        for form in forms:
            va, vb = pairs[form]
            da = op.apply(alpha, xk, va, ensemble.tau[k])
            db = op.apply(beta, xk, vb, ensemble.tau[k])
            rhs_path = _metric_dot(metric, da, b) + _metric_dot(metric, a, db)
            diff, se, z = _paired_z(ensemble, slope - rhs_path, atol)
            checks.append(IdentityCheck(form, float(ensemble.tau[k]), lhs, lhs - diff, se, z))
    return IdentityReport(tuple(checks))


@dataclass(frozen=True)
class InvariantCheck:
    tau: float
    mean: float
    stderr: float
    z: float


def verify_invariant(ensemble, field_, c=1.0, atol=1e-10):
    """Score ``E[V*.V] - c^2`` at every grid point of ``ensemble``.

    ``atol`` is added in quadrature to the standard error; for fields whose
    invariant holds pointwise the sample spread is at round-off level and a
    bare z-score would only measure floating-point noise.
    """
    out = []
    for k, t in enumerate(ensemble.tau):
        v = field_.complex_velocity(ensemble.x[k], t)
        norm = np.real(np.sum(field_.metric * np.conj(v) * v, axis=-1))
        diff, se, z = _paired_z(ensemble, norm - c**2, atol)
        out.append(InvariantCheck(float(t), float(diff + c**2), se, z))
    return out
