"""Scenario runner and command-line entry point.

Subcommands
-----------
``list``       names of the built-in scenarios
``validate``   parse and check a scenario (built-in name or JSON file) without sampling
``run``        execute a scenario and write CSVs, SVG plots and ``manifest.json``
``q-table``    write a q(chi) table for given intensities and energies

Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 partial
outputs (some requested outputs failed).  The manifest is written last and
marks a completed run.

CSV column orders
-----------------
=====================  =====================================================
file                   columns
=====================  =====================================================
q_table.csv            intensity_W_cm2, energy_MeV, chi, q_full, q_sqed
q_curve.csv            same as q_table.csv (SI columns are nan)
mean_trajectory.csv    tau, x0..x3, v0..v3, power, p_ave, errors
ll_trajectory.csv      tau, x0..x3, v0..v3, power, p_ave, errors
p_omega.csv            tau, epsilon, probability, stderr, low, high, n_inside, n_alive
rr_field.csv           tau, mu, nu, value, stderr, epsilon, n_window
ehrenfest.csv          tau, mu, lhs, rhs, stderr, remainder
invariant.csv          tau, mean, stderr, z
density.csv            coordinates..., p
ks.csv                 tau, ks_statistic, p_value
osmotic.csv            x, u_field, u_density, residual
energy.csv             tau, gamma, gamma_analytic, rel_error
lad_runaway.csv        tau, proper_acceleration, expected
runaway.csv            tau_detected, tau_expected
reduced_order.csv      tau, deviation
sweep.csv              lam, max_deviation, ratio_to_tolerance
reference.csv          tau, x0..x3, v0..v3, power, p_ave, errors
=====================  =====================================================
"""
import argparse
import copy
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats

from . import __version__
from .config import config_hash, parse_scenario, scenario_from_dict, scenario_to_json
from .core import PhysicalParams, unit_rapidity_velocity
from .errors import ConfigError, RunawayDetected, StochRRError
from .fields import ConstantCrossed, ConstantMagnetic, PlaneWave, Vacuum
from .fokker_planck import DensityGrid, density_estimate, osmotic_residual, write_density_csv
from .kinematics import GaussianInitial, PointInitial, default_workers, sample_ensemble, verify_invariant
from .plots import line_plot
from .qfactor import Q_TABLE_HEADER, emit_q_table
from .rr import (
    ClassicalState,
    classical_flow_field,
    constant_b_gamma,
    default_epsilon,
    ehrenfest_check,
    integrate_lad,
    integrate_ll,
    larmor_power,
    p_omega_ave,
    proper_acceleration,
    radiated_power_stochastic,
    stochastic_rr_field,
    write_trajectory_csv,
)
from .wavefunction import (
    ComplexVelocityField,
    FreeParticle,
    ScalarVolkov,
    VelocityField1D,
    harmonic_coherent_state,
    harmonic_ground_state,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_PARTIAL = 0, 2, 3, 4
MANIFEST = "manifest.json"

BUILTINS = {
    "figure2": {
        "name": "figure2",
        "mode": "q-table",
        "estimators": {
            "requests": ["q_table", "q_curve"],
            "intensities": [1e20, 1e21, 1e22, 1e23],
            "energies": [100.0, 300.0, 600.0, 1000.0],
            "chi_grid": [float(c) for c in np.logspace(-3, 2, 51)],
            "wavelength_um": 0.8,
        },
    },
    "classical-limit-sweep": {
        "name": "classical-limit-sweep",
        "mode": "sweep",
        "seed": 7,
        "physics": {"tau0": 1e-3},
        "field": {"kind": "constant_magnetic", "b_z": 1.0},
        "wave": {"kind": "classical_flow", "gamma": 2.0, "direction": [1.0, 0.0, 0.0]},
        "grid": {"tau_end": 2 * np.pi, "dtau": 2 * np.pi / 100, "substeps": 10, "reference_steps": 20},
        "ensemble": {"n_paths": 10000, "antithetic": True},
        "estimators": {"requests": ["classical_limit"], "lam_sweep": [0.3, 0.1, 0.03, 0.01]},
    },
    "nelson-ho": {
        "name": "nelson-ho",
        "mode": "nelson-1d",
        "seed": 3,
        "physics": {"hbar_eff": 1.0},
        "wave": {"kind": "harmonic_ground", "sigma": 1.0},
        "initial": {"kind": "point", "x0": [0.0]},
        "grid": {"tau_end": 50.0, "dtau": 0.5, "substeps": 50},
        "ensemble": {"n_paths": 100000},
        "estimators": {"requests": ["density", "ks", "osmotic"], "density_bins": 80},
    },
    "synchrotron-ll": {
        "name": "synchrotron-ll",
        "mode": "classical",
        "physics": {"tau0": 1e-3},
        "field": {"kind": "constant_magnetic", "b_z": 1.0},
        "wave": {"gamma": 5.0, "direction": [1.0, 0.0, 0.0]},
        "grid": {"tau_end": 2 * np.pi, "dtau": 2 * np.pi / 2000},
        "estimators": {"requests": ["ll_trajectory", "energy_check", "reduced_order"]},
    },
    "runaway-demo": {
        "name": "runaway-demo",
        "mode": "classical",
        "physics": {"tau0": 1e-3},
        "initial": {"a0": [0.0, 1.0, 0.0, 0.0]},
        "grid": {"tau_end": 0.02, "dtau": 1e-5},
        "estimators": {"requests": ["lad_runaway", "ll_trajectory"], "overflow": 1e3},
    },
    "volkov-invariant": {
        "name": "volkov-invariant",
        "mode": "ensemble",
        "seed": 5,
        "physics": {"lam": 0.2},
        "field": {"kind": "plane_wave", "a0": 0.5},
        "wave": {"kind": "volkov", "gamma": 1.5, "direction": [0.3, 0.0, -1.0]},
        "grid": {"tau_end": 2.0, "dtau": 0.05, "substeps": 5},
        "ensemble": {"n_paths": 10000},
        "estimators": {"requests": ["mean_trajectory", "invariant"]},
    },
    "pomega-constB": {
        "name": "pomega-constB",
        "mode": "ensemble",
        "seed": 11,
        "physics": {"lam": 0.05, "tau0": 1e-3},
        "field": {"kind": "constant_magnetic", "b_z": 1.0},
        "wave": {"kind": "classical_flow", "gamma": 2.0, "direction": [1.0, 0.0, 0.0]},
        "grid": {"tau_end": 2 * np.pi, "dtau": 2 * np.pi / 100, "substeps": 10, "reference_steps": 20},
        "ensemble": {"n_paths": 10000},
        "estimators": {
            "requests": ["mean_trajectory", "p_omega", "power", "rr_field", "ehrenfest", "invariant"],
            "epsilon": 0.05,
            "tau_indices": [20, 50],
        },
    },
}


@dataclass(frozen=True)
class RunManifest:
    """Completion record of a run; ``outputs`` maps file names to SHA-256 digests."""

    scenario: str
    config_hash: str
    seed: int
    version: str
    workers: int
    outputs: dict
    failures: dict
    wall_time: float


def list_scenarios():
    return sorted(BUILTINS)


def load_scenario(ref):
    """A built-in scenario by name, or a JSON scenario file by path."""
    if ref in BUILTINS:
        return scenario_from_dict(copy.deepcopy(BUILTINS[ref]))
    if os.path.isfile(ref):
        with open(ref, encoding="utf-8") as fh:
            return parse_scenario(fh.read())
    raise ConfigError(f"no built-in scenario or file named {ref!r}", "scenario")


def validate(ref):
    """Dry-run validation; returns ``(ok, message)``."""
    try:
        s = ref if not isinstance(ref, (str, os.PathLike)) else load_scenario(ref)
        if not isinstance(ref, (str, os.PathLike)):
            scenario_from_dict(json.loads(scenario_to_json(s)))
    except ConfigError as exc:
        return False, str(exc)
    return True, f"{s.name}: ok"


# ---------------------------------------------------------------------------
# building blocks


def physical_params(s):
    p = s.physics
    if p.hbar_eff is not None:
        hbar = p.hbar_eff
    elif p.lam is not None:
        hbar = p.m0 * p.lam**2
    else:
        hbar = 0.0
    return PhysicalParams(hbar_eff=hbar, tau0=p.tau0, charge_e=p.charge_e, m0=p.m0)


def field_profile(f):
    if f.kind == "vacuum":
        return Vacuum()
    if f.kind == "constant_magnetic":
        return ConstantMagnetic(f.b_z)
    if f.kind == "plane_wave":
        return PlaneWave(f.a0, tuple(f.k), tuple(f.eps), None if f.cycles is None else int(f.cycles))
    return ConstantCrossed(f.e0, tuple(f.k), tuple(f.eps))


def tau_grid(g):
    n = int(round((g.tau_end - g.tau_start) / g.dtau))
    return g.tau_start + g.dtau * np.arange(n + 1)


def initial_velocity(s):
    return unit_rapidity_velocity(s.wave.gamma, s.wave.direction)


def velocity_field(s, params, profile):
    """The 4D velocity field requested by ``s.wave``."""
    w = s.wave
    momentum = tuple(params.m0 * initial_velocity(s))
    if w.kind == "free":
        return ComplexVelocityField(FreeParticle(momentum), profile, params)
    if w.kind == "volkov":
        return ComplexVelocityField(ScalarVolkov(momentum, profile), profile, params)
    g = s.grid
    state = ClassicalState(s.initial.x0, initial_velocity(s))
    return classical_flow_field(
        profile, params, state, (g.tau_start, g.tau_end), g.dtau / g.reference_steps, params.lambda_(),
        s.estimators.margin
    )


def initial_distribution(s):
    i = s.initial
    if i.kind == "point":
        return PointInitial(tuple(i.x0))
    return GaussianInitial(tuple(i.x0), tuple(i.std))


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else repr(float(v)) for v in row])


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


class _Run:
    """Collects written files and per-output failures."""

    def __init__(self, directory, plots):
        self.directory = directory
        self.plots = plots
        self.files = []
        self.failures = {}
        self.requested = 0

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.directory, name)

    def rows(self, name, header, rows):
        _write_rows(self.path(name), header, rows)

    def plot(self, name, *args, **kwargs):
        if self.plots:
            line_plot(self.path(name), *args, **kwargs)

    def attempt(self, label, func):
        self.requested += 1
        try:
            func()
        except (StochRRError, ArithmeticError, ValueError) as exc:
            self.failures[label] = f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# modes


def _run_q_table(s, run, workers):
    e = s.estimators

    def table():
        rows = emit_q_table(e.intensities, e.energies, wavelength_um=e.wavelength_um)
        run.rows("q_table.csv", Q_TABLE_HEADER, rows)

    def curve():
        rows = emit_q_table(chi_grid=e.chi_grid)
        run.rows("q_curve.csv", Q_TABLE_HEADER, rows)
        chi = [r[2] for r in rows]
        run.plot("q_curve.svg", [(chi, [r[3] for r in rows], "q_full"), (chi, [r[4] for r in rows], "q_sqed")],
                 title="quantumness factor", xlabel="chi", ylabel="q", logx=True)

    for name, func in (("q_table", table), ("q_curve", curve)):
        if name in e.requests:
            run.attempt(name, func)


def _reference(s, params, profile):
    """LL reference sampled on the recording grid."""
    g = s.grid
    state = ClassicalState(s.initial.x0, initial_velocity(s))
    fine = integrate_ll(state, profile, params, (g.tau_start, g.tau_end), g.dtau / g.reference_steps, audit=False)
    step = g.reference_steps
    return fine.tau[::step], fine.x[::step], fine.v[::step]


def _run_sweep(s, run, workers):
    params = physical_params(s)
    profile = field_profile(s.field)
    taus = tau_grid(s.grid)
    initial = initial_distribution(s)
    g = s.grid

    def sweep():
        ref_tau, ref_x, ref_v = _reference(s, params, profile)
        state = ClassicalState(s.initial.x0, initial_velocity(s))
        deviations = []
        for lam in (0.0,) + tuple(s.estimators.lam_sweep):
            flow = classical_flow_field(profile, params, state, (g.tau_start, g.tau_end), g.dtau / g.reference_steps,
                                        lam, s.estimators.margin)
            ens = sample_ensemble(initial, flow, taus, s.ensemble.n_paths, s.seed, "forward", g.substeps, workers,
                                  s.ensemble.antithetic)
            mean, _ = ens.mean_trajectory()
            deviations.append((lam, float(np.max(np.linalg.norm(mean - ref_x, axis=-1)))))
        tolerance = deviations[0][1]
        rows = [(lam, d, d / tolerance if tolerance > 0 else np.inf) for lam, d in deviations]
        run.rows("sweep.csv", ("lam", "max_deviation", "ratio_to_tolerance"), rows)
        write_trajectory_csv(run.path("reference.csv"), ref_tau, ref_x, ref_v)
        lam_vals = [r[0] for r in rows[1:]]
        run.plot("sweep.svg", [(lam_vals, [r[1] for r in rows[1:]], "max |<x> - x_LL|"),
                               (lam_vals, [tolerance] * len(lam_vals), "lam = 0 stepper")],
                 title="classical-limit collapse", xlabel="lambda", ylabel="deviation", logx=True, logy=True)

    run.attempt("classical_limit", sweep)


def _run_classical(s, run, workers):
    params = physical_params(s)
    profile = field_profile(s.field)
    g = s.grid
    e = s.estimators
    v0 = initial_velocity(s)
    state = ClassicalState(s.initial.x0, v0, s.initial.a0)
    span = (g.tau_start, g.tau_end)
    cache = {}

    def ll():
        if "ll" not in cache:
            cache["ll"] = integrate_ll(ClassicalState(state.x, state.v), profile, params, span, g.dtau)
        return cache["ll"]

    def trajectory():
        traj = ll()
        power = larmor_power(traj.v, traj.a, params)
        drift = np.abs(np.sum(traj.v * traj.v * np.array([1.0, -1, -1, -1]), axis=-1) - 1.0)
        traj.write_csv(run.path("ll_trajectory.csv"), power=power, p_ave=1.0, errors=drift)
        run.plot("ll_trajectory.svg", [(traj.x[:, 1], traj.x[:, 2], "x-y")], title="LL trajectory",
                 xlabel="x1", ylabel="x2")

    def energy():
        if not isinstance(profile, ConstantMagnetic):
            raise ConfigError("energy check needs a constant magnetic field", "field.kind")
        traj = ll()
        omega = params.charge_e * abs(profile.b_z) / params.m0
        analytic = constant_b_gamma(traj.gamma[0], omega, params.tau0, traj.tau - traj.tau[0])
        rows = zip(traj.tau, traj.gamma, analytic, np.abs(traj.gamma - analytic) / analytic)
        run.rows("energy.csv", ("tau", "gamma", "gamma_analytic", "rel_error"), rows)
        run.plot("energy.svg", [(traj.tau, traj.gamma, "RK4"), (traj.tau, analytic, "analytic")],
                 title="synchrotron energy loss", xlabel="tau", ylabel="gamma")

    def runaway():
        a_start = proper_acceleration(state.v, state.a)
        try:
            traj = integrate_lad(state, profile, params, span, g.dtau, "forward", e.overflow)
            detected = np.nan
        except RunawayDetected as exc:
            traj, detected = exc.trajectory, exc.tau
        alpha = proper_acceleration(traj.v, traj.a)
        expected = a_start * np.exp((traj.tau - traj.tau[0]) / params.tau0)
        run.rows("lad_runaway.csv", ("tau", "proper_acceleration", "expected"), zip(traj.tau, alpha, expected))
        tau_expected = g.tau_start + params.tau0 * np.log(e.overflow / a_start)
        run.rows("runaway.csv", ("tau_detected", "tau_expected"), [(detected, tau_expected)])
        run.plot("lad_runaway.svg", [(traj.tau, alpha, "LAD"), (traj.tau, expected, "a0 exp(tau/tau0)")],
                 title="LAD run-away", xlabel="tau", ylabel="proper acceleration", logy=True)

    def reduced():
        traj = ll()
        red = integrate_lad(ClassicalState(state.x, state.v), profile, params, span, g.dtau, "reduced_order")
        rows = zip(traj.tau, np.linalg.norm(red.x - traj.x, axis=-1))
        run.rows("reduced_order.csv", ("tau", "deviation"), rows)

    table = {"ll_trajectory": trajectory, "energy_check": energy, "lad_runaway": runaway, "reduced_order": reduced}
    for name in e.requests:
        run.attempt(name, table[name])


def _run_ensemble(s, run, workers):
    params = physical_params(s)
    profile = field_profile(s.field)
    e = s.estimators
    taus = tau_grid(s.grid)
    field_ = velocity_field(s, params, profile)
    ens = sample_ensemble(initial_distribution(s), field_, taus, s.ensemble.n_paths, s.seed, "forward",
                          s.grid.substeps, workers, s.ensemble.antithetic)
    epsilon = e.epsilon if e.epsilon is not None else default_epsilon(ens)
    cache = {}

    def p_table():
        if "p" not in cache:
            cache["p"] = [p_omega_ave(ens, k, epsilon) for k in range(len(taus))]
        return cache["p"]

    def mean_trajectory():
        mean, se = ens.mean_trajectory()
        v = np.gradient(mean, taus, axis=0)
        power = np.full(len(taus), np.nan)
        p_ave = np.full(len(taus), np.nan)
        if "p_omega" in e.requests or "power" in e.requests:
            p_ave = np.array([p.probability for p in p_table()])
        if "power" in e.requests:
            _, inner = radiated_power_stochastic(taus, mean, p_ave[1:-1], params)
            power[1:-1] = inner
        write_trajectory_csv(run.path("mean_trajectory.csv"), taus, mean, v, power, p_ave, np.max(se, axis=-1))
        run.plot("mean_trajectory.svg", [(mean[:, 1], mean[:, 2], "<x>")], title="mean trajectory",
                 xlabel="x1", ylabel="x2")

    def p_omega():
        rows = [(t, p.epsilon, p.probability, p.stderr, p.low, p.high, p.n_inside, p.n_alive)
                for t, p in zip(taus, p_table())]
        run.rows("p_omega.csv", ("tau", "epsilon", "probability", "stderr", "low", "high", "n_inside", "n_alive"),
                 rows)
        run.plot("p_omega.svg", [(taus, [r[2] for r in rows], "P(Omega_ave)")], title="existence probability",
                 xlabel="tau", ylabel="P")

    def power():
        if "mean_trajectory" not in e.requests:
            mean_trajectory()

    def rr_field():
        indices = [int(k) for k in e.tau_indices] or [len(taus) // 2]
        rows = []
        for k in indices:
            est = stochastic_rr_field(ens, field_, k, "average", epsilon, params)
            for mu in range(4):
                for nu in range(4):
                    rows.append((est.tau, mu, nu, est.tensor[mu, nu], est.stderr[mu, nu], est.epsilon, est.n_window))
        run.rows("rr_field.csv", ("tau", "mu", "nu", "value", "stderr", "epsilon", "n_window"), rows)

    def ehrenfest():
        rows = []
        indices = [int(k) for k in e.tau_indices] or None
        for c in ehrenfest_check(ens, field_, profile, params, indices):
            for mu in range(4):
                rows.append((c.tau, mu, c.lhs[mu], c.rhs[mu], c.stderr[mu], c.remainder[mu]))
        run.rows("ehrenfest.csv", ("tau", "mu", "lhs", "rhs", "stderr", "remainder"), rows)

    def invariant():
        rows = [(c.tau, c.mean, c.stderr, c.z) for c in verify_invariant(ens, field_, params.c)]
        run.rows("invariant.csv", ("tau", "mean", "stderr", "z"), rows)

    def density():
        k = len(taus) - 1
        grid = density_estimate(ens, k, edges=None, axes=(1, 2))
        write_density_csv(grid, run.path("density.csv"), names=("x1", "x2"))

    table = {"mean_trajectory": mean_trajectory, "p_omega": p_omega, "power": power, "rr_field": rr_field,
             "ehrenfest": ehrenfest, "invariant": invariant, "density": density}
    for name in e.requests:
        run.attempt(name, table[name])


def _run_nelson(s, run, workers):
    params = physical_params(s)
    w = s.wave
    if w.kind == "harmonic_ground":
        wave = harmonic_ground_state(w.sigma)
        centre = lambda t: 0.0
    else:
        wave = harmonic_coherent_state(w.sigma, w.amplitude, params)
        omega = params.hbar_eff / (params.m0 * w.sigma**2)
        centre = lambda t: w.amplitude * np.cos(omega * t)
    field_ = VelocityField1D(wave, params)
    taus = tau_grid(s.grid)
    ens = sample_ensemble(initial_distribution(s), field_, taus, s.ensemble.n_paths, s.seed, "forward",
                          s.grid.substeps, workers, s.ensemble.antithetic)
    width = w.sigma / np.sqrt(2.0)  # standard deviation of |psi|^2
    k_end = len(taus) - 1
    t_end = float(taus[k_end])
    c_end = centre(t_end)
    edges = np.linspace(c_end - 6 * width, c_end + 6 * width, s.estimators.density_bins + 1)
    cache = {}

    def grid():
        if "grid" not in cache:
            cache["grid"] = density_estimate(ens, k_end, edges=[edges])
        return cache["grid"]

    def density():
        g = grid()
        write_density_csv(g, run.path("density.csv"), names=("x",))
        exact = stats.norm.pdf(g.axes[0], c_end, width)
        run.plot("density.svg", [(g.axes[0], g.values, "ensemble"), (g.axes[0], exact, "|psi|^2")],
                 title="Nelson density", xlabel="x", ylabel="p")

    def ks():
        rows = []
        for k in sorted({len(taus) // 4, len(taus) // 2, k_end}):
            pts = ens.positions(k)[:, 0]
            res = stats.kstest(pts, stats.norm(centre(float(taus[k])), width).cdf)
            rows.append((taus[k], res.statistic, res.pvalue))
        run.rows("ks.csv", ("tau", "ks_statistic", "p_value"), rows)

    def osmotic():
        g = grid()
        floor = 0.05 * np.max(g.values)
        keep = (g.values >= floor)
        keep[[0, -1]] = False
        x = g.axes[0][keep]
        residual = osmotic_residual(field_, g, x, floor=floor, tau=t_end)
        u_field = -field_.complex_velocity(x[:, None], t_end)[:, 0].imag
        rows = zip(x, u_field, u_field + residual, residual)
        run.rows("osmotic.csv", ("x", "u_field", "u_density", "residual"), rows)

    table = {"density": density, "ks": ks, "osmotic": osmotic}
    for name in s.estimators.requests:
        run.attempt(name, table[name])


_MODES = {"q-table": _run_q_table, "sweep": _run_sweep, "classical": _run_classical, "ensemble": _run_ensemble,
          "nelson-1d": _run_nelson}


def _prepare_directory(directory, overwrite):
    if os.path.isdir(directory) and os.listdir(directory):
        if not overwrite:
            raise ConfigError(f"output directory {directory!r} is not empty; pass --overwrite", "output_dir")
        manifest = os.path.join(directory, MANIFEST)
        if os.path.exists(manifest):
            os.remove(manifest)
    os.makedirs(directory, exist_ok=True)


def run_scenario(s, out=None, workers=None, overwrite=False):
    """Execute a validated scenario; returns ``(manifest, exit_code)``."""
    start = time.perf_counter()
    workers = workers or default_workers()
    directory = out or os.path.join(s.output_dir, s.name)
    _prepare_directory(directory, overwrite)
    run = _Run(directory, s.plots)
    with open(run.path("scenario.json"), "w", encoding="utf-8") as fh:
        fh.write(scenario_to_json(s))
    try:
        _MODES[s.mode](s, run, workers)
    except (StochRRError, ArithmeticError) as exc:
        run.failures["run"] = f"{type(exc).__name__}: {exc}"
        run.requested = max(run.requested, len(run.failures))
    outputs = {name: _sha256(os.path.join(directory, name)) for name in sorted(set(run.files))}
    manifest = RunManifest(s.name, config_hash(s), s.seed, __version__, int(workers), outputs, dict(run.failures),
                           round(time.perf_counter() - start, 3))
    with open(os.path.join(directory, MANIFEST), "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not run.failures:
        code = EXIT_OK
    elif len(run.failures) >= run.requested:
        code = EXIT_NUMERIC
    else:
        code = EXIT_PARTIAL
    return manifest, code


# ---------------------------------------------------------------------------
# argument parsing


def _parser():
    parser = argparse.ArgumentParser(prog="stochrr", description="Stochastic radiation-reaction scenario runner")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in scenarios")
    p_val = sub.add_parser("validate", help="validate a scenario without running it")
    p_val.add_argument("scenario", help="built-in name or JSON file")
    p_run = sub.add_parser("run", help="run a scenario")
    p_run.add_argument("scenario", help="built-in name or JSON file")
    p_run.add_argument("--seed", type=int, help="override the master seed")
    p_run.add_argument("--threads", type=int, help="worker threads (default: $STOCHRR_THREADS or 1)")
    p_run.add_argument("--out", help="output directory (default: <output_dir>/<name>)")
    p_run.add_argument("--overwrite", action="store_true", help="reuse a non-empty output directory")
    p_q = sub.add_parser("q-table", help="write a q(chi) table")
    p_q.add_argument("--intensities", type=float, nargs="+", default=[1e22], help="W/cm^2")
    p_q.add_argument("--energies", type=float, nargs="+", default=[600.0], help="MeV")
    p_q.add_argument("--wavelength", type=float, default=0.8, help="micrometres")
    p_q.add_argument("--out", default="-", help="CSV path, or - for stdout")
    return parser


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "list":
            for name in list_scenarios():
                print(name)
            return EXIT_OK
        if args.command == "validate":
            ok, message = validate(args.scenario)
            print(message, file=sys.stdout if ok else sys.stderr)
            return EXIT_OK if ok else EXIT_CONFIG
        if args.command == "q-table":
            rows = emit_q_table(args.intensities, args.energies, wavelength_um=args.wavelength)
            if args.out == "-":
                writer = csv.writer(sys.stdout, lineterminator="\n")
                writer.writerow(Q_TABLE_HEADER)
                writer.writerows([[repr(float(v)) for v in r] for r in rows])
            else:
                _write_rows(args.out, Q_TABLE_HEADER, rows)
            return EXIT_OK
        s = load_scenario(args.scenario)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("must be >= 0", "--seed")
            s = replace(s, seed=args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("must be >= 1", "--threads")
        manifest, code = run_scenario(s, args.out, args.threads, args.overwrite)
        for label, message in manifest.failures.items():
            print(f"{label}: {message}", file=sys.stderr)
        print(f"{s.name}: {len(manifest.outputs)} files, exit {code}")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StochRRError as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
