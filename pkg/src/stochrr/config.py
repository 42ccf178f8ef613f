"""Scenario configuration: JSON documents mapped onto frozen dataclasses.

Every table is strict: unknown keys and missing required keys raise
:class:`ConfigError` naming the dotted location of the problem.  All
defaults are materialised on parse, so :func:`scenario_to_json` records
the complete resolved configuration and parses back to an equal object.

Schema (keys, types and defaults)
---------------------------------

=====================  ======================================================
table                  keys
=====================  ======================================================
(top level)            name: str (required); mode: ensemble | nelson-1d |
                       classical | q-table | sweep; seed: int = 0;
                       output_dir: str = "runs"; plots: bool = true
physics                lam, hbar_eff: float or null (at most one needed;
                       both must agree); tau0 = 0; charge_e = 1; m0 = 1
field                  kind: vacuum | constant_magnetic | plane_wave |
                       constant_crossed; b_z, a0, e0; cycles: int or null;
                       k, eps: four-vectors
wave                   kind: free | volkov | classical_flow |
                       harmonic_ground | harmonic_coherent; gamma >= 1;
                       direction: 3-vector; sigma > 0; amplitude
initial                kind: point | gaussian; x0; std (gaussian only);
                       a0: four-vector or null (LAD runs)
grid                   tau_start; tau_end; dtau > 0; substeps >= 1;
                       reference_steps >= 1 (LL reference steps per dtau)
ensemble               n_paths > 0; antithetic: bool
estimators             requests: list of names valid for the mode; epsilon;
                       tau_indices; density_bins; lam_sweep; intensities;
                       energies; chi_grid; wavelength_um; overflow;
                       margin
=====================  ======================================================
"""
import hashlib
import json
from dataclasses import MISSING, asdict, dataclass, fields, is_dataclass
from dataclasses import field as _default

from .errors import ConfigError

MODES = ("ensemble", "nelson-1d", "classical", "q-table", "sweep")
REQUESTS = {
    "ensemble": ("mean_trajectory", "density", "invariant", "p_omega", "rr_field", "power", "ehrenfest"),
    "nelson-1d": ("density", "ks", "osmotic"),
    "classical": ("ll_trajectory", "energy_check", "lad_runaway", "reduced_order"),
    "q-table": ("q_table", "q_curve"),
    "sweep": ("classical_limit",),
}
FIELD_KINDS = ("vacuum", "constant_magnetic", "plane_wave", "constant_crossed")
WAVE_KINDS = ("free", "volkov", "classical_flow", "harmonic_ground", "harmonic_coherent")


@dataclass(frozen=True)
class PhysicsConfig:
    lam: float = None
    hbar_eff: float = None
    tau0: float = 0.0
    charge_e: float = 1.0
    m0: float = 1.0


@dataclass(frozen=True)
class FieldConfig:
    kind: str = "vacuum"
    b_z: float = 0.0
    a0: float = 0.0
    e0: float = 0.0
    cycles: int = None
    k: tuple = (1.0, 0.0, 0.0, 1.0)
    eps: tuple = (0.0, 1.0, 0.0, 0.0)


@dataclass(frozen=True)
class WaveConfig:
    kind: str = "free"
    gamma: float = 1.0
    direction: tuple = (1.0, 0.0, 0.0)
    sigma: float = 1.0
    amplitude: float = 0.0


@dataclass(frozen=True)
class InitialConfig:
    kind: str = "point"
    x0: tuple = (0.0, 0.0, 0.0, 0.0)
    std: tuple = None
    a0: tuple = None


@dataclass(frozen=True)
class GridConfig:
    tau_start: float = 0.0
    tau_end: float = 1.0
    dtau: float = 0.01
    substeps: int = 1
    reference_steps: int = 10


@dataclass(frozen=True)
class EnsembleConfig:
    n_paths: int = 1000
    antithetic: bool = False


@dataclass(frozen=True)
class EstimatorConfig:
    requests: tuple = ()
    epsilon: float = None
    tau_indices: tuple = ()
    density_bins: int = 60
    lam_sweep: tuple = (0.3, 0.1, 0.03, 0.01)
    intensities: tuple = ()
    energies: tuple = ()
    chi_grid: tuple = ()
    wavelength_um: float = 0.8
    overflow: float = 1e6
    margin: float = 1.0


@dataclass(frozen=True)
class Scenario:
    name: str
    mode: str = "ensemble"
    seed: int = 0
    output_dir: str = "runs"
    plots: bool = True
    physics: PhysicsConfig = _default(default_factory=PhysicsConfig)
    field: FieldConfig = _default(default_factory=FieldConfig)
    wave: WaveConfig = _default(default_factory=WaveConfig)
    initial: InitialConfig = _default(default_factory=InitialConfig)
    grid: GridConfig = _default(default_factory=GridConfig)
    ensemble: EnsembleConfig = _default(default_factory=EnsembleConfig)
    estimators: EstimatorConfig = _default(default_factory=EstimatorConfig)


def _coerce(spec, value, where):
    kind = spec.type
    if is_dataclass(kind):
        return _build(kind, value, where)
    if value is None:
        if spec.default is None:
            return None
        raise ConfigError("null is not allowed here", where)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", where)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"expected an integer, got {value!r}", where)
        return int(value)
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", where)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", where)
        return value
    if kind is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"expected a list, got {value!r}", where)
        items = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, float, str)):
                raise ConfigError(f"unsupported list entry {item!r}", f"{where}[{i}]")
            items.append(item if isinstance(item, str) else float(item))
        return tuple(items)
    raise ConfigError(f"unsupported field type {kind}", where)


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError("expected a table", where or "<root>")
    specs = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in specs:
            raise ConfigError(f"unknown key {key!r}", f"{where}.{key}" if where else key)
    kwargs = {}
    for name, spec in specs.items():
        loc = f"{where}.{name}" if where else name
        if name in data:
            kwargs[name] = _coerce(spec, data[name], loc)
        elif spec.default is MISSING and spec.default_factory is MISSING:
            raise ConfigError("missing required field", loc)
    return cls(**kwargs)


def _require(cond, message, where):
    if not cond:
        raise ConfigError(message, where)


def _vector(values, n, where):
    _require(values is not None and len(values) == n, f"expected {n} numbers", where)
    _require(all(isinstance(v, float) for v in values), "expected numbers", where)


def validate_scenario(s):
    """Check physical and structural consistency; raises ConfigError."""
    _require(s.name.strip() != "", "must not be empty", "name")
    _require(s.mode in MODES, f"must be one of {MODES}", "mode")
    _require(s.seed >= 0, "must be >= 0", "seed")
    p = s.physics
    for name in ("lam", "hbar_eff"):
        value = getattr(p, name)
        _require(value is None or value >= 0, "must be >= 0", f"physics.{name}")
    if p.lam is not None and p.hbar_eff is not None:
        implied = p.m0 * p.lam**2
        _require(
            abs(implied - p.hbar_eff) <= 1e-12 * max(abs(implied), abs(p.hbar_eff), 1e-300),
            f"lam={p.lam} implies hbar_eff={implied}, which conflicts with hbar_eff={p.hbar_eff}",
            "physics.hbar_eff",
        )
    _require(p.tau0 >= 0, "must be >= 0", "physics.tau0")
    _require(p.m0 > 0, "must be > 0", "physics.m0")
    _require(p.charge_e > 0, "must be > 0", "physics.charge_e")
    f = s.field
    _require(f.kind in FIELD_KINDS, f"must be one of {FIELD_KINDS}", "field.kind")
    _vector(f.k, 4, "field.k")
    _vector(f.eps, 4, "field.eps")
    if f.kind == "plane_wave":
        _require(f.a0 > 0, "must be > 0 for a plane wave", "field.a0")
        _require(f.cycles is None or f.cycles >= 1, "must be >= 1", "field.cycles")
    if f.kind == "constant_crossed":
        _require(f.e0 > 0, "must be > 0 for a crossed field", "field.e0")
    w = s.wave
    _require(w.kind in WAVE_KINDS, f"must be one of {WAVE_KINDS}", "wave.kind")
    _require(w.gamma >= 1, "must be >= 1", "wave.gamma")
    _vector(w.direction, 3, "wave.direction")
    _require(any(d != 0 for d in w.direction), "must be nonzero", "wave.direction")
    _require(w.sigma > 0, "must be > 0", "wave.sigma")
    if w.kind == "volkov":
        _require(f.kind == "plane_wave", "a Volkov state needs a plane_wave field", "wave.kind")
    one_d = s.mode == "nelson-1d"
    if one_d:
        _require(w.kind in ("harmonic_ground", "harmonic_coherent"), "nelson-1d needs a harmonic state", "wave.kind")
    elif s.mode in ("ensemble", "sweep"):
        _require(w.kind in ("free", "volkov", "classical_flow"), "needs a 4D velocity field", "wave.kind")
    if s.mode == "sweep":
        _require(w.kind == "classical_flow", "the sweep uses the classical flow field", "wave.kind")
        _require(len(s.estimators.lam_sweep) >= 2, "needs at least two values", "estimators.lam_sweep")
        _require(all(v > 0 for v in s.estimators.lam_sweep), "must be > 0", "estimators.lam_sweep")
    i = s.initial
    _require(i.kind in ("point", "gaussian"), "must be 'point' or 'gaussian'", "initial.kind")
    dim = 1 if one_d else 4
    _vector(i.x0, dim, "initial.x0")
    if i.kind == "gaussian":
        _vector(i.std, dim, "initial.std")
        _require(all(v >= 0 for v in i.std), "must be >= 0", "initial.std")
    if i.a0 is not None:
        _vector(i.a0, 4, "initial.a0")
    g = s.grid
    _require(g.dtau > 0, "must be > 0", "grid.dtau")
    _require(g.tau_end > g.tau_start, "must exceed grid.tau_start", "grid.tau_end")
    _require((g.tau_end - g.tau_start) / g.dtau >= 2, "grid needs at least two steps", "grid.dtau")
    _require(g.substeps >= 1, "must be >= 1", "grid.substeps")
    _require(g.reference_steps >= 1, "must be >= 1", "grid.reference_steps")
    _require(s.ensemble.n_paths > 0, "must be > 0", "ensemble.n_paths")
    e = s.estimators
    allowed = REQUESTS.get(s.mode, ())
    for j, r in enumerate(e.requests):
        _require(r in allowed, f"unknown request {r!r} for mode {s.mode!r}; allowed: {allowed}",
                 f"estimators.requests[{j}]")
    _require(e.epsilon is None or e.epsilon > 0, "must be > 0", "estimators.epsilon")
    _require(e.density_bins >= 2, "must be >= 2", "estimators.density_bins")
    _require(e.wavelength_um > 0, "must be > 0", "estimators.wavelength_um")
    _require(e.overflow > 0, "must be > 0", "estimators.overflow")
    _require(e.margin >= 0, "must be >= 0", "estimators.margin")
    if "lad_runaway" in e.requests:
        _require(i.a0 is not None, "LAD run-away needs an initial acceleration", "initial.a0")
        _require(p.tau0 > 0, "LAD needs tau0 > 0", "physics.tau0")
    if "energy_check" in e.requests:
        _require(f.kind == "constant_magnetic", "energy check needs a constant magnetic field", "field.kind")
    if "q_table" in e.requests:
        _require(len(e.intensities) > 0 and len(e.energies) > 0, "q table needs intensities and energies",
                 "estimators.intensities")
    if "q_curve" in e.requests:
        _require(len(e.chi_grid) > 0, "q curve needs a chi grid", "estimators.chi_grid")
    return s


def scenario_from_dict(data):
    return validate_scenario(_build(Scenario, data, ""))


def parse_scenario(text):
    """Parse and validate a JSON scenario document."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from None
    return scenario_from_dict(data)


def scenario_to_dict(s):
    def plain(obj):
        if isinstance(obj, dict):
            return {k: plain(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [plain(v) for v in obj]
        return obj

    return plain(asdict(s))


def scenario_to_json(s):
    return json.dumps(scenario_to_dict(s), indent=2, sort_keys=True) + "\n"


def config_hash(s):
    canonical = json.dumps(scenario_to_dict(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
