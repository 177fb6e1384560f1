"""Experiment configuration: defaults, TOML loading and command-line overrides."""

import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = (
    "model1", "model2", "nonrobust", "large_uncertainty", "section7", "risk_sensitive",
    "horizon_convergence", "discounted_family", "driver_oracle",
)

SECTIONS = {
    "model": ("a", "theta_max", "theta", "delta", "gamma", "R", "rho_bar", "K_u", "pi_set", "u_set"),
    "numerics": ("grid_n", "width_sd", "dt", "rho_schedule", "T", "dt_mc", "T_game", "dt_game", "paths",
                 "horizons", "oracle_points", "oracle_resolution", "saddle_resolution"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "model1"
    seed: int = 0
    out: str = "out"
    jobs: int = 1
    # model
    a: float = 2.0
    theta_max: float = 0.5
    theta: float = 0.4
    delta: float = 0.5
    gamma: float = 1.0
    R: float = 0.2
    rho_bar: float = 0.6
    K_u: float = 0.2
    pi_set: str = ""
    u_set: str = ""
    # numerics
    grid_n: int = 201
    width_sd: float = 6.0
    dt: float = 0.0
    rho_schedule: tuple = (0.2, 0.1, 0.05, 0.02, 0.01)
    T: float = 1.0
    dt_mc: float = 0.01
    T_game: float = 20.0
    dt_game: float = 0.04
    paths: int = 100_000
    horizons: tuple = (2.0, 4.0, 6.0, 8.0, 10.0)
    oracle_points: int = 100
    oracle_resolution: float = 1e-3
    saddle_resolution: float = 1e-2

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown experiment {self.experiment!r}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("model.delta: must lie in (0, 1)")
        if self.grid_n < 101:
            raise ConfigError("numerics.grid_n: need at least 101 nodes")
        if self.paths < 2:
            raise ConfigError("numerics.paths: need at least 2 paths")
        if self.jobs < 1:
            raise ConfigError("jobs: must be >= 1")

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("rho_schedule", "horizons"):
            d[key] = list(d[key])
        return d


_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    try:
        if kind is tuple:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(float(v) for v in value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        if kind is str:
            if not isinstance(value, str):
                raise ValueError
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {kind.__name__}") from None
    raise ConfigError(f"{key}: unsupported type")


def _flatten(data, prefix=""):
    out = {}
    for k, v in data.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def _resolve(name):
    """Map a dotted key (``model.delta``) or a bare field name onto a config field."""
    section, _, leaf = name.rpartition(".")
    if section:
        if section not in SECTIONS or leaf not in SECTIONS[section]:
            raise ConfigError(f"{name}: unknown configuration key")
        return leaf
    if leaf not in _TYPES:
        raise ConfigError(f"{name}: unknown configuration key")
    return leaf


def load_config(path=None, experiment=None, **overrides):
    """Defaults, then the TOML file, then explicit overrides (``None`` values are ignored)."""
    values = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        for name, v in _flatten(raw).items():
            key = _resolve(name)
            values[key] = _coerce(key, v)
    if experiment is not None:
        values["experiment"] = experiment
    for key, v in overrides.items():
        if v is not None:
            values[_resolve(key)] = _coerce(_resolve(key), v)
    exp = values.get("experiment", ExperimentConfig.experiment)
    base = EXPERIMENT_DEFAULTS.get(exp, {})
    try:
        return ExperimentConfig(**{**base, **values})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# per-experiment departures from the global defaults
EXPERIMENT_DEFAULTS = {
    "large_uncertainty": {"K_u": 1.5},
    "section7": {"theta_max": 1.0},
}

