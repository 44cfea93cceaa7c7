"""
Configuration manager: loads experiment configs from a flat key-value
file (or a JSON object, the format configs are saved in), merges them
over the defaults, applies presets and validates every field.
Unknown keys and type or range violations are errors (fail-fast).
"""

import configparser
import copy
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field

from core.accountant import PHI_REFERENCES, HyperParams
from core.channel import FADING_KINDS, POLICY_KINDS, FadingSpec, GammaPolicy
from core.errors import ConfigError, DomainError
from core.simulator import NORMALIZATIONS

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
LOSS_KINDS = ("quadratic", "logistic")
MAX_SWEEP_AXES = 2
_SECTION = "experiment"

# Defaults are the reference privacy-curve setting.  n and gamma are free there,
# so they are fixed here and echoed into every artifact header.
DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    # protocol / privacy
    "n": 10,
    "p": 1.0,
    "q": 1.0,
    "c": 2.0,
    "D": 0.5,
    "L": 1.0,
    "eta": 0.1,
    "sigma": 10.0,
    "delta": 1e-5,
    "dataset_size": 8,
    "dim": 2,
    "alpha": 2.0,
    "phi_reference": "last",
    # run
    "T": 300,
    "seed": 0,
    "replicates": 20,
    "workers": 1,
    # channel
    "gamma_policy": "constant",
    "gamma_value": 1.0,
    "power_budget": 1.0,
    "fading": "rayleigh",
    "fading_scale": 1.0,
    "fading_value": 1.0,
    "h_min": 0.1,
    # task
    "loss": "quadratic",
    "loss_spread": 1.0,
    "loss_center": None,
    "heavy_tail_df": None,
    "feature_radius": 2.0,
    "normalization": "nominal",
    "projection": False,
    # sweeps: {"field": [values, ...]}, at most two axes
    "sweep": {},
    # tradeoff
    "eps_targets": [],
    # verifier
    "verify_alphas": [1.5, 2.0, 4.0, 8.0],
    "verify_gammas": [0.5, 1.0, 2.0],
    "verify_n": 1,
    "verify_dataset_size": 2,
    "verify_subsampled_q": 0.5,
    "out": "results",
}

PRESETS = {
    "fig1a": {"T": 1000, "sweep": {"D": [0.25, 0.5, 1.0]}},
    "fig1b": {"T": 1000, "sweep": {"p": [1.0, 0.5], "q": [1.0, 0.5]}},
}
# descriptive aliases
PRESETS["diameter_sweep"] = PRESETS["fig1a"]
PRESETS["sampling_sweep"] = PRESETS["fig1b"]

_INT_FIELDS = {"n", "dataset_size", "dim", "T", "seed", "replicates", "workers",
               "verify_n", "verify_dataset_size", "version"}
_FLOAT_FIELDS = {"p", "q", "c", "D", "L", "eta", "sigma", "delta", "alpha", "gamma_value",
                 "power_budget", "fading_scale", "fading_value", "h_min", "loss_spread",
                 "feature_radius", "verify_subsampled_q"}
_OPTIONAL_FLOAT_FIELDS = {"heavy_tail_df"}
_CHOICE_FIELDS = {
    "gamma_policy": POLICY_KINDS,
    "fading": FADING_KINDS,
    "loss": LOSS_KINDS,
    "normalization": NORMALIZATIONS,
    "phi_reference": PHI_REFERENCES,
}
_FLOAT_LIST_FIELDS = {"eps_targets", "verify_alphas", "verify_gammas"}
SWEEPABLE = _INT_FIELDS.union(_FLOAT_FIELDS) - {"version", "seed", "workers", "replicates"}


def load_config(path=None, preset=None, overrides=None) -> dict:
    """Merge defaults <- preset <- file <- overrides, then validate."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg.update(copy.deepcopy(PRESETS[preset]))
    if path is not None:
        user = _check_version(_read_config_file(path))
        _reject_unknown(user)
        cfg.update(user)
    if overrides:
        _reject_unknown(overrides)
        cfg.update(overrides)
    cfg = _merge_defaults(cfg, DEFAULT_CONFIG)
    validate_config(cfg)
    return cfg


def _read_config_file(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if text.lstrip().startswith(("{", "[")):
        try:
            user = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"cannot parse config {path}: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        return user
    return parse_key_value(text, path)


def parse_key_value(text, source="<config>") -> dict:
    """Flat ``key = value`` lines with ``#`` comments.

    ``sweep.<field> = [...]`` lines collect into the ``sweep`` mapping.
    """
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(f"[{_SECTION}]\n{text}", source=str(source))
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config {source}: {e}") from e
    user, sweep = {}, {}
    for key, raw in parser.items(_SECTION):
        if raw is None or not raw.strip():
            raise ConfigError(f"{key}: missing value")
        value = _parse_value(raw.strip())
        if key.startswith("sweep."):
            sweep[key[len("sweep."):]] = value
        else:
            user[key] = value
    if sweep:
        if "sweep" in user:
            raise ConfigError("sweep: give either 'sweep' or 'sweep.<field>' lines, not both")
        user["sweep"] = sweep
    return user


def _parse_value(raw: str):
    """JSON literal, else a float such as ``inf``, else the bare string."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def save_config(cfg, path):
    """Persist the effective config next to the artifacts."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)


def _reject_unknown(cfg):
    unknown = sorted(set(cfg) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")


def _check_version(cfg):
    version = cfg.get("version", CONFIG_VERSION)
    if isinstance(version, bool) or not isinstance(version, int):
        raise ConfigError(f"version: expected an integer, got {version!r}")
    if version > CONFIG_VERSION:
        raise ConfigError(f"config version {version} is newer than supported {CONFIG_VERSION}")
    return cfg


def _merge_defaults(cfg, defaults):
    """Recursively merge missing keys from defaults into cfg."""
    for key, val in defaults.items():
        if key not in cfg:
            cfg[key] = copy.deepcopy(val)
        elif isinstance(val, dict) and val and isinstance(cfg.get(key), dict):
            _merge_defaults(cfg[key], val)
    return cfg


# ── Validation ────────────────────────────────────────────────────

def _as_int(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return int(value)


def _as_float(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    return float(value)


def validate_config(cfg):
    """Type-check every field in place and check cross-field constraints."""
    for key in _INT_FIELDS:
        cfg[key] = _as_int(key, cfg[key])
    for key in _FLOAT_FIELDS:
        cfg[key] = _as_float(key, cfg[key])
    for key in _OPTIONAL_FLOAT_FIELDS:
        if cfg[key] is not None:
            cfg[key] = _as_float(key, cfg[key])
    for key, choices in _CHOICE_FIELDS.items():
        if cfg[key] not in choices:
            raise ConfigError(f"{key}: expected one of {choices}, got {cfg[key]!r}")
    for key in _FLOAT_LIST_FIELDS:
        if not isinstance(cfg[key], list):
            raise ConfigError(f"{key}: expected a list, got {cfg[key]!r}")
        cfg[key] = [_as_float(key, v) for v in cfg[key]]
    if not isinstance(cfg["projection"], bool):
        raise ConfigError(f"projection: expected true/false, got {cfg['projection']!r}")
    if cfg["loss_center"] is not None:
        if not isinstance(cfg["loss_center"], list) or len(cfg["loss_center"]) != cfg["dim"]:
            raise ConfigError(f"loss_center: expected a list of {cfg['dim']} numbers")
        cfg["loss_center"] = [_as_float("loss_center", v) for v in cfg["loss_center"]]
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ConfigError(f"out: expected a path, got {cfg['out']!r}")
    if cfg["T"] < 1:
        raise ConfigError(f"T: must be >= 1, got {cfg['T']}")
    if cfg["replicates"] < 1 or cfg["workers"] < 1:
        raise ConfigError("replicates and workers must be >= 1")
    if cfg["seed"] < 0:
        raise ConfigError(f"seed: must be a non-negative integer, got {cfg['seed']}")

    sweep = cfg["sweep"]
    if not isinstance(sweep, dict):
        raise ConfigError(f"sweep: expected an object, got {sweep!r}")
    if len(sweep) > MAX_SWEEP_AXES:
        raise ConfigError(f"sweep: at most {MAX_SWEEP_AXES} axes, got {len(sweep)}")
    for axis, values in sweep.items():
        if axis not in SWEEPABLE:
            raise ConfigError(f"sweep: field {axis!r} cannot be swept")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.{axis}: expected a non-empty list")
        conv = _as_int if axis in _INT_FIELDS else _as_float
        sweep[axis] = [conv(f"sweep.{axis}", v) for v in values]

    # surface HyperParams / channel range errors with field names
    try:
        build_experiment(cfg)
    except DomainError as e:
        raise ConfigError(str(e)) from e
    return cfg


# ── Typed view ────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExperimentConfig:
    params: HyperParams
    policy: GammaPolicy
    fading: FadingSpec
    T: int
    seed: int
    alpha: float
    raw: dict = field(compare=False, repr=False)

    def get(self, key):
        return self.raw[key]

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.update(overrides)
        return build_experiment(raw)

    def sweep_points(self):
        """(index, overrides, experiment) for the Cartesian product of sweep axes."""
        axes = list(self.raw["sweep"].items())
        if not axes:
            yield 0, {}, self
            return
        names = [a for a, _ in axes]
        for k, combo in enumerate(itertools.product(*(v for _, v in axes))):
            overrides = dict(zip(names, combo))
            yield k, overrides, self.with_overrides(**overrides)


def build_experiment(cfg) -> ExperimentConfig:
    params = HyperParams(**{k: cfg[k] for k in (
        "n", "p", "q", "c", "D", "L", "eta", "sigma", "delta", "dataset_size", "dim")})
    policy = GammaPolicy(kind=cfg["gamma_policy"], value=cfg["gamma_value"],
                         power_budget=cfg["power_budget"])
    fading = FadingSpec(kind=cfg["fading"], scale=cfg["fading_scale"], h_min=cfg["h_min"],
                        value=cfg["fading_value"])
    if not cfg["alpha"] > 1.0:
        raise DomainError(f"alpha must be > 1, got {cfg['alpha']!r}")
    return ExperimentConfig(params=params, policy=policy, fading=fading, T=int(cfg["T"]),
                            seed=int(cfg["seed"]), alpha=float(cfg["alpha"]), raw=cfg)


def header_lines(cfg) -> list[str]:
    """Config echoed as '# key=value' provenance lines."""
    return [f"# {k}={json.dumps(cfg[k], sort_keys=True)}" for k in sorted(cfg)]
