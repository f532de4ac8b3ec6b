"""Experiment configuration: a flat record, a plain-text file format, overrides.

The file format is one `dotted.key = value` pair per line, `#` comments and
blank lines ignored.  Rendering then parsing a config reproduces it exactly
(floats are written with repr, which round-trips).  The same dotted keys are
accepted by the command line's --set flag.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass


class ConfigError(ValueError):
    pass


EXPERIMENT_TAGS = (
    "conv-bound",
    "z-series",
    "simulate",
    "moments",
    "lyapunov",
    "onesided",
    "invariance",
    "all",
)

MODEL_KINDS = ("burgers", "thinfilm")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "all"
    model_kind: str = "burgers"
    n_modes: int = 32
    gamma0: float = 0.25
    nu: float = 0.0
    horizon: float = 1.0
    dt: float = 1e-3
    burn_in: float | None = None
    stride: int = 1
    replicas: int = 1
    seed: int = 0
    guard: float = 1e6
    delta: float = 0.45
    gamma: float = 0.1
    epsilon: float = 0.05
    shifts: tuple[float, ...] = (1.0, 10.0, 100.0)
    p_list: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    sigma_list: tuple[float, ...] = (0.5,)
    out_dir: str | None = None


# (dotted key, attribute, value kind) in file order.  The kind drives both
# parsing and rendering; "opt_*" kinds admit the literal `none`.
_FIELDS = (
    ("experiment", "experiment", "str"),
    ("model.kind", "model_kind", "str"),
    ("model.n_modes", "n_modes", "int"),
    ("model.gamma0", "gamma0", "float"),
    ("model.nu", "nu", "float"),
    ("run.horizon", "horizon", "float"),
    ("run.dt", "dt", "float"),
    ("run.burn_in", "burn_in", "opt_float"),
    ("run.stride", "stride", "int"),
    ("run.replicas", "replicas", "int"),
    ("run.seed", "seed", "int"),
    ("run.guard", "guard", "float"),
    ("bound.delta", "delta", "float"),
    ("bound.gamma", "gamma", "float"),
    ("bound.epsilon", "epsilon", "float"),
    ("bound.shifts", "shifts", "floats"),
    ("moments.p_list", "p_list", "floats"),
    ("moments.sigma_list", "sigma_list", "floats"),
    ("out.dir", "out_dir", "opt_str"),
)

_BY_KEY = {key: (attr, kind) for key, attr, kind in _FIELDS}


def _parse_value(key: str, kind: str, text: str):
    text = text.strip()
    try:
        if kind == "str":
            return text
        if kind == "opt_str":
            return None if text == "none" else text
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "opt_float":
            return None if text == "none" else float(text)
        if kind == "floats":
            if not text:
                return ()
            return tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    raise AssertionError(kind)


def _render_value(kind: str, value) -> str:
    if value is None:
        return "none"
    if kind in ("str", "opt_str"):
        return str(value)
    if kind == "int":
        return str(int(value))
    if kind in ("float", "opt_float"):
        return repr(float(value))
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    raise AssertionError(kind)


def render_config(cfg: ExperimentConfig) -> str:
    lines = [f"{key} = {_render_value(kind, getattr(cfg, attr))}" for key, attr, kind in _FIELDS]
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> ExperimentConfig:
    updates: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _BY_KEY:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        attr, kind = _BY_KEY[key]
        updates[attr] = _parse_value(key, kind, value)
    return ExperimentConfig(**updates)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config(text)


def apply_overrides(cfg: ExperimentConfig, assignments) -> ExperimentConfig:
    """Apply `dotted.key=value` strings in order, later ones winning."""
    updates: dict[str, object] = {}
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in _BY_KEY:
            raise ConfigError(f"unknown config key {key!r}")
        attr, kind = _BY_KEY[key]
        updates[attr] = _parse_value(key, kind, value)
    return dataclasses.replace(cfg, **updates)


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.experiment not in EXPERIMENT_TAGS:
        raise ConfigError(
            f"unknown experiment {cfg.experiment!r}; expected one of {', '.join(EXPERIMENT_TAGS)}"
        )
    if cfg.model_kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model.kind {cfg.model_kind!r}; expected burgers or thinfilm")
    if cfg.n_modes < 1:
        raise ConfigError(f"model.n_modes must be >= 1, got {cfg.n_modes}")
    if not cfg.gamma0 >= 0.0:
        raise ConfigError(f"model.gamma0 must be >= 0, got {cfg.gamma0}")
    if not cfg.nu >= 0.0:
        raise ConfigError(f"model.nu must be >= 0, got {cfg.nu}")
    if not cfg.horizon > 0.0:
        raise ConfigError(f"run.horizon must be positive, got {cfg.horizon}")
    if not cfg.dt > 0.0:
        raise ConfigError(f"run.dt must be positive, got {cfg.dt}")
    if cfg.dt > cfg.horizon:
        raise ConfigError(f"run.dt = {cfg.dt} exceeds run.horizon = {cfg.horizon}")
    if cfg.burn_in is not None and not 0.0 <= cfg.burn_in < cfg.horizon:
        raise ConfigError(f"run.burn_in must lie in [0, horizon), got {cfg.burn_in}")
    if cfg.stride < 1:
        raise ConfigError(f"run.stride must be >= 1, got {cfg.stride}")
    if cfg.replicas < 1:
        raise ConfigError(f"run.replicas must be >= 1, got {cfg.replicas}")
    if not 0 <= cfg.seed < (1 << 64):
        raise ConfigError(f"run.seed must fit in an unsigned 64-bit word, got {cfg.seed}")
    if not cfg.guard > 0.0:
        raise ConfigError(f"run.guard must be positive, got {cfg.guard}")
    if not 0.0 < cfg.delta < 0.5:
        raise ConfigError(f"bound.delta = {cfg.delta} violates delta in (0, 1/2)")
    if not cfg.gamma >= 0.0:
        raise ConfigError(f"bound.gamma must be >= 0, got {cfg.gamma}")
    if not 0.0 < cfg.epsilon <= cfg.delta:
        raise ConfigError(
            f"bound.epsilon = {cfg.epsilon} must lie in (0, delta] with delta = {cfg.delta}"
        )
    if not cfg.shifts:
        raise ConfigError("bound.shifts must list at least one rate")
    for s in cfg.shifts:
        if not s > 0.0:
            raise ConfigError(f"bound.shifts entries must be positive, got {s}")
    for p in cfg.p_list:
        if not p >= 0.0:
            raise ConfigError(f"moments.p_list entries must be >= 0, got {p}")
    for s in cfg.sigma_list:
        if not 0.0 <= s <= 0.5:
            raise ConfigError(f"moments.sigma_list entries must lie in [0, 1/2], got {s}")
    if cfg.experiment == "onesided" and cfg.model_kind != "burgers":
        raise ConfigError("the onesided experiment needs the advection model (model.kind = burgers)")
