"""Run configuration: dataclass, ``key = value`` file parsing, CLI mirroring.

The configuration key space is flat: hyperparameters and orchestration
settings share one namespace, readable from a plain-text file and
overridable by command-line flags.  Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .backbone import Hyperparameters
from .dataset import FORMATS
from .errors import ConfigError

DATA_FORMATS = FORMATS + ("prepared",)


@dataclass
class TrainConfig:
    """Everything a training run needs; defaults documented via ``--help``."""

    data_path: str = ""
    data_format: str = "tsv"
    rating_threshold: float = 0.0
    kcore_min: int = 0
    split_seed: int = 42
    eval_ns: tuple[int, ...] = (10, 20, 50)
    patience: int = 10
    log_path: str = ""
    checkpoint_path: str = ""
    threads: int = 1
    log_timing: bool = False
    target_steps: int = 2000
    target_lr: float = 0.1
    target_tau: float = 0.5
    kmeans_iters: int = 20
    hp: Hyperparameters = field(default_factory=Hyperparameters)

    def validate(self) -> None:
        if not self.data_path:
            raise ConfigError("data_path is required")
        if self.data_format not in DATA_FORMATS:
            raise ConfigError(f"data_format must be one of {DATA_FORMATS}")
        if not self.eval_ns or any(n < 1 for n in self.eval_ns):
            raise ConfigError("eval_ns must be positive cutoffs")
        if self.kcore_min < 0:
            raise ConfigError("kcore_min must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.target_steps < 1 or self.target_lr <= 0 or self.target_tau <= 0:
            raise ConfigError("target generation settings must be positive")
        if self.kmeans_iters < 1:
            raise ConfigError("kmeans_iters must be >= 1")
        self.hp.validate()


def _parse_bool(text: str) -> bool:
    lower = text.strip().lower()
    if lower in ("true", "1", "yes"):
        return True
    if lower in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def _parse_ns(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.replace(" ", "").split(",") if part)
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


_SPECIAL_PARSERS = {"eval_ns": _parse_ns, "log_timing": _parse_bool}

_HP_FIELDS = {f.name for f in dataclasses.fields(Hyperparameters)}
_TOP_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)} - {"hp"}

# Flat key space: every key maps to the type of its dataclass default.
FIELD_TYPES: dict[str, type] = {}
for _f in dataclasses.fields(TrainConfig):
    if _f.name != "hp":
        FIELD_TYPES[_f.name] = type(getattr(TrainConfig(), _f.name))
for _f in dataclasses.fields(Hyperparameters):
    FIELD_TYPES[_f.name] = type(getattr(Hyperparameters(), _f.name))


def parse_value(key: str, text: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    if key in _SPECIAL_PARSERS:
        return _SPECIAL_PARSERS[key](text)
    target = FIELD_TYPES[key]
    try:
        if target is bool:
            return _parse_bool(text)
        if target is int:
            return int(text)
        if target is float:
            return float(text)
        return text.strip()
    except ValueError:
        raise ConfigError(f"bad value {text!r} for key {key!r}") from None


def read_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` comments and blank lines skipped."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = stripped.partition("=")
            out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict[str, object]) -> TrainConfig:
    """Build a validated TrainConfig from a flat mapping; unknown keys fail."""
    cfg = TrainConfig()
    for key, value in mapping.items():
        parsed = parse_value(key, value) if isinstance(value, str) else value
        if key in _HP_FIELDS:
            setattr(cfg.hp, key, parsed)
        elif key in _TOP_FIELDS:
            setattr(cfg, key, parsed)
        else:
            raise ConfigError(f"unknown configuration key {key!r}")
    cfg.validate()
    return cfg


def load_config(path: str, overrides: dict[str, object] | None = None) -> TrainConfig:
    mapping: dict[str, object] = dict(read_config_file(path))
    if overrides:
        mapping.update(overrides)
    return config_from_mapping(mapping)
