"""Scenario configuration: plain key=value files.

Unknown keys are rejected so typos fail loudly.  Paths are resolved relative
to the config file's directory.  Defaults, where a key has one, are listed
next to each entry below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_int_list(raw: str) -> tuple:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(x) for x in raw.split(","))


def _parse_float_list(raw: str) -> tuple:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(x) for x in raw.split(","))


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int  # required
    epochs: int  # required
    n0: int  # required: initial node count
    lambda_leave: float  # required
    lambda_join: float  # required
    alpha: int  # required: confirmation depth
    beta: int  # required: blocks per epoch
    zeta: float  # required: target decode-failure probability
    gamma: float  # required: sizing horizon in epochs
    block_bytes: int = 32
    symbol_bits: int = 16
    precode_rate: float = 0.8
    reencode_factor: float = 1.0
    initial_unencoded: int = 0
    one_enhanced_per_epoch: bool = True
    failure_table_path: str = ""
    churn_trace_path: str = ""
    soliton_c: float = 0.1
    soliton_delta: float = 0.5
    patience: int = 50
    table_n_grid: tuple = ()
    table_k_ratios: tuple = ()
    table_trials: int = 200

    @property
    def symbols_per_block(self) -> int:
        return -(-self.block_bytes // ((self.symbol_bits + 7) // 8))


_PARSERS = {
    "seed": int,
    "epochs": int,
    "n0": int,
    "lambda_leave": float,
    "lambda_join": float,
    "alpha": int,
    "beta": int,
    "zeta": float,
    "gamma": float,
    "block_bytes": int,
    "symbol_bits": int,
    "precode_rate": float,
    "reencode_factor": float,
    "initial_unencoded": int,
    "one_enhanced_per_epoch": _parse_bool,
    "failure_table_path": str,
    "churn_trace_path": str,
    "soliton_c": float,
    "soliton_delta": float,
    "patience": int,
    "table_n_grid": _parse_int_list,
    "table_k_ratios": _parse_float_list,
    "table_trials": int,
}

_REQUIRED = (
    "seed",
    "epochs",
    "n0",
    "lambda_leave",
    "lambda_join",
    "alpha",
    "beta",
    "zeta",
    "gamma",
)


def _validate(cfg: ScenarioConfig) -> None:
    checks = [
        (cfg.epochs >= 0, "epochs must be >= 0"),
        (cfg.n0 >= 1, "n0 must be >= 1"),
        (cfg.lambda_leave >= 0, "lambda_leave must be >= 0"),
        (cfg.lambda_join >= 0, "lambda_join must be >= 0"),
        (cfg.alpha >= 1, "alpha must be >= 1"),
        (cfg.beta >= 1, "beta must be >= 1"),
        (0 < cfg.zeta < 1, "zeta must lie in (0, 1)"),
        (cfg.gamma >= 0, "gamma must be >= 0"),
        (cfg.block_bytes >= 1, "block_bytes must be >= 1"),
        (1 <= cfg.symbol_bits <= 16, "symbol_bits must lie in 1..16"),
        (0 < cfg.precode_rate <= 1, "precode_rate must lie in (0, 1]"),
        (0 < cfg.reencode_factor <= 1, "reencode_factor must lie in (0, 1]"),
        (cfg.initial_unencoded >= 0, "initial_unencoded must be >= 0"),
        (cfg.soliton_c > 0, "soliton_c must be positive"),
        (0 < cfg.soliton_delta < 1, "soliton_delta must lie in (0, 1)"),
        (cfg.patience >= 1, "patience must be >= 1"),
        (cfg.table_trials >= 1, "table_trials must be >= 1"),
        (all(n >= 1 for n in cfg.table_n_grid), "table_n_grid entries must be >= 1"),
        (
            all(0 < r <= 1 for r in cfg.table_k_ratios),
            "table_k_ratios entries must lie in (0, 1]",
        ),
        (math.isfinite(cfg.zeta), "zeta must be finite"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def load_config(path) -> ScenarioConfig:
    """Parse and validate a key=value scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, rhs = line.partition("=")
        key = key.strip()
        rhs = rhs.split("#", 1)[0].strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](rhs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing required keys: {', '.join(missing)}")
    cfg = ScenarioConfig(**values)
    _validate(cfg)
    # resolve paths against the config directory
    updates = {}
    for key in ("failure_table_path", "churn_trace_path"):
        value = getattr(cfg, key)
        if value:
            updates[key] = str((path.parent / value).resolve())
    if updates:
        cfg = ScenarioConfig(
            **{
                **{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                **updates,
            }
        )
    return cfg
