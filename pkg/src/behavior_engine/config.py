"""Run configuration files: one flat table of engine and hybrid planner keys.

JSON example::

    {"dt": 0.1, "horizon_steps": 91, "accel_range": [-4, 4], "k": 8}

TOML files (``.toml``) take the same keys at the top level.
"""
from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import Path

from .engine import EngineConfig
from .planners import HybridConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENGINE_KEYS = tuple(f.name for f in dataclasses.fields(EngineConfig))
HYBRID_KEYS = ("k", "h1_steps", "h2_steps", "proposal_count", "min_speed_limit", "progress_ratio")
PAIR_KEYS = ("accel_range", "steer_range")


class ConfigError(ValueError):
    pass


def config_from_mapping(data: dict) -> tuple[EngineConfig, HybridConfig]:
    unknown = sorted(set(data) - set(ENGINE_KEYS) - set(HYBRID_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    engine = {k: data[k] for k in ENGINE_KEYS if k in data}
    for key in PAIR_KEYS:
        if key in engine:
            pair = engine[key]
            if not isinstance(pair, (list, tuple)) or len(pair) != 2 or not pair[0] < pair[1]:
                raise ConfigError(f"{key} must be an increasing [low, high] pair")
            engine[key] = (float(pair[0]), float(pair[1]))
    if "terminal_precedence" in engine:
        engine["terminal_precedence"] = tuple(engine["terminal_precedence"])
    hybrid = {k: data[k] for k in HYBRID_KEYS if k in data}
    try:
        return EngineConfig(**engine), HybridConfig(**hybrid)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None) -> tuple[EngineConfig, HybridConfig]:
    """Engine and hybrid settings from a JSON or TOML file; defaults for ``None``."""
    if path is None:
        return EngineConfig(), HybridConfig()
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(raw.decode())
        else:
            data = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a single table of keys")
    return config_from_mapping(data)
