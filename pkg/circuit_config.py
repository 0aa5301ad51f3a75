"""
Configuration settings for the circuit simulator.

Defaults live in DEFAULT_CONFIG below; config.json next to this file (or a
file given with --config) overrides them section by section.
"""

import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

from ledger_core import ConfigurationError

DEFAULT_CONFIG = {
    "simulation": {
        "mode": "psync",          # Options: "psync", "sync"
        "delta": 1,               # network delay bound after GST, in ticks
        "gst": 0,
        "tconf": 2,               # per-chain latency bound
        "epoch_duration": 1,      # T, ticks per underlay block
        "max_branches": 4,        # cap on branches of a non-safe chain
        "horizon_slack": 4,       # extra ticks after the last liveness deadline
        "boundary_bias": 0.5,     # share of adversary choices taken at window extremes
        "clients": ["c1", "c2"],
    },
    "synthesis": {
        "max_k": 6,               # largest underlay count materialized as a tree
        "max_lvl_arity": 7,       # largest (2f+1)-lvl built by recursion
        "max_eval_k": 10,         # largest k evaluated over all 4^k assignments
    },
    "sweep": {
        "seeds_per_cell": 3,
        "workers": 1,
        "max_cells": 256,         # 4^k cells above this need sampling
        "sample": None,           # number of cells drawn when sampling
        "gst_values": [0],
        "injections": 2,
    },
    "logging": {
        "log_level": "WARNING",
        "log_file": None,
    },
    "report": {
        "format": "table",        # Options: "table", "json"
        "schema_version": 1,
    },
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Load configuration from config.json, merged over the defaults."""
    explicit = path is not None
    config_path = path or os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.json")

    if not os.path.exists(config_path):
        if explicit:
            raise ConfigurationError(f"Config file not found: {config_path}")
        return copy.deepcopy(DEFAULT_CONFIG)

    try:
        with open(config_path, "r", encoding="utf-8") as f:
            loaded = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON in {config_path}: {str(e)}")
    except OSError as e:
        raise ConfigurationError(f"Failed to load {config_path}: {str(e)}")

    if not isinstance(loaded, dict):
        raise ConfigurationError(f"{config_path} must hold a JSON object")
    unknown = set(loaded) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigurationError(f"Unknown section(s) in {config_path}: {', '.join(sorted(unknown))}")
    return _merge(DEFAULT_CONFIG, loaded)


def config_hash(config: Dict[str, Any]) -> str:
    canonical = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def setup_logging(config: Dict[str, Any], verbose: bool = False):
    """Configure the root logger from the ``logging`` section."""
    log_config = config.get("logging", {})
    level_name = "DEBUG" if verbose else str(log_config.get("log_level", "WARNING")).upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        raise ConfigurationError(f"Unknown log level: {level_name}")

    handlers = [logging.StreamHandler()]
    log_file = log_config.get("log_file")
    if log_file:
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
