"""YAML-backed defaults with environment switches."""
from __future__ import annotations

from functools import lru_cache
from pathlib import Path
import copy
import logging
import os
from typing import Any

import yaml

from src.errors import ConfigError

LOGGER = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parents[1] / "config" / "defaults.yaml"

# Flip with environment variables instead of editing code:
#   STEREOBENCH_CONFIG=path/to/other.yaml  -> alternative defaults file
#   STEREOBENCH_WORKERS=4                  -> eval worker pool size (0 = all cores)
#   STEREOBENCH_PROGRESS=0                 -> silence tqdm progress bars
CONFIG_ENV = "STEREOBENCH_CONFIG"
WORKERS_ENV = "STEREOBENCH_WORKERS"
PROGRESS_ENV = "STEREOBENCH_PROGRESS"


def _config_path(path: str | Path | None) -> Path:
    if path:
        return Path(path)
    env = os.getenv(CONFIG_ENV)
    return Path(env) if env else DEFAULT_CONFIG_PATH


@lru_cache(maxsize=8)
def _load_cached(resolved: str) -> dict[str, Any]:
    config_file = Path(resolved)
    try:
        with config_file.open("r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found: {config_file}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"Failed to parse {config_file}: {exc}") from exc

    if not isinstance(data, dict):
        raise ConfigError(f"Config root must be a mapping: {config_file}")
    LOGGER.debug("Loaded config from %s", config_file)
    return data


def load_config(path: str | Path | None = None) -> dict[str, Any]:
    """Return a private copy of the YAML config (defaults.yaml unless overridden)."""
    return copy.deepcopy(_load_cached(str(_config_path(path).resolve())))


def section(cfg: dict[str, Any], name: str) -> dict[str, Any]:
    value = cfg.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"Config section '{name}' must be a mapping")
    return value


def default_workers() -> int:
    raw = os.getenv(WORKERS_ENV, "0")
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    return workers if workers > 0 else (os.cpu_count() or 1)


def progress_enabled() -> bool:
    return os.getenv(PROGRESS_ENV, "1") != "0"


__all__ = ["load_config", "section", "default_workers", "progress_enabled", "DEFAULT_CONFIG_PATH"]
