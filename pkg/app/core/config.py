from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Optional

from app.core.errors import ConfigError


@dataclass(frozen=True)
class Settings:
    grid_L: float = math.pi
    grid_Q: int = 32
    log_level: str = "INFO"
    workers: int = 1
    lattice_budget: int = 1 << 22
    corpus_path: Optional[str] = None


def _get_env(name: str, default: Optional[str] = None) -> Optional[str]:
    value = os.getenv(name, default)
    if value is None:
        return None
    value = value.strip()
    return value if value else None


def _get_int_env(name: str, default: int) -> int:
    value = _get_env(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        return default


def _get_float_env(name: str, default: float) -> float:
    value = _get_env(name)
    if value is None:
        return default
    try:
        parsed = float(value)
    except ValueError:
        return default
    return parsed if math.isfinite(parsed) else default


def load_settings() -> Settings:
    settings = Settings(
        grid_L=_get_float_env("WEYL_GRID_L", math.pi),
        grid_Q=_get_int_env("WEYL_GRID_Q", 32),
        log_level=(_get_env("WEYL_LOG_LEVEL") or "INFO").upper(),
        workers=_get_int_env("WEYL_WORKERS", 1),
        lattice_budget=_get_int_env("WEYL_LATTICE_BUDGET", 1 << 22),
        corpus_path=_get_env("WEYL_CORPUS"),
    )
    if settings.workers < 1:
        raise ConfigError("WEYL_WORKERS must be at least 1")
    if settings.lattice_budget < 1:
        raise ConfigError("WEYL_LATTICE_BUDGET must be positive")
    return settings
