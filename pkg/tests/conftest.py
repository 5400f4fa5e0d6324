from __future__ import annotations

import math
from typing import Dict, Tuple

import pytest

from app.calculus.phase_grid import Grid2D, ModeFunction
from app.core.config import Settings
from app.services.corpus import build_corpus_repo


def trig(grid: Grid2D, terms: Dict[Tuple[int, int], complex]) -> ModeFunction:
    return ModeFunction.from_coefficients(grid, terms)


def sin_x(grid: Grid2D, p: int = 1) -> ModeFunction:
    return trig(grid, {(p, 0): -0.5j, (-p, 0): 0.5j})


def sin_xi(grid: Grid2D, q: int = 1) -> ModeFunction:
    return trig(grid, {(0, q): -0.5j, (0, -q): 0.5j})


def sin_sin(grid: Grid2D, p: int = 1, q: int = 1) -> ModeFunction:
    """sin(p k x) sin(q k ξ) with k the grid wavenumber."""
    return trig(grid, {(p, q): -0.25, (p, -q): 0.25, (-p, q): 0.25, (-p, -q): -0.25})


def bump(grid: Grid2D, amplitude: float = 0.3) -> ModeFunction:
    c = 0.25 * amplitude
    return trig(grid, {(0, 0): 1.0, (1, 1): -c, (1, -1): c, (-1, 1): c, (-1, -1): -c})


@pytest.fixture
def grid() -> Grid2D:
    return Grid2D(math.pi, 32)


@pytest.fixture
def small_grid() -> Grid2D:
    return Grid2D(math.pi, 16)


@pytest.fixture
def wide_grid() -> Grid2D:
    return Grid2D(8.0, 128)


@pytest.fixture
def corpus():
    return build_corpus_repo(Settings())


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("WEYL_GRID_L", "WEYL_GRID_Q", "WEYL_LOG_LEVEL", "WEYL_WORKERS", "WEYL_LATTICE_BUDGET", "WEYL_CORPUS"):
        monkeypatch.delenv(name, raising=False)
