from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Tuple

import numpy as np

from app.calculus.phase_grid import Grid2D, ModeFunction
from app.calculus.star_core import GaussianWindowed
from app.calculus.symbols import SymbolClassSpec, TensorSymbol, replicate, tensor_symbol
from app.core.config import Settings
from app.core.errors import ConfigError, InvalidDiscretizationError
from app.core.logging import logger

BUNDLED_CORPUS = Path(__file__).resolve().parent / "data" / "std.json"
LATTICE_TOL = 1e-9
GAUSSIAN_TRIM = 1e-13

# (physical wavenumber along x, along ξ, amplitude)
Term = Tuple[float, float, complex]


@dataclass(frozen=True)
class SymbolEntry:
    name: str
    form: str
    n: int = 1
    factors: Tuple[Tuple[Term, ...], ...] = ()
    prefactor: complex = 1.0
    rate: float = 0.0
    carrier: Optional[str] = None
    L: Optional[float] = None
    Q: Optional[int] = None


class CorpusRepo(Protocol):
    def list_symbols(self) -> List[str]: ...

    def list_pairs(self) -> List[str]: ...

    def get_entry(self, name: str) -> SymbolEntry: ...

    def grid_for(self, name: str, grid: Optional[Grid2D] = None) -> Grid2D: ...

    def get_factor(self, name: str, grid: Optional[Grid2D] = None) -> ModeFunction: ...

    def get_symbol(self, name: str, n: Optional[int] = None, grid: Optional[Grid2D] = None) -> TensorSymbol: ...

    def get_windowed(self, name: str) -> GaussianWindowed: ...

    def get_pair(self, name: str) -> Tuple[str, str]: ...

    def get_class(self, name: str) -> Optional[SymbolClassSpec]: ...


def _parse_grid(raw: Dict[str, Any]) -> Tuple[Optional[float], Optional[int]]:
    grid = raw.get("grid") or {}
    L: Optional[float] = None
    if "L_over_pi" in grid:
        L = float(grid["L_over_pi"]) * math.pi
    elif "L" in grid:
        L = float(grid["L"])
    Q = int(grid["Q"]) if "Q" in grid else None
    return L, Q


def _parse_complex(raw: Any, default: complex = 1.0) -> complex:
    if raw is None:
        return default
    if isinstance(raw, dict):
        return complex(float(raw.get("re", 0.0)), float(raw.get("im", 0.0)))
    return complex(raw)


def _parse_entry(name: str, raw: Dict[str, Any]) -> SymbolEntry:
    form = str(raw.get("form", "tensor"))
    L, Q = _parse_grid(raw)
    base_L = L if L is not None else math.pi
    if form == "tensor":
        n = int(raw.get("n", 1))
        factors = []
        for factor in raw.get("factors", []):
            terms = []
            for item in factor.get("coeffs", []):
                # p, q are frequency indices on the entry's own grid
                terms.append(
                    (
                        int(item["p"]) * math.pi / base_L,
                        int(item["q"]) * math.pi / base_L,
                        complex(float(item.get("re", 0.0)), float(item.get("im", 0.0))),
                    )
                )
            factors.append(tuple(terms))
        if not factors:
            raise ConfigError(f"corpus symbol {name!r} has no factors")
        if len(factors) not in (1, n):
            raise ConfigError(f"corpus symbol {name!r}: {len(factors)} factors for n={n}")
        return SymbolEntry(name, form, n, tuple(factors), _parse_complex(raw.get("prefactor")), L=L, Q=Q)
    if form == "gaussian":
        return SymbolEntry(name, form, rate=float(raw["rate"]), carrier=raw.get("carrier"), L=L, Q=Q)
    raise ConfigError(f"corpus symbol {name!r} has unsupported form {form!r}")


def build_factor(name: str, terms: Tuple[Term, ...], grid: Grid2D) -> ModeFunction:
    """Place physical wavenumbers on the lattice of ``grid``."""
    coeffs: Dict[Tuple[int, int], complex] = {}
    for kx, kxi, value in terms:
        p = kx / grid.wavenumber
        q = kxi / grid.wavenumber
        if abs(p - round(p)) > LATTICE_TOL or abs(q - round(q)) > LATTICE_TOL:
            raise InvalidDiscretizationError(
                f"symbol {name!r}: wavenumber ({kx:.6g}, {kxi:.6g}) is not on the lattice of L={grid.L:.6g}"
            )
        key = (int(round(p)), int(round(q)))
        coeffs[key] = coeffs.get(key, 0.0) + value
    return ModeFunction.from_coefficients(grid, coeffs)


class JsonCorpusRepo:
    """Read-only corpus backed by one JSON document."""

    def __init__(self, path: Path, default_grid: Grid2D) -> None:
        self.path = Path(path)
        self.default_grid = default_grid
        try:
            with self.path.open("r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except FileNotFoundError as exc:
            raise ConfigError(f"corpus file not found: {self.path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"corpus file is not valid JSON: {self.path}: {exc}") from exc
        try:
            self._entries = {name: _parse_entry(name, item) for name, item in raw.get("symbols", {}).items()}
            self._pairs = {name: (str(item[0]), str(item[1])) for name, item in raw.get("pairs", {}).items()}
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed corpus {self.path}: {exc}") from exc
        self._classes: Dict[str, Dict[str, Any]] = raw.get("classes", {})
        for name, (a, b) in self._pairs.items():
            if a not in self._entries or b not in self._entries:
                raise ConfigError(f"corpus pair {name!r} refers to unknown symbols {a!r}, {b!r}")
        self._cache: Dict[Tuple[str, int, float, int], ModeFunction] = {}
        logger.info("Corpus loaded path=%s symbols=%s pairs=%s", self.path, len(self._entries), len(self._pairs))

    def list_symbols(self) -> List[str]:
        return sorted(self._entries)

    def list_pairs(self) -> List[str]:
        return sorted(self._pairs)

    def get_entry(self, name: str) -> SymbolEntry:
        try:
            return self._entries[name]
        except KeyError as exc:
            raise ConfigError(f"unknown corpus symbol {name!r}") from exc

    def grid_for(self, name: str, grid: Optional[Grid2D] = None) -> Grid2D:
        if grid is not None:
            return grid
        entry = self.get_entry(name)
        L = entry.L if entry.L is not None else self.default_grid.L
        Q = entry.Q if entry.Q is not None else self.default_grid.Q
        return Grid2D(L, Q)

    def _factor(self, entry: SymbolEntry, index: int, grid: Grid2D) -> ModeFunction:
        key = (entry.name, index, grid.L, grid.Q)
        if key not in self._cache:
            if entry.form == "tensor":
                self._cache[key] = build_factor(entry.name, entry.factors[index], grid)
            else:
                self._cache[key] = self.get_windowed(entry.name).on_grid(grid, trim=GAUSSIAN_TRIM)
        return self._cache[key]

    def get_factor(self, name: str, grid: Optional[Grid2D] = None) -> ModeFunction:
        """Single-mode function with the prefactor absorbed."""
        entry = self.get_entry(name)
        if entry.form == "tensor" and (entry.n != 1 or len(entry.factors) != 1):
            raise ConfigError(f"corpus symbol {name!r} is not a single-mode symbol")
        f = self._factor(entry, 0, self.grid_for(name, grid))
        return f if entry.prefactor == 1.0 else f.scale(entry.prefactor)

    def get_symbol(self, name: str, n: Optional[int] = None, grid: Optional[Grid2D] = None) -> TensorSymbol:
        """Tensor symbol on ``n`` modes; single-factor entries are replicated."""
        entry = self.get_entry(name)
        target = self.grid_for(name, grid)
        if entry.form != "tensor" or len(entry.factors) == 1:
            count = n if n is not None else entry.n
            if entry.n != 1 and count != entry.n:
                raise ConfigError(f"corpus symbol {name!r} has n={entry.n}, requested n={count}")
            return replicate(self._factor(entry, 0, target), count, entry.prefactor)
        if n is not None and n != entry.n:
            raise ConfigError(f"corpus symbol {name!r} has n={entry.n}, requested n={n}")
        factors = [self._factor(entry, j, target) for j in range(entry.n)]
        return tensor_symbol(factors, entry.prefactor)

    def get_windowed(self, name: str) -> GaussianWindowed:
        entry = self.get_entry(name)
        if entry.form != "gaussian":
            raise ConfigError(f"corpus symbol {name!r} has no Gaussian envelope")
        carrier = self.get_factor(entry.carrier) if entry.carrier else None
        return GaussianWindowed(entry.rate, carrier=carrier)

    def get_pair(self, name: str) -> Tuple[str, str]:
        try:
            return self._pairs[name]
        except KeyError as exc:
            raise ConfigError(f"unknown corpus pair {name!r}") from exc

    def get_class(self, name: str) -> Optional[SymbolClassSpec]:
        raw = self._classes.get(name)
        if raw is None:
            return None
        return SymbolClassSpec(int(raw["m"]), float(raw["M"]), tuple(raw["rho"]), tuple(raw["delta"]))


def build_corpus_repo(settings: Settings, path: Optional[str] = None) -> CorpusRepo:
    target = Path(path or settings.corpus_path or BUNDLED_CORPUS)
    return JsonCorpusRepo(target, Grid2D(settings.grid_L, settings.grid_Q))


def random_unit_mode_functions(grid: Grid2D, count: int, seed: int, max_freq: int = 3) -> List[ModeFunction]:
    """Random trigonometric polynomials with coefficient sum 1, hence sup-norm at most 1."""
    if 2 * max_freq >= grid.half:
        raise InvalidDiscretizationError(f"max frequency {max_freq} leaves no room for products on Q={grid.Q}")
    rng = np.random.default_rng(seed)
    out = []
    size = 2 * max_freq + 1
    lo = grid.half - max_freq
    for _ in range(count):
        block = rng.normal(size=(size, size)) + 1j * rng.normal(size=(size, size))
        block /= np.sum(np.abs(block))
        coeffs = np.zeros((grid.Q, grid.Q), dtype=complex)
        coeffs[lo:lo + size, lo:lo + size] = block
        out.append(ModeFunction(grid, coeffs))
    return out
