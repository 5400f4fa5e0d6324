from __future__ import annotations

import itertools
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, ClassVar, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.signal import fftconvolve

from app.calculus import phase_grid as pg
from app.calculus.phase_grid import CompensatedSum, Grid2D, ModeFunction
from app.core.errors import InvalidParameterError, ModeMismatchError, SymbolFormError
from app.core.logging import logger

DENSE_MAX_MODES = 3
DENSE_MAX_ENTRIES = 1 << 22
DEFAULT_LATTICE_BUDGET = 1 << 22
CERTIFY_SLACK = 1e-9
MAX_CLASS_ORDER = 8
ENUMERATION_CAP = 100_000
SAMPLED_POINTS = 1 << 16
SAMPLE_SEED = 20240531

MultiIndex = Tuple[Tuple[int, ...], Tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class TensorSymbol:
    """prefactor * prod_j factor_j(x_j, ξ_j)."""

    factors: Tuple[ModeFunction, ...]
    prefactor: complex = 1.0
    form: ClassVar[str] = "tensor"

    def __post_init__(self) -> None:
        factors = tuple(self.factors)
        if not factors:
            raise SymbolFormError("a tensor symbol needs at least one factor")
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "prefactor", complex(self.prefactor))

    @property
    def n_modes(self) -> int:
        return len(self.factors)

    @property
    def grids(self) -> Tuple[Grid2D, ...]:
        return tuple(f.grid for f in self.factors)

    def map_modes(self, fn: Callable[[int, ModeFunction], ModeFunction]) -> "TensorSymbol":
        return TensorSymbol(tuple(fn(j, f) for j, f in enumerate(self.factors)), self.prefactor)

    def with_prefactor(self, prefactor: complex) -> "TensorSymbol":
        return TensorSymbol(self.factors, prefactor)

    @property
    def is_zero(self) -> bool:
        return self.prefactor == 0 or any(f.is_zero for f in self.factors)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n_modes)
        value = np.full(pts.shape[:-2], self.prefactor, dtype=complex)
        for j, f in enumerate(self.factors):
            value = value * f.evaluate(pts[..., j, 0], pts[..., j, 1])
        return value


@dataclass(frozen=True, eq=False)
class DenseSymbol:
    """Full coefficient array over (x_1, ξ_1, ..., x_n, ξ_n), n <= 3."""

    grids: Tuple[Grid2D, ...]
    coeffs: np.ndarray
    prefactor: complex = 1.0
    form: ClassVar[str] = "dense"

    def __post_init__(self) -> None:
        grids = tuple(self.grids)
        _check_dense_allowed(grids)
        arr = pg.clean_coefficients(self.coeffs)
        expected = _dense_shape(grids)
        if arr.shape != expected:
            raise SymbolFormError(f"dense coefficient shape {arr.shape} does not match {expected}")
        if pg.nyquist_amplitude(arr) > 0.0:
            raise pg.BandLimitError("dense symbol carries amplitude on a Nyquist boundary")
        arr.setflags(write=False)
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "coeffs", arr)
        object.__setattr__(self, "prefactor", complex(self.prefactor))

    @property
    def n_modes(self) -> int:
        return len(self.grids)

    @cached_property
    def samples(self) -> np.ndarray:
        values = self.prefactor * pg.coeffs_to_samples(self.coeffs)
        values.setflags(write=False)
        return values

    @property
    def is_zero(self) -> bool:
        return self.prefactor == 0 or not np.any(self.coeffs)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n_modes)
        flat = pts.reshape(-1, 2 * self.n_modes)
        nz = np.argwhere(self.coeffs != 0)
        if nz.size == 0:
            return np.zeros(pts.shape[:-2], dtype=complex)
        centers = np.array([s // 2 for s in self.coeffs.shape])
        scales = np.repeat([g.wavenumber for g in self.grids], 2)
        freqs = (nz - centers) * scales
        values = np.exp(1j * flat @ freqs.T) @ self.coeffs[tuple(nz.T)]
        return (self.prefactor * values).reshape(pts.shape[:-2])


@dataclass(frozen=True, eq=False)
class CanonicalSymbol:
    """Finite sum of rank-one tensor symbols over a common set of grids."""

    grids: Tuple[Grid2D, ...]
    terms: Tuple[TensorSymbol, ...] = ()
    form: ClassVar[str] = "canonical"

    def __post_init__(self) -> None:
        grids = tuple(self.grids)
        terms = tuple(t for t in self.terms if not t.is_zero)
        for term in terms:
            if term.grids != grids:
                raise ModeMismatchError("canonical terms must share the symbol grids")
        object.__setattr__(self, "grids", grids)
        object.__setattr__(self, "terms", terms)

    @property
    def n_modes(self) -> int:
        return len(self.grids)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def map_modes(self, fn: Callable[[int, ModeFunction], ModeFunction]) -> "CanonicalSymbol":
        return CanonicalSymbol(self.grids, tuple(t.map_modes(fn) for t in self.terms))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.n_modes)
        acc = CompensatedSum(pts.shape[:-2])
        for term in self.terms:
            acc.add(term.evaluate(pts))
        return acc.total


Symbol = Union[TensorSymbol, DenseSymbol, CanonicalSymbol]


def _as_points(points: np.ndarray, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim < 2 or pts.shape[-2:] != (n, 2):
        raise ModeMismatchError(f"points must have trailing shape ({n}, 2), got {pts.shape}")
    return pts


def _dense_shape(grids: Sequence[Grid2D]) -> Tuple[int, ...]:
    return tuple(size for g in grids for size in (g.Q, g.Q))


def _check_dense_allowed(grids: Sequence[Grid2D]) -> None:
    if not grids:
        raise SymbolFormError("a dense symbol needs at least one mode")
    if len(grids) > DENSE_MAX_MODES:
        raise SymbolFormError(f"dense form is limited to n <= {DENSE_MAX_MODES}, got n={len(grids)}")
    entries = math.prod(_dense_shape(grids))
    if entries > DENSE_MAX_ENTRIES:
        raise SymbolFormError(f"dense form would need {entries} entries (cap {DENSE_MAX_ENTRIES})")


def tensor_symbol(factors: Sequence[ModeFunction], prefactor: complex = 1.0) -> TensorSymbol:
    return TensorSymbol(tuple(factors), prefactor)


def replicate(factor: ModeFunction, n: int, prefactor: complex = 1.0) -> TensorSymbol:
    if n < 1:
        raise InvalidParameterError("mode count must be positive")
    return TensorSymbol(tuple(factor for _ in range(n)), prefactor)


def grids_of(F: Symbol) -> Tuple[Grid2D, ...]:
    return F.grids


def _require_compatible(F: Symbol, G: Symbol) -> None:
    if F.n_modes != G.n_modes:
        raise ModeMismatchError(f"mode counts differ: {F.n_modes} vs {G.n_modes}")
    if grids_of(F) != grids_of(G):
        raise ModeMismatchError("symbols live on different grids")


def _outer(arrays: Sequence[np.ndarray]) -> np.ndarray:
    out = arrays[0]
    for arr in arrays[1:]:
        out = np.multiply.outer(out, arr)
    return out


def to_dense(F: Symbol) -> DenseSymbol:
    if isinstance(F, DenseSymbol):
        return F
    _check_dense_allowed(F.grids)
    if isinstance(F, TensorSymbol):
        return DenseSymbol(F.grids, _outer([f.coeffs for f in F.factors]), F.prefactor)
    acc = CompensatedSum(_dense_shape(F.grids))
    for term in F.terms:
        acc.add(term.prefactor * _outer([f.coeffs for f in term.factors]))
    return DenseSymbol(F.grids, acc.total)


def to_canonical(F: Symbol) -> CanonicalSymbol:
    if isinstance(F, CanonicalSymbol):
        return F
    if isinstance(F, TensorSymbol):
        return CanonicalSymbol(F.grids, (F,))
    raise SymbolFormError("dense symbols have no canonical form")


def zero_like(F: Symbol) -> CanonicalSymbol:
    return CanonicalSymbol(F.grids, ())


def scale(F: Symbol, factor: complex) -> Symbol:
    if isinstance(F, TensorSymbol):
        return F.with_prefactor(F.prefactor * factor)
    if isinstance(F, DenseSymbol):
        return DenseSymbol(F.grids, F.coeffs, F.prefactor * factor)
    return CanonicalSymbol(F.grids, tuple(t.with_prefactor(t.prefactor * factor) for t in F.terms))


def add(F: Symbol, G: Symbol) -> Symbol:
    _require_compatible(F, G)
    if isinstance(F, DenseSymbol) or isinstance(G, DenseSymbol):
        a, b = to_dense(F), to_dense(G)
        return DenseSymbol(a.grids, a.prefactor * a.coeffs + b.prefactor * b.coeffs)
    return CanonicalSymbol(F.grids, to_canonical(F).terms + to_canonical(G).terms)


def subtract(F: Symbol, G: Symbol) -> Symbol:
    return add(F, scale(G, -1.0))


def sum_symbols(items: Sequence[Symbol], grids: Sequence[Grid2D]) -> Symbol:
    items = list(items)
    if any(isinstance(item, DenseSymbol) for item in items):
        acc = CompensatedSum(_dense_shape(grids))
        for item in items:
            d = to_dense(item)
            acc.add(d.prefactor * d.coeffs)
        return DenseSymbol(tuple(grids), acc.total)
    terms: List[TensorSymbol] = []
    for item in items:
        terms.extend(to_canonical(item).terms)
    return CanonicalSymbol(tuple(grids), tuple(terms))


def conjugate(F: Symbol) -> Symbol:
    if isinstance(F, TensorSymbol):
        return TensorSymbol(tuple(f.conj() for f in F.factors), np.conj(F.prefactor))
    if isinstance(F, DenseSymbol):
        flipped = np.conj(F.coeffs[tuple(slice(None, None, -1) for _ in F.coeffs.shape)])
        flipped = np.roll(flipped, 1, axis=tuple(range(flipped.ndim)))
        return DenseSymbol(F.grids, flipped, np.conj(F.prefactor))
    return CanonicalSymbol(F.grids, tuple(conjugate(t) for t in F.terms))


def _dense_axis_multiplier(grids: Sequence[Grid2D], per_mode: Sequence[Optional[np.ndarray]]) -> np.ndarray:
    shape = _dense_shape(grids)
    total = np.ones(shape, dtype=complex)
    for j, mult in enumerate(per_mode):
        if mult is None:
            continue
        view = [1] * len(shape)
        view[2 * j] = shape[2 * j]
        view[2 * j + 1] = shape[2 * j + 1]
        total = total * mult.reshape(view)
    return total


def mode_multiplier(F: Symbol, modes: Sequence[bool], fn: Callable[[Grid2D], np.ndarray]) -> Symbol:
    """Apply a per-mode Fourier multiplier ``fn(grid)`` on the selected modes."""
    if len(modes) != F.n_modes:
        raise ModeMismatchError(f"mode mask of length {len(modes)} for {F.n_modes} modes")
    if not any(modes):
        return F
    if isinstance(F, DenseSymbol):
        per_mode = [fn(g) if flag else None for g, flag in zip(F.grids, modes)]
        return DenseSymbol(F.grids, F.coeffs * _dense_axis_multiplier(F.grids, per_mode), F.prefactor)
    return F.map_modes(lambda j, f: pg.fourier_multiplier(f, fn(f.grid)) if modes[j] else f)


def heat_modes(F: Symbol, modes: Sequence[bool], t: float) -> Symbol:
    if t < 0:
        raise InvalidParameterError(f"heat time must be non-negative, got {t}")
    if t == 0:
        return F
    return mode_multiplier(F, modes, lambda grid: pg.heat_multiplier(grid, t))


def derivative(F: Symbol, alpha: Sequence[int], beta: Sequence[int]) -> Symbol:
    """∂_x^alpha ∂_ξ^beta with per-mode orders."""
    alpha, beta = tuple(alpha), tuple(beta)
    if len(alpha) != F.n_modes or len(beta) != F.n_modes:
        raise ModeMismatchError("multi-index length does not match the mode count")
    if any(a < 0 for a in alpha + beta):
        raise InvalidParameterError("derivative orders must be non-negative")
    if isinstance(F, DenseSymbol):
        per_mode = []
        for g, a, b in zip(F.grids, alpha, beta):
            k = 1j * g.wavenumbers()
            per_mode.append(np.multiply.outer(k ** a, k ** b))
        return DenseSymbol(F.grids, F.coeffs * _dense_axis_multiplier(F.grids, per_mode), F.prefactor)
    return F.map_modes(lambda j, f: pg.derivative(f, alpha[j], beta[j]))


def multiply(F: Symbol, G: Symbol) -> Symbol:
    _require_compatible(F, G)
    if isinstance(F, TensorSymbol) and isinstance(G, TensorSymbol):
        factors = tuple(pg.multiply(a, b) for a, b in zip(F.factors, G.factors))
        return TensorSymbol(factors, F.prefactor * G.prefactor)
    if isinstance(F, DenseSymbol) or isinstance(G, DenseSymbol):
        return _dense_multiply(to_dense(F), to_dense(G))
    terms = [multiply(a, b) for a in to_canonical(F).terms for b in to_canonical(G).terms]
    return CanonicalSymbol(F.grids, tuple(terms))


def _support_box(coeffs: np.ndarray, extent: Sequence[int]) -> Tuple[slice, ...]:
    return tuple(slice(s // 2 - e, s // 2 + e + 1) for s, e in zip(coeffs.shape, extent))


def _dense_multiply(a: DenseSymbol, b: DenseSymbol) -> DenseSymbol:
    if a.is_zero or b.is_zero:
        return DenseSymbol(a.grids, np.zeros_like(a.coeffs))
    ea, eb = pg.support_extent(a.coeffs), pg.support_extent(b.coeffs)
    pg.check_product_band(ea, eb, a.coeffs.shape)
    product = fftconvolve(a.coeffs[_support_box(a.coeffs, ea)], b.coeffs[_support_box(b.coeffs, eb)])
    out = np.zeros(a.coeffs.shape, dtype=complex)
    out[_support_box(out, [x + y for x, y in zip(ea, eb)])] = product
    return DenseSymbol(a.grids, out, a.prefactor * b.prefactor)


@dataclass(frozen=True)
class LatticeSup:
    value: float
    method: str
    points: int


def lattice_sup(F: Symbol, budget: int = DEFAULT_LATTICE_BUDGET) -> LatticeSup:
    """Grid maximum of |F|; factorized for tensors, lattice-restricted for sums."""
    if isinstance(F, TensorSymbol):
        points = math.prod(g.Q * g.Q for g in F.grids)
        return LatticeSup(_tensor_sup(F), "factorized", points)
    if isinstance(F, DenseSymbol):
        return LatticeSup(float(np.max(np.abs(F.samples))), "full", F.samples.size)
    if F.is_zero:
        return LatticeSup(0.0, "full", 0)
    full = math.prod(g.Q * g.Q for g in F.grids)
    if full <= budget:
        return _strided_sup(F, 1, "full")
    stride = 2
    while math.prod(math.ceil(g.Q / stride) ** 2 for g in F.grids) > budget:
        stride *= 2
    if all(stride <= g.Q // 2 for g in F.grids):
        return _strided_sup(F, stride, "strided")
    return _sampled_sup(F, min(SAMPLED_POINTS, max(1, budget // (2 * F.n_modes))))


def _strided_sup(F: CanonicalSymbol, stride: int, method: str) -> LatticeSup:
    shape = tuple(size for g in F.grids for size in (len(range(0, g.Q, stride)),) * 2)
    acc = CompensatedSum(shape)
    for term in F.terms:
        acc.add(term.prefactor * _outer([f.samples[::stride, ::stride] for f in term.factors]))
    total = acc.total
    return LatticeSup(float(np.max(np.abs(total))), method, total.size)


def _sampled_sup(F: CanonicalSymbol, count: int) -> LatticeSup:
    rng = np.random.default_rng(SAMPLE_SEED)
    picks = [(rng.integers(0, g.Q, count), rng.integers(0, g.Q, count)) for g in F.grids]
    acc = CompensatedSum((count,))
    for term in F.terms:
        value = np.full(count, term.prefactor, dtype=complex)
        for f, (i, k) in zip(term.factors, picks):
            value = value * f.samples[i, k]
        acc.add(value)
    logger.info("Lattice sup sampled n=%s points=%s terms=%s", F.n_modes, count, len(F.terms))
    return LatticeSup(float(np.max(np.abs(acc.total))), "sampled", count)


def _tensor_sup(F: TensorSymbol) -> float:
    if F.is_zero:
        return 0.0
    cache: Dict[int, float] = {}
    value = abs(F.prefactor)
    for f in F.factors:
        if id(f) not in cache:
            cache[id(f)] = f.sup_norm()
        value *= cache[id(f)]
    return value


def log_sup_norm(F: TensorSymbol) -> float:
    if F.is_zero:
        return float("-inf")
    cache: Dict[int, float] = {}
    total = math.log(abs(F.prefactor))
    for f in F.factors:
        key = id(f)
        if key not in cache:
            cache[key] = math.log(f.sup_norm())
        total += cache[key]
    return total


def sup_norm(F: Symbol, budget: int = DEFAULT_LATTICE_BUDGET) -> float:
    return lattice_sup(F, budget).value


def coefficient_l1(F: Symbol) -> float:
    """Upper bound sup|F| <= sum |coefficients| (exact cancellation for small sums)."""
    if isinstance(F, TensorSymbol):
        return abs(F.prefactor) * math.prod(f.l1_coefficients() for f in F.factors)
    if isinstance(F, DenseSymbol):
        return abs(F.prefactor) * float(np.sum(np.abs(F.coeffs)))
    if F.is_zero:
        return 0.0
    extents = []
    for j in range(F.n_modes):
        per_term = [t.factors[j].support_extent() for t in F.terms]
        extents.append((max(e[0] for e in per_term), max(e[1] for e in per_term)))
    entries = math.prod((2 * ep + 1) * (2 * eq + 1) for ep, eq in extents)
    if entries > DENSE_MAX_ENTRIES:
        return float(sum(coefficient_l1(t) for t in F.terms))
    shape = tuple(2 * e + 1 for pair in extents for e in pair)
    acc = CompensatedSum(shape)
    for term in F.terms:
        crops = [
            f.coeffs[_support_box(f.coeffs, extents[j])] for j, f in enumerate(term.factors)
        ]
        acc.add(term.prefactor * _outer(crops))
    return float(np.sum(np.abs(acc.total)))


def telescoping_bound(composed: Sequence[float], products: Sequence[float], differences: Sequence[float]) -> float:
    """Bound on sup|prod s_j - prod p_j| from per-mode sup-norms."""
    n = len(composed)
    total = 0.0
    for j in range(n):
        left = math.prod(composed[:j])
        right = math.prod(products[j + 1:])
        total += differences[j] * left * right
    return total


@dataclass(frozen=True)
class SymbolClassSpec:
    """The class S_m(M, ρ, δ): per-coordinate derivative order m with weights ρ, δ."""

    m: int
    M: float
    rho: Tuple[float, ...]
    delta: Tuple[float, ...]

    def __post_init__(self) -> None:
        rho = tuple(float(r) for r in self.rho)
        delta = tuple(float(d) for d in self.delta)
        if int(self.m) != self.m or self.m < 0:
            raise InvalidParameterError(f"class order must be a non-negative integer, got {self.m}")
        if not math.isfinite(self.M) or self.M < 0:
            raise InvalidParameterError(f"class constant must be non-negative, got {self.M}")
        if len(rho) != len(delta) or not rho:
            raise InvalidParameterError("rho and delta must have the same positive length")
        if any(not math.isfinite(v) or v < 0 for v in rho + delta):
            raise InvalidParameterError("rho and delta entries must be finite and non-negative")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "M", float(self.M))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "delta", delta)

    @property
    def n_modes(self) -> int:
        return len(self.rho)

    def weight(self, alpha: Sequence[int], beta: Sequence[int]) -> float:
        return math.prod(r ** a for r, a in zip(self.rho, alpha)) * math.prod(
            d ** b for d, b in zip(self.delta, beta)
        )

    def replicate(self, n: int) -> "SymbolClassSpec":
        if self.n_modes != 1:
            raise InvalidParameterError("only single-mode classes can be replicated")
        return SymbolClassSpec(self.m, self.M ** n, self.rho * n, self.delta * n)

    def with_constant(self, M: float) -> "SymbolClassSpec":
        return SymbolClassSpec(self.m, M, self.rho, self.delta)

    def to_dict(self) -> Dict[str, object]:
        return {"m": self.m, "M": self.M, "rho": list(self.rho), "delta": list(self.delta)}


def _ratio(sup: float, weight: float) -> float:
    if weight == 0.0:
        return 0.0 if sup == 0.0 else float("inf")
    return sup / weight


class ClassNorms(Mapping):
    """Derivative sup-estimates keyed by (alpha, beta), alpha_j, beta_j <= m.

    Tensor symbols keep one (m+1) x (m+1) table per mode and evaluate products
    lazily; other forms hold the full table.
    """

    def __init__(
        self,
        n: int,
        m: int,
        mode_tables: Optional[Sequence[np.ndarray]] = None,
        prefactor: float = 1.0,
        table: Optional[Dict[MultiIndex, float]] = None,
        method: str = "factorized",
    ) -> None:
        self.n = n
        self.m = m
        self.mode_tables = tuple(mode_tables) if mode_tables is not None else None
        self.prefactor = float(prefactor)
        self._table = table
        self.method = method

    @property
    def factorized(self) -> bool:
        return self.mode_tables is not None

    def __getitem__(self, key: MultiIndex) -> float:
        alpha, beta = key
        if len(alpha) != self.n or len(beta) != self.n:
            raise KeyError(key)
        if any(a > self.m or b > self.m or a < 0 or b < 0 for a, b in zip(alpha, beta)):
            raise KeyError(key)
        if self._table is not None:
            return self._table[(tuple(alpha), tuple(beta))]
        value = self.prefactor
        for table, a, b in zip(self.mode_tables, alpha, beta):
            value *= float(table[a, b])
        return value

    def __iter__(self) -> Iterator[MultiIndex]:
        orders = range(self.m + 1)
        for alpha in itertools.product(orders, repeat=self.n):
            for beta in itertools.product(orders, repeat=self.n):
                yield alpha, beta

    def __len__(self) -> int:
        return (self.m + 1) ** (2 * self.n)

    def minimal_M(self, rho: Sequence[float], delta: Sequence[float]) -> float:
        if self._table is not None:
            spec_weight = lambda a, b: math.prod(r ** x for r, x in zip(rho, a)) * math.prod(  # noqa: E731
                d ** y for d, y in zip(delta, b)
            )
            return max((_ratio(v, spec_weight(a, b)) for (a, b), v in self._table.items()), default=0.0)
        best = self._mode_best(rho, delta)
        if self.prefactor == 0.0 or any(value == 0.0 for value, _ in best):
            return 0.0
        return self.prefactor * math.prod(value for value, _ in best)

    def _mode_best(self, rho: Sequence[float], delta: Sequence[float]) -> List[Tuple[float, Tuple[int, int]]]:
        best = []
        for table, r, d in zip(self.mode_tables, rho, delta):
            top, where = -1.0, (0, 0)
            for a in range(self.m + 1):
                for b in range(self.m + 1):
                    value = _ratio(float(table[a, b]), (r ** a) * (d ** b))
                    if value > top:
                        top, where = value, (a, b)
            best.append((top, where))
        return best

    def argmax(self, rho: Sequence[float], delta: Sequence[float]) -> MultiIndex:
        if self._table is not None:
            spec = SymbolClassSpec(self.m, 0.0, tuple(rho), tuple(delta))
            return max(self._table, key=lambda k: _ratio(self._table[k], spec.weight(*k)))
        best = self._mode_best(rho, delta)
        return tuple(w[0] for _, w in best), tuple(w[1] for _, w in best)

    def first_violation(self, spec: SymbolClassSpec, slack: float = CERTIFY_SLACK) -> Optional[MultiIndex]:
        if len(self) <= ENUMERATION_CAP:
            for key in self:
                if self[key] > spec.M * spec.weight(*key) + slack:
                    return key
            return None
        if self.minimal_M(spec.rho, spec.delta) <= spec.M:
            return None
        key = self.argmax(spec.rho, spec.delta)
        if self[key] > spec.M * spec.weight(*key) + slack:
            return key
        return None

    def to_dict(self) -> Dict[str, float]:
        if len(self) > ENUMERATION_CAP:
            return {}
        return {f"{list(a)}|{list(b)}": self[(a, b)] for a, b in self}


@dataclass(frozen=True)
class ClassCertificate:
    spec: SymbolClassSpec
    witnessed_sups: ClassNorms = field(repr=False)
    minimal_M: float
    passed: bool
    violation: Optional[MultiIndex] = None
    violation_sup: Optional[float] = None
    violation_bound: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "spec": self.spec.to_dict(),
            "minimal_M": self.minimal_M,
            "pass": self.passed,
            "violation": None if self.violation is None else [list(self.violation[0]), list(self.violation[1])],
            "violation_sup": self.violation_sup,
            "violation_bound": self.violation_bound,
            "norm_method": self.witnessed_sups.method,
        }


def derivative_table(f: ModeFunction, m: int, refine: int = 1) -> np.ndarray:
    """table[a, b] = lattice sup of ∂_x^a ∂_ξ^b f for a, b <= m."""
    table = np.zeros((m + 1, m + 1))
    for a in range(m + 1):
        for b in range(m + 1):
            table[a, b] = pg.derivative(f, a, b).sup_norm(refine)
    return table


def class_norms(F: Symbol, m: int, budget: int = DEFAULT_LATTICE_BUDGET) -> ClassNorms:
    if int(m) != m or m < 0 or m > MAX_CLASS_ORDER:
        raise InvalidParameterError(f"class order must be in 0..{MAX_CLASS_ORDER}, got {m}")
    if isinstance(F, TensorSymbol):
        cache: Dict[int, np.ndarray] = {}
        tables = []
        for f in F.factors:
            if id(f) not in cache:
                cache[id(f)] = derivative_table(f, m)
            tables.append(cache[id(f)])
        return ClassNorms(F.n_modes, m, mode_tables=tables, prefactor=abs(F.prefactor))
    n = F.n_modes
    orders = range(m + 1)
    table: Dict[MultiIndex, float] = {}
    method = "full"
    for alpha in itertools.product(orders, repeat=n):
        for beta in itertools.product(orders, repeat=n):
            result = lattice_sup(derivative(F, alpha, beta), budget)
            table[(alpha, beta)] = result.value
            method = result.method
    return ClassNorms(n, m, table=table, method=method)


def certify_class(
    F: Symbol,
    spec: SymbolClassSpec,
    slack: float = CERTIFY_SLACK,
    budget: int = DEFAULT_LATTICE_BUDGET,
) -> ClassCertificate:
    if spec.n_modes != F.n_modes:
        raise ModeMismatchError(f"class spec has {spec.n_modes} modes, symbol has {F.n_modes}")
    norms = class_norms(F, spec.m, budget)
    minimal = norms.minimal_M(spec.rho, spec.delta)
    violation = norms.first_violation(spec, slack)
    if violation is None:
        return ClassCertificate(spec, norms, minimal, True)
    sup = norms[violation]
    bound = spec.M * spec.weight(*violation)
    logger.warning(
        "Class certification failed alpha=%s beta=%s sup=%.6g bound=%.6g",
        list(violation[0]),
        list(violation[1]),
        sup,
        bound,
    )
    return ClassCertificate(spec, norms, minimal, False, violation, sup, bound)
