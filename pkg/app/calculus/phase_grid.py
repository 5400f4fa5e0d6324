from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import (
    AliasingError,
    BandLimitError,
    DilationError,
    InvalidDiscretizationError,
    InvalidParameterError,
    ModeMismatchError,
)
from app.core.logging import logger

COEFF_CLEAN_RTOL = 1e-15
DILATION_TOL = 1e-9
LATTICE_TOL = 1e-9

_AXES = {"x": 0, "xi": 1, "ξ": 1}


@dataclass(frozen=True)
class Grid2D:
    """Periodic lattice on [-L, L)^2 for one (x, ξ) mode."""

    L: float
    Q: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.L) or self.L <= 0:
            raise InvalidDiscretizationError(f"half width must be positive, got L={self.L}")
        if int(self.Q) != self.Q or self.Q < 4 or self.Q % 2:
            raise InvalidDiscretizationError(f"points per axis must be an even integer >= 4, got Q={self.Q}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "Q", int(self.Q))

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.Q

    @property
    def wavenumber(self) -> float:
        return math.pi / self.L

    @property
    def half(self) -> int:
        return self.Q // 2

    def axis(self, refine: int = 1) -> np.ndarray:
        count = self.Q * refine
        return -self.L + (2.0 * self.L / count) * np.arange(count)

    def frequencies(self) -> np.ndarray:
        return np.arange(-self.half, self.half)

    def wavenumbers(self) -> np.ndarray:
        return self.frequencies() * self.wavenumber

    def squared_wavenumbers(self) -> np.ndarray:
        k = self.wavenumbers()
        return k[:, None] ** 2 + k[None, :] ** 2

    @property
    def cell_measure(self) -> float:
        return (2.0 * self.L) ** 2


def make_grid(L: float, Q: int) -> Grid2D:
    try:
        return Grid2D(float(L), int(Q) if float(Q).is_integer() else Q)
    except (TypeError, ValueError) as exc:
        raise InvalidDiscretizationError(f"invalid grid parameters L={L!r} Q={Q!r}") from exc


def _alternating(shape: Sequence[int]) -> np.ndarray:
    sign = np.ones(shape)
    for axis, size in enumerate(shape):
        vec = np.where((np.arange(size) - size // 2) % 2 == 0, 1.0, -1.0)
        view = [1] * len(shape)
        view[axis] = size
        sign = sign * vec.reshape(view)
    return sign


def coeffs_to_samples(coeffs: np.ndarray) -> np.ndarray:
    """Centered coefficient array to samples at x_i = -L + i*spacing on every axis."""
    shifted = np.fft.ifftshift(coeffs * _alternating(coeffs.shape))
    return np.fft.ifftn(shifted) * coeffs.size


def samples_to_coeffs(samples: np.ndarray) -> np.ndarray:
    coeffs = np.fft.fftshift(np.fft.fftn(samples)) / samples.size
    return coeffs * _alternating(samples.shape)


def clean_coefficients(coeffs: np.ndarray, rtol: float = COEFF_CLEAN_RTOL) -> np.ndarray:
    out = np.array(coeffs, dtype=complex)
    scale = float(np.max(np.abs(out))) if out.size else 0.0
    if scale > 0.0:
        out[np.abs(out) <= rtol * scale] = 0.0
    return out


def nyquist_amplitude(coeffs: np.ndarray) -> float:
    worst = 0.0
    for axis in range(coeffs.ndim):
        edge = np.take(coeffs, 0, axis=axis)
        if edge.size:
            worst = max(worst, float(np.max(np.abs(edge))))
    return worst


def support_extent(coeffs: np.ndarray) -> Tuple[int, ...]:
    """Largest |frequency| carrying amplitude, per axis."""
    nz = np.argwhere(coeffs != 0)
    if nz.size == 0:
        return tuple(0 for _ in coeffs.shape)
    centers = np.array([size // 2 for size in coeffs.shape])
    return tuple(int(v) for v in np.max(np.abs(nz - centers), axis=0))


def check_product_band(
    left: Sequence[int], right: Sequence[int], shape: Sequence[int], what: str = "product"
) -> None:
    for axis, (a, b, size) in enumerate(zip(left, right, shape)):
        if a + b >= size // 2:
            raise AliasingError(
                f"{what} escapes the band on axis {axis}: extents {a}+{b} >= {size // 2}"
            )


class CompensatedSum:
    """Neumaier accumulation over equally shaped complex arrays."""

    def __init__(self, shape: Sequence[int]) -> None:
        self._parts = [np.zeros(shape), np.zeros(shape)]
        self._comps = [np.zeros(shape), np.zeros(shape)]

    def add(self, value: np.ndarray, index: Optional[Tuple[slice, ...]] = None) -> None:
        value = np.asarray(value)
        region = index if index is not None else tuple(slice(None) for _ in self._parts[0].shape)
        for k, part in enumerate((value.real, value.imag)):
            s = self._parts[k][region]
            t = s + part
            big = np.abs(s) >= np.abs(part)
            self._comps[k][region] += np.where(big, (s - t) + part, (part - t) + s)
            self._parts[k][region] = t

    @property
    def total(self) -> np.ndarray:
        return (self._parts[0] + self._comps[0]) + 1j * (self._parts[1] + self._comps[1])


@dataclass(frozen=True, eq=False)
class ModeFunction:
    """Band-limited trigonometric polynomial on one mode.

    Coefficients are stored centered: ``coeffs[p + Q/2, q + Q/2]`` multiplies
    ``exp(i (p x + q ξ) π / L)``. ``representation`` records how the value was
    supplied; both views are always available.
    """

    grid: Grid2D
    coeffs: np.ndarray
    representation: str = "coefficients"

    def __post_init__(self) -> None:
        arr = clean_coefficients(self.coeffs)
        if arr.shape != (self.grid.Q, self.grid.Q):
            raise InvalidDiscretizationError(
                f"coefficient array shape {arr.shape} does not match grid Q={self.grid.Q}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("mode function has non-finite coefficients")
        if nyquist_amplitude(arr) > 0.0:
            raise BandLimitError("amplitude on the Nyquist boundary frequencies")
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def from_samples(cls, grid: Grid2D, samples: np.ndarray, trim: float = COEFF_CLEAN_RTOL) -> "ModeFunction":
        values = np.asarray(samples, dtype=complex)
        if values.shape != (grid.Q, grid.Q):
            raise InvalidDiscretizationError(f"sample array shape {values.shape} does not match grid Q={grid.Q}")
        coeffs = clean_coefficients(samples_to_coeffs(values), rtol=max(trim, COEFF_CLEAN_RTOL))
        return cls(grid, coeffs, "samples")

    @classmethod
    def from_coefficients(cls, grid: Grid2D, terms: Mapping[Tuple[int, int], complex]) -> "ModeFunction":
        coeffs = np.zeros((grid.Q, grid.Q), dtype=complex)
        for (p, q), value in terms.items():
            if abs(p) >= grid.half or abs(q) >= grid.half:
                raise BandLimitError(f"frequency ({p}, {q}) outside the band of Q={grid.Q}")
            coeffs[p + grid.half, q + grid.half] += complex(value)
        return cls(grid, coeffs, "coefficients")

    @classmethod
    def from_callable(
        cls,
        grid: Grid2D,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        trim: float = COEFF_CLEAN_RTOL,
    ) -> "ModeFunction":
        x = grid.axis()
        xx, kk = np.meshgrid(x, x, indexing="ij")
        return cls.from_samples(grid, np.asarray(fn(xx, kk), dtype=complex), trim=trim)

    @classmethod
    def constant(cls, grid: Grid2D, value: complex = 1.0) -> "ModeFunction":
        return cls.from_coefficients(grid, {(0, 0): value})

    @classmethod
    def plane_wave(cls, grid: Grid2D, p: int, q: int, amplitude: complex = 1.0) -> "ModeFunction":
        return cls.from_coefficients(grid, {(p, q): amplitude})

    @cached_property
    def samples(self) -> np.ndarray:
        values = coeffs_to_samples(self.coeffs)
        values.setflags(write=False)
        return values

    def with_coeffs(self, coeffs: np.ndarray) -> "ModeFunction":
        return ModeFunction(self.grid, coeffs)

    def terms(self) -> Dict[Tuple[int, int], complex]:
        half = self.grid.half
        return {
            (int(i) - half, int(j) - half): complex(self.coeffs[i, j])
            for i, j in np.argwhere(self.coeffs != 0)
        }

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.coeffs))

    def support_extent(self) -> Tuple[int, int]:
        p, q = support_extent(self.coeffs)
        return p, q

    def is_constant(self) -> bool:
        return self.support_extent() == (0, 0)

    def is_real(self, tol: float = 1e-13) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.coeffs))))
        return float(np.max(np.abs(self.coeffs - self.conj().coeffs))) <= tol * scale

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        x, xi = np.broadcast_arrays(x, xi)
        k = self.grid.wavenumbers()
        ex = np.exp(1j * np.multiply.outer(x.ravel(), k))
        eq = np.exp(1j * np.multiply.outer(xi.ravel(), k))
        values = np.einsum("mp,pq,mq->m", ex, self.coeffs, eq)
        return values.reshape(x.shape)

    def refined_samples(self, refine: int) -> np.ndarray:
        size = self.grid.Q * refine
        padded = np.zeros((size, size), dtype=complex)
        start = (size - self.grid.Q) // 2
        padded[start:start + self.grid.Q, start:start + self.grid.Q] = self.coeffs
        return coeffs_to_samples(padded)

    def sup_norm(self, refine: int = 1) -> float:
        values = self.samples if refine == 1 else self.refined_samples(refine)
        return float(np.max(np.abs(values)))

    def l1_coefficients(self) -> float:
        return float(np.sum(np.abs(self.coeffs)))

    def conj(self) -> "ModeFunction":
        flipped = np.conj(self.coeffs[::-1, ::-1])
        return ModeFunction(self.grid, np.roll(flipped, 1, axis=(0, 1)))

    def scale(self, factor: complex) -> "ModeFunction":
        return ModeFunction(self.grid, self.coeffs * factor)

    def __add__(self, other: "ModeFunction") -> "ModeFunction":
        _require_same_grid(self, other)
        return ModeFunction(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "ModeFunction") -> "ModeFunction":
        _require_same_grid(self, other)
        return ModeFunction(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "ModeFunction":
        return self.scale(-1.0)


def _require_same_grid(a: ModeFunction, b: ModeFunction) -> None:
    if a.grid != b.grid:
        raise ModeMismatchError(f"grids differ: {a.grid} vs {b.grid}")


def sum_modes(functions: Iterable[ModeFunction], grid: Optional[Grid2D] = None) -> ModeFunction:
    items = list(functions)
    if not items:
        if grid is None:
            raise InvalidParameterError("empty sum needs a grid")
        return ModeFunction.constant(grid, 0.0)
    acc = CompensatedSum(items[0].coeffs.shape)
    for item in items:
        _require_same_grid(items[0], item)
        acc.add(item.coeffs)
    return ModeFunction(items[0].grid, acc.total)


def fourier_multiplier(f: ModeFunction, multiplier: np.ndarray) -> ModeFunction:
    return ModeFunction(f.grid, f.coeffs * multiplier)


def derivative(f: ModeFunction, x_order: int = 0, xi_order: int = 0) -> ModeFunction:
    if x_order < 0 or xi_order < 0:
        raise InvalidParameterError("derivative orders must be non-negative")
    if x_order == 0 and xi_order == 0:
        return f
    k = f.grid.wavenumbers()
    mx = (1j * k) ** x_order
    mq = (1j * k) ** xi_order
    return fourier_multiplier(f, np.multiply.outer(mx, mq))


def spectral_derivative(f: ModeFunction, axis: str, order: int) -> ModeFunction:
    if axis not in _AXES:
        raise InvalidParameterError(f"axis must be one of x, xi, got {axis!r}")
    if order < 0:
        raise InvalidParameterError("derivative order must be non-negative")
    if _AXES[axis] == 0:
        return derivative(f, order, 0)
    return derivative(f, 0, order)


def heat_multiplier(grid: Grid2D, t: float) -> np.ndarray:
    if t < 0 or not math.isfinite(t):
        raise InvalidParameterError(f"heat time must be a finite non-negative number, got {t}")
    return np.exp(-t * grid.squared_wavenumbers())


def heat_semigroup(f: ModeFunction, t: float) -> ModeFunction:
    multiplier = heat_multiplier(f.grid, t)
    if t == 0:
        return f
    return fourier_multiplier(f, multiplier)


def multiply(f: ModeFunction, g: ModeFunction) -> ModeFunction:
    """Pointwise product through one 2Q zero-padding level."""
    _require_same_grid(f, g)
    if f.is_zero or g.is_zero:
        return ModeFunction.constant(f.grid, 0.0)
    if f.is_constant():
        return g.scale(f.coeffs[f.grid.half, f.grid.half])
    if g.is_constant():
        return f.scale(g.coeffs[g.grid.half, g.grid.half])
    check_product_band(f.support_extent(), g.support_extent(), f.coeffs.shape)
    Q = f.grid.Q
    padded = 2 * Q
    start = (padded - Q) // 2

    def _pad(c: np.ndarray) -> np.ndarray:
        out = np.zeros((padded, padded), dtype=complex)
        out[start:start + Q, start:start + Q] = c
        return out

    product = coeffs_to_samples(_pad(f.coeffs)) * coeffs_to_samples(_pad(g.coeffs))
    coeffs = samples_to_coeffs(product)[start:start + Q, start:start + Q]
    return ModeFunction(f.grid, coeffs)


@dataclass(frozen=True)
class DilationWeights:
    values: Tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise InvalidParameterError("dilation needs at least one weight")
        for v in vals:
            if not math.isfinite(v) or v <= 0:
                raise InvalidParameterError(f"dilation weights must be positive and finite, got {v}")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def inverse(self) -> "DilationWeights":
        return DilationWeights(tuple(1.0 / v for v in self.values))

    @classmethod
    def symmetrizing(cls, rho: Sequence[float], delta: Sequence[float]) -> "DilationWeights":
        """Weights sqrt(δ_j/ρ_j) that map S(M, ρ, δ) to S(M, ε, ε)."""
        if len(rho) != len(delta):
            raise InvalidParameterError(f"rho and delta differ in length: {len(rho)} vs {len(delta)}")
        for r, d in zip(rho, delta):
            if not (math.isfinite(r) and r > 0 and math.isfinite(d) and d > 0):
                raise InvalidParameterError(f"class widths must be positive and finite, got rho={r}, delta={d}")
        return cls(tuple(math.sqrt(d / r) for r, d in zip(rho, delta)))


def _lattice_image(values: np.ndarray, factor: float) -> Optional[np.ndarray]:
    image = values * factor
    rounded = np.rint(image)
    if np.all(np.abs(image - rounded) <= LATTICE_TOL):
        return rounded.astype(int)
    return None


def dilate_mode(f: ModeFunction, lam: float) -> ModeFunction:
    """(δ_λ f)(x, ξ) = f(λx, ξ/λ)."""
    if not math.isfinite(lam) or lam <= 0:
        raise InvalidParameterError(f"dilation weight must be positive, got {lam}")
    if lam == 1.0:
        return f
    half = f.grid.half
    nz = np.argwhere(f.coeffs != 0)
    if nz.size == 0:
        return f
    ps = _lattice_image(nz[:, 0] - half, lam)
    qs = _lattice_image(nz[:, 1] - half, 1.0 / lam)
    if ps is not None and qs is not None:
        if np.any(np.abs(ps) >= half) or np.any(np.abs(qs) >= half):
            raise BandLimitError(f"dilation by {lam} moves frequencies out of the band")
        coeffs = np.zeros_like(f.coeffs)
        for (i, j), p, q in zip(nz, ps, qs):
            coeffs[p + half, q + half] += f.coeffs[i, j]
        return ModeFunction(f.grid, coeffs)
    return _resampled_dilation(f, lam)


def _resampled_dilation(f: ModeFunction, lam: float) -> ModeFunction:
    target = lambda x, xi: f.evaluate(lam * x, xi / lam)  # noqa: E731
    try:
        resampled = ModeFunction.from_callable(f.grid, target)
    except BandLimitError as exc:
        raise DilationError(f"dilation by {lam} is not representable on the grid") from exc
    shift = 0.5 * f.grid.spacing
    probe = f.grid.axis() + shift
    xx, kk = np.meshgrid(probe, probe, indexing="ij")
    error = float(np.max(np.abs(resampled.evaluate(xx, kk) - target(xx, kk))))
    if error > DILATION_TOL:
        raise DilationError(f"resampled dilation by {lam} has interpolation error {error:.3e}")
    logger.info("Dilation resampled lam=%s interpolation_error=%.3e", lam, error)
    return resampled


def dilate(F, weights: DilationWeights):
    """Apply δ_λ to a mode function or to any symbol exposing ``map_modes``."""
    if isinstance(F, ModeFunction):
        if len(weights) != 1:
            raise ModeMismatchError("a single mode function needs exactly one dilation weight")
        return dilate_mode(F, weights.values[0])
    n = getattr(F, "n_modes", None)
    if n is None or not hasattr(F, "map_modes"):
        raise DilationError(f"dilation is defined for tensor and canonical symbols, got {type(F).__name__}")
    if n != len(weights):
        raise ModeMismatchError(f"{len(weights)} dilation weights for {n} modes")
    return F.map_modes(lambda j, f: dilate_mode(f, weights.values[j]))
