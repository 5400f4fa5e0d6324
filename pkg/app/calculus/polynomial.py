from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
from scipy.signal import convolve2d
from scipy.special import factorial

from app.core.errors import InvalidParameterError


@dataclass(frozen=True, eq=False)
class PolynomialSymbol:
    """Polynomial in one mode: ``coeffs[i, j]`` multiplies x^i ξ^j.

    Unbounded, so it never enters the symbol classes; it exists for exact
    finite Moyal products and convention checks.
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        arr = np.atleast_2d(np.array(self.coeffs, dtype=complex))
        if arr.ndim != 2:
            raise InvalidParameterError("polynomial coefficients must be a 2D array")
        arr = _trim(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @classmethod
    def from_terms(cls, terms: Dict[Tuple[int, int], complex]) -> "PolynomialSymbol":
        if not terms:
            return cls.constant(0.0)
        size_x = max(i for i, _ in terms) + 1
        size_xi = max(j for _, j in terms) + 1
        arr = np.zeros((size_x, size_xi), dtype=complex)
        for (i, j), value in terms.items():
            if i < 0 or j < 0:
                raise InvalidParameterError("monomial exponents must be non-negative")
            arr[i, j] += value
        return cls(arr)

    @classmethod
    def constant(cls, value: complex) -> "PolynomialSymbol":
        return cls(np.array([[value]], dtype=complex))

    @classmethod
    def x(cls) -> "PolynomialSymbol":
        return cls.from_terms({(1, 0): 1.0})

    @classmethod
    def xi(cls) -> "PolynomialSymbol":
        return cls.from_terms({(0, 1): 1.0})

    @property
    def degree(self) -> int:
        nz = np.argwhere(self.coeffs != 0)
        if nz.size == 0:
            return 0
        return int(np.max(nz.sum(axis=1)))

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def terms(self) -> Dict[Tuple[int, int], complex]:
        return {(int(i), int(j)): complex(self.coeffs[i, j]) for i, j in np.argwhere(self.coeffs != 0)}

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        out = np.zeros(x.shape, dtype=complex)
        for (i, j), c in self.terms().items():
            out = out + c * x ** i * xi ** j
        return out

    def __add__(self, other: "PolynomialSymbol") -> "PolynomialSymbol":
        shape = tuple(max(a, b) for a, b in zip(self.coeffs.shape, other.coeffs.shape))
        out = np.zeros(shape, dtype=complex)
        out[: self.coeffs.shape[0], : self.coeffs.shape[1]] += self.coeffs
        out[: other.coeffs.shape[0], : other.coeffs.shape[1]] += other.coeffs
        return PolynomialSymbol(out)

    def __sub__(self, other: "PolynomialSymbol") -> "PolynomialSymbol":
        return self + other.scale(-1.0)

    def scale(self, factor: complex) -> "PolynomialSymbol":
        return PolynomialSymbol(self.coeffs * factor)


def _trim(arr: np.ndarray) -> np.ndarray:
    nz = np.argwhere(arr != 0)
    if nz.size == 0:
        return np.zeros((1, 1), dtype=complex)
    return np.array(arr[: nz[:, 0].max() + 1, : nz[:, 1].max() + 1])


def _falling(top: np.ndarray, order: int) -> np.ndarray:
    return factorial(top + order, exact=False) / factorial(top, exact=False)


def poly_derivative(P: PolynomialSymbol, x_order: int = 0, xi_order: int = 0) -> PolynomialSymbol:
    if x_order < 0 or xi_order < 0:
        raise InvalidParameterError("derivative orders must be non-negative")
    rows, cols = P.coeffs.shape
    if x_order >= rows or xi_order >= cols:
        return PolynomialSymbol.constant(0.0)
    block = P.coeffs[x_order:, xi_order:]
    i = np.arange(block.shape[0])
    j = np.arange(block.shape[1])
    weights = np.multiply.outer(_falling(i, x_order), _falling(j, xi_order))
    return PolynomialSymbol(block * weights)


def poly_multiply(P: PolynomialSymbol, R: PolynomialSymbol) -> PolynomialSymbol:
    return PolynomialSymbol(convolve2d(P.coeffs, R.coeffs))


def moyal_term_poly(A: PolynomialSymbol, B: PolynomialSymbol, k: int, h: float) -> PolynomialSymbol:
    """Order-k term (h/2i)^k sum (-1)^b/(a! b!) [∂_x^b ∂_ξ^a A][∂_x^a ∂_ξ^b B]."""
    if k < 0:
        raise InvalidParameterError("expansion order must be non-negative")
    total = PolynomialSymbol.constant(0.0)
    for a in range(k + 1):
        b = k - a
        left = poly_derivative(A, b, a)
        right = poly_derivative(B, a, b)
        if left.is_zero or right.is_zero:
            continue
        weight = (-1.0) ** b / (float(factorial(a, exact=True)) * float(factorial(b, exact=True)))
        total = total + poly_multiply(left, right).scale(weight)
    return total.scale((-0.5j * h) ** k)


def moyal_product(A: PolynomialSymbol, B: PolynomialSymbol, h: float) -> PolynomialSymbol:
    """Exact Weyl product; the series stops once k exceeds both degrees."""
    total = PolynomialSymbol.constant(0.0)
    for k in range(min(A.degree, B.degree) + 1):
        total = total + moyal_term_poly(A, B, k, h)
    return total


def commutator(A: PolynomialSymbol, B: PolynomialSymbol, h: float) -> PolynomialSymbol:
    return moyal_product(A, B, h) - moyal_product(B, A, h)
