from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from app.core.errors import InvalidParameterError, QuadratureError
from app.core.logging import logger

MAX_BASIS = 128
NORMALIZATION_TOL = 1e-10
DEFAULT_POINTS = 2048
BULK_FRACTION = 0.75


def hermite_functions(u: np.ndarray, K: int, h: float) -> np.ndarray:
    """h-scaled Hermite functions φ_0..φ_{K-1} at ``u``; shape (K, len(u)).

    φ_k is the k-th eigenfunction of -h^2 d^2/du^2 + u^2, normalized in L^2.
    """
    if K < 1:
        raise InvalidParameterError("basis size must be positive")
    if h <= 0:
        raise InvalidParameterError("h must be positive")
    s = np.asarray(u, dtype=float) / math.sqrt(h)
    out = np.zeros((K,) + s.shape)
    out[0] = (math.pi * h) ** -0.25 * np.exp(-0.5 * s * s)
    if K > 1:
        out[1] = math.sqrt(2.0) * s * out[0]
    for k in range(1, K - 1):
        out[k + 1] = math.sqrt(2.0 / (k + 1)) * s * out[k] - math.sqrt(k / (k + 1)) * out[k - 1]
    return out


@dataclass(frozen=True)
class HermiteBasis:
    """Uniform real-line grid carrying the first K Hermite functions."""

    h: float
    K: int
    L_u: float
    Q_u: int = DEFAULT_POINTS

    def __post_init__(self) -> None:
        if not 1 <= self.K <= MAX_BASIS:
            raise InvalidParameterError(f"basis size must be in 1..{MAX_BASIS}, got {self.K}")
        if self.h <= 0 or self.L_u <= 0 or self.Q_u < 16:
            raise InvalidParameterError("invalid Hermite basis grid")

    @classmethod
    def default(cls, h: float, K: int, Q_u: int = DEFAULT_POINTS) -> "HermiteBasis":
        return cls(h, K, 12.0 * math.sqrt(h * K), Q_u)

    @property
    def spacing(self) -> float:
        return 2.0 * self.L_u / self.Q_u

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L_u + self.spacing * np.arange(self.Q_u)

    @cached_property
    def values(self) -> np.ndarray:
        return hermite_functions(self.nodes, self.K + 1, self.h)

    @property
    def functions(self) -> np.ndarray:
        return self.values[: self.K]

    def first_derivatives(self) -> np.ndarray:
        vals = self.values
        out = np.zeros((self.K, self.Q_u))
        for k in range(self.K):
            lower = math.sqrt(k / 2.0) * vals[k - 1] if k > 0 else 0.0
            out[k] = (lower - math.sqrt((k + 1) / 2.0) * vals[k + 1]) / math.sqrt(self.h)
        return out

    def second_derivatives(self) -> np.ndarray:
        u = self.nodes
        orders = np.arange(self.K)[:, None]
        return (u[None, :] ** 2 / self.h ** 2 - (2 * orders + 1) / self.h) * self.functions

    def gram(self) -> np.ndarray:
        phi = self.functions
        return (phi * self.spacing) @ phi.T

    def normalization_witness(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.K))))

    def check(self) -> float:
        witness = self.normalization_witness()
        if witness > NORMALIZATION_TOL:
            logger.warning("Hermite basis under-resolved h=%s K=%s witness=%.3e", self.h, self.K, witness)
            raise QuadratureError(
                f"Hermite normalization deviates by {witness:.3e} (> {NORMALIZATION_TOL}) on L_u={self.L_u}, Q_u={self.Q_u}"
            )
        return witness

    def project(self, wavefunction: np.ndarray) -> np.ndarray:
        """Coefficients <ψ, φ_k> of a wavefunction sampled on the nodes."""
        return (self.functions * self.spacing) @ np.asarray(wavefunction, dtype=complex)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """K x K matrix with entries[k, j] = <C φ_j, φ_k>."""

    entries: np.ndarray
    h: float
    witness: Optional[float] = None

    def __post_init__(self) -> None:
        arr = np.array(self.entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidParameterError(f"operator matrix must be square, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise QuadratureError("operator matrix has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def K(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def identity(cls, h: float, K: int) -> "OperatorMatrix":
        return cls(np.eye(K), h, 0.0)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.K != self.K:
            raise InvalidParameterError("operator matrices of different sizes")
        return OperatorMatrix(self.entries @ other.entries, self.h)

    def adjoint(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.h, self.witness)

    def bulk(self, fraction: float = BULK_FRACTION) -> np.ndarray:
        size = max(1, int(math.floor(fraction * self.K)))
        return self.entries[:size, :size]

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def spectral_norm(self) -> float:
        return float(np.linalg.norm(self.entries, ord=2))
