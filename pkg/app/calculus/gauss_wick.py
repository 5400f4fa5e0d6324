from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np

from app.calculus import phase_grid as pg
from app.calculus.hermite_basis import HermiteBasis, OperatorMatrix
from app.calculus.phase_grid import ModeFunction
from app.calculus.star_core import (
    HLike,
    QuadratureResult,
    QuadratureSpec,
    as_planck,
    symplectic_form,
    weyl_star_mode,
)
from app.core.errors import InvalidParameterError, QuadratureError, TruncationError
from app.core.logging import logger
from app.core.refinement import refine_until_stable

NORMALIZATION_TOL = 1e-10
IDENTITY_TOL = 1e-8
TAIL_TOL = 1e-12
DEFAULT_WAVE_POINTS = 2048
KERNEL_NODES = 96

Point = Tuple[float, float]


def _point(X: Sequence[float]) -> np.ndarray:
    arr = np.asarray(X, dtype=float).reshape(-1)
    if arr.shape != (2,):
        raise InvalidParameterError(f"phase-space point must be (x, ξ), got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class CoherentState:
    """Gaussian wave packet centred at (a, b), sampled on [-L_u, L_u)."""

    center: Point
    h: float
    L_u: Optional[float] = None
    Q_u: int = DEFAULT_WAVE_POINTS

    def __post_init__(self) -> None:
        a, b = _point(self.center)
        hv = as_planck(self.h).h
        object.__setattr__(self, "center", (float(a), float(b)))
        object.__setattr__(self, "h", hv)
        if self.L_u is None:
            object.__setattr__(self, "L_u", abs(a) + 10.0 * math.sqrt(hv))
        if self.L_u <= 0 or self.Q_u < 16:
            raise InvalidParameterError("invalid wavefunction grid")

    @property
    def spacing(self) -> float:
        return 2.0 * self.L_u / self.Q_u

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L_u + self.spacing * np.arange(self.Q_u)

    def wavefunction(self, u: np.ndarray) -> np.ndarray:
        return coherent_wavefunction(self.center, self.h, u)

    @cached_property
    def samples(self) -> np.ndarray:
        values = self.wavefunction(self.nodes)
        values.setflags(write=False)
        return values

    def norm_witness(self) -> float:
        return abs(float(np.sum(np.abs(self.samples) ** 2) * self.spacing) - 1.0)

    def check(self) -> float:
        witness = self.norm_witness()
        if witness > NORMALIZATION_TOL:
            raise QuadratureError(f"coherent state norm deviates by {witness:.3e} on L_u={self.L_u}")
        return witness


def coherent_wavefunction(X: Sequence[float], h: HLike, u: np.ndarray) -> np.ndarray:
    a, b = _point(X)
    hv = as_planck(h).h
    u = np.asarray(u, dtype=float)
    return (math.pi * hv) ** -0.25 * np.exp(-((u - a) ** 2) / (2 * hv) + 1j * (u * b - 0.5 * a * b) / hv)


def coherent_overlap(X: Sequence[float], Y: Sequence[float], h: HLike) -> complex:
    """<Ψ_X, Ψ_Y> = exp(-|X-Y|^2/4h) exp(i σ(X,Y)/2h)."""
    x, y = _point(X), _point(Y)
    hv = as_planck(h).h
    dist2 = float(np.sum((x - y) ** 2))
    phase = float(symplectic_form(x, y))
    return complex(np.exp(-dist2 / (4 * hv) + 0.5j * phase / hv))


def numerical_overlap(X: Sequence[float], Y: Sequence[float], h: HLike, Q_u: int = DEFAULT_WAVE_POINTS) -> complex:
    """Rectangle-rule inner product of two sampled coherent states."""
    x, y = _point(X), _point(Y)
    hv = as_planck(h).h
    L_u = max(abs(x[0]), abs(y[0])) + 10.0 * math.sqrt(hv)
    left = CoherentState(tuple(x), hv, L_u, Q_u)
    right = CoherentState(tuple(y), hv, L_u, Q_u)
    left.check()
    right.check()
    return complex(np.sum(left.samples * np.conj(right.samples)) * left.spacing)


def coherent_coefficients(X: Sequence[float], h: HLike, K: int) -> np.ndarray:
    """c_k = <Ψ_X, φ_k>, k < K: exp(-|z|^2/2) z^k / sqrt(k!), z = (a + i b)/sqrt(2h)."""
    a, b = _point(X)
    hv = as_planck(h).h
    if K < 1:
        raise InvalidParameterError("basis size must be positive")
    z = (a + 1j * b) / math.sqrt(2 * hv)
    out = np.empty(K, dtype=complex)
    out[0] = math.exp(-0.5 * abs(z) ** 2)
    for k in range(K - 1):
        out[k + 1] = out[k] * z / math.sqrt(k + 1)
    return out


def coherent_coefficients_grid(xs: np.ndarray, ks: np.ndarray, h: float, K: int) -> np.ndarray:
    """Coefficients for every point of a flattened lattice; shape (K, P)."""
    z = (np.asarray(xs, dtype=float) + 1j * np.asarray(ks, dtype=float)) / math.sqrt(2 * h)
    out = np.empty((K,) + z.shape, dtype=complex)
    out[0] = np.exp(-0.5 * np.abs(z) ** 2)
    for k in range(K - 1):
        out[k + 1] = out[k] * z / math.sqrt(k + 1)
    return out


def projected_coherent_coefficients(X: Sequence[float], basis: HermiteBasis) -> np.ndarray:
    state = CoherentState(tuple(_point(X)), basis.h, basis.L_u, basis.Q_u)
    return basis.project(state.samples)


def default_anti_wick_quadrature(h: float, K: int) -> QuadratureSpec:
    R = math.sqrt(2 * h) * (math.sqrt(K) + 8.0)
    nodes = int(math.ceil(2 * R / (0.25 * math.sqrt(h)))) + 1
    return QuadratureSpec(R, nodes, "trapezoid")


def _evaluate_symbol(A, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    if hasattr(A, "evaluate"):
        return np.asarray(A.evaluate(x, xi), dtype=complex)
    if callable(A):
        return np.asarray(A(x, xi), dtype=complex) * np.ones(np.shape(x))
    return np.full(np.shape(x), complex(A))


@dataclass(frozen=True)
class _AntiWickAssembly:
    matrix: np.ndarray
    identity_residual: float


def _assemble_anti_wick(A, h: float, K: int, quad: QuadratureSpec) -> _AntiWickAssembly:
    t, w = quad.nodes_weights()
    xx, kk = np.meshgrid(t, t, indexing="ij")
    weights = np.multiply.outer(w, w).ravel() / (2 * math.pi * h)
    coeffs = coherent_coefficients_grid(xx.ravel(), kk.ravel(), h, K)
    values = _evaluate_symbol(A, xx, kk).ravel()
    # entries[k, j] = (2πh)^{-1} ∫ A conj(c_j) c_k dX
    matrix = (coeffs * (weights * values)) @ np.conj(coeffs).T
    identity = (coeffs * weights) @ np.conj(coeffs).T
    residual = float(np.max(np.abs(identity - np.eye(K))))
    return _AntiWickAssembly(matrix, residual)


def anti_wick_matrix(A, h: HLike, K: int, quad: Optional[QuadratureSpec] = None) -> OperatorMatrix:
    """Anti-Wick quantization of A in the h-scaled Hermite basis.

    ``A`` is a mode function, any object exposing ``evaluate(x, xi)``, a
    callable or a constant. Coverage is witnessed by assembling the A = 1
    matrix on the same nodes.
    """
    hp = as_planck(h)
    if not 1 <= K <= 128:
        raise InvalidParameterError(f"basis size must be in 1..128, got {K}")
    quad = quad or default_anti_wick_quadrature(hp.h, K)
    assembly = _assemble_anti_wick(A, hp.h, K, quad)
    if assembly.identity_residual > IDENTITY_TOL:
        logger.warning(
            "Anti-Wick coverage failed h=%s K=%s R=%.3f nodes=%s residual=%.3e",
            hp.h,
            K,
            quad.R,
            quad.nodes,
            assembly.identity_residual,
        )
        raise QuadratureError(
            f"coherent states do not resolve the identity on the quadrature box (residual {assembly.identity_residual:.3e})"
        )
    return OperatorMatrix(assembly.matrix, hp.h, assembly.identity_residual)


@dataclass(frozen=True)
class NormWitness:
    spectral_norm: float
    sup_norm: float
    slack: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "spectral_norm": self.spectral_norm,
            "sup_norm": self.sup_norm,
            "slack": self.slack,
            "pass": self.passed,
        }


def anti_wick_norm_witness(A: ModeFunction, h: HLike, K: int, slack: float = IDENTITY_TOL) -> NormWitness:
    """Check ||Op^AW(A)|| <= sup|A| on the truncated matrix."""
    matrix = anti_wick_matrix(A, h, K)
    norm = matrix.spectral_norm()
    sup = A.sup_norm(refine=4)
    return NormWitness(norm, sup, slack, norm <= sup + slack)


def wick_symbol(C: OperatorMatrix, X: Sequence[float]) -> complex:
    """<C Ψ_X, Ψ_X> through the coherent coefficients of Ψ_X."""
    c = coherent_coefficients(X, C.h, C.K)
    tail = abs(c[-1])
    if tail > TAIL_TOL:
        raise TruncationError(
            f"coherent coefficients at X={tuple(_point(X))} have not decayed by index {C.K - 1} (|c|={tail:.3e})"
        )
    return complex(np.conj(c) @ C.entries @ c)


def wick_symbol_grid(C: OperatorMatrix, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.array([wick_symbol(C, X) for X in pts])


def point_lattice(half_width: float = 0.5, count: int = 5) -> np.ndarray:
    """count x count phase-space points on [-half_width, half_width]^2, x-major."""
    axis = np.linspace(-half_width, half_width, count)
    return np.array([(x, xi) for x in axis for xi in axis])


def reg_compose(A: ModeFunction, B: ModeFunction, h: HLike) -> ModeFunction:
    """e^{(h/4)Δ} C_h(e^{(h/4)Δ}A, e^{(h/4)Δ}B)."""
    hp = as_planck(h)
    t = 0.25 * hp.h
    inner = weyl_star_mode(pg.heat_semigroup(A, t), pg.heat_semigroup(B, t), hp)
    return pg.heat_semigroup(inner, t)


def _reg_kernel_at(A, B, h: float, X: np.ndarray, t: np.ndarray, w: np.ndarray) -> complex:
    yy, kk = np.meshgrid(t + X[0], t + X[1], indexing="ij")
    gauss = np.exp(-np.add.outer(t ** 2, t ** 2) / (2 * h))
    wg = np.multiply.outer(w, w) * gauss
    a_tilde = _evaluate_symbol(A, yy, kk) * wg
    b_tilde = _evaluate_symbol(B, yy, kk) * wg
    scale = 1.0 / (2 * h)
    grow = np.exp(scale * np.multiply.outer(t, t))  # [l, i]: e^{z y / 2h}, also e^{ζ η / 2h}
    turn = np.exp(1j * scale * np.multiply.outer(t, t))  # e^{i ζ y / 2h}
    total = 0.0 + 0.0j
    for i in range(len(t)):
        # S[i, k] = sum_{l,m} B̃[l,m] e^{z_l y_i/2h} e^{-i z_l η_k/2h} e^{ζ_m η_k/2h} e^{i ζ_m y_i/2h}
        weighted = grow[:, i][:, None] * b_tilde * turn[:, i][None, :]
        row = np.sum((np.conj(turn).T @ weighted) * grow.T, axis=1)
        total += complex(np.sum(a_tilde[i] * row))
    return total / (2 * math.pi * h) ** 2


def reg_compose_kernel_quadrature(
    A,
    B,
    h: HLike,
    points: np.ndarray,
    nodes: int = KERNEL_NODES,
    tol: float = 1e-9,
    levels: int = 1,
) -> QuadratureResult:
    """Regularized composition from its Gaussian kernel, one mode.

    C(X) = (2πh)^{-2} ∫∫ A(X+Y) B(X+Z) exp(v·conj(u)/2h - (|Y|^2+|Z|^2)/2h) dY dZ
    with u = y + iη and v = z + iζ.
    """
    hp = as_planck(h)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R = math.sqrt(160.0 * hp.h)
    quad = QuadratureSpec(R, nodes, "trapezoid")

    def _evaluate(count: int) -> np.ndarray:
        t, w = quad.nodes_weights(count)
        return np.array([_reg_kernel_at(A, B, hp.h, X, t, w) for X in pts])

    def _distance(prev: np.ndarray, cur: np.ndarray) -> float:
        return float(np.max(np.abs(prev - cur)) / max(1.0, float(np.max(np.abs(cur)))))

    def _on_refine(level: int, count: int, change: float) -> None:
        logger.info("Regularized kernel quadrature refine level=%s nodes=%s change=%.3e", level, count, change)

    result = refine_until_stable(_evaluate, nodes, _distance, levels, tol, _on_refine)
    if not result.converged:
        logger.warning("Regularized kernel quadrature not converged change=%.3e", result.change)
    return QuadratureResult(result.value, result.change, result.resolution, not result.converged)
