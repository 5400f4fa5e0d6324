from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import roots_legendre

from app.calculus import phase_grid as pg
from app.calculus import symbols as sy
from app.calculus.hermite_basis import HermiteBasis, OperatorMatrix, hermite_functions
from app.calculus.phase_grid import CompensatedSum, Grid2D, ModeFunction
from app.calculus.polynomial import PolynomialSymbol, moyal_product
from app.core.errors import (
    InvalidParameterError,
    ModeMismatchError,
    NonDecayingInputError,
    SymbolFormError,
)
from app.core.logging import logger
from app.core.refinement import refine_until_stable

MIN_QUADRATURE_H = 0.05
DECAY_TOL = 1e-12


@dataclass(frozen=True)
class PlanckParam:
    h: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.h) or self.h <= 0:
            raise InvalidParameterError(f"h must be a positive finite number, got {self.h}")
        object.__setattr__(self, "h", float(self.h))

    def scaled(self, theta: float) -> "PlanckParam":
        return PlanckParam(self.h * theta)

    def hypothesis_flags(self, rho: Sequence[float], delta: Sequence[float]) -> Tuple[bool, ...]:
        """Per-mode check of h * rho_j * delta_j <= 1."""
        return tuple(self.h * r * d <= 1.0 for r, d in zip(rho, delta))


HLike = Union[PlanckParam, float]


def as_planck(h: HLike) -> PlanckParam:
    return h if isinstance(h, PlanckParam) else PlanckParam(float(h))


@dataclass(frozen=True)
class QuadratureSpec:
    R: float = 6.0
    nodes: int = 96
    rule: str = "gauss-legendre"

    def __post_init__(self) -> None:
        if not math.isfinite(self.R) or self.R <= 0:
            raise InvalidParameterError(f"quadrature box half-width must be positive, got {self.R}")
        if self.nodes < 2:
            raise InvalidParameterError("quadrature needs at least two nodes per axis")
        if self.rule not in ("gauss-legendre", "trapezoid"):
            raise InvalidParameterError(f"unknown quadrature rule {self.rule!r}")

    def with_nodes(self, nodes: int) -> "QuadratureSpec":
        return QuadratureSpec(self.R, nodes, self.rule)

    def nodes_weights(self, nodes: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        count = nodes or self.nodes
        if self.rule == "gauss-legendre":
            t, w = roots_legendre(count)
            return self.R * t, self.R * w
        t = np.linspace(-self.R, self.R, count)
        w = np.full(count, t[1] - t[0])
        w[[0, -1]] *= 0.5
        return t, w


@dataclass(frozen=True)
class QuadratureResult:
    values: np.ndarray
    error_estimate: float
    nodes: int
    flagged: bool


def symplectic_form(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """σ(X, Y) = y·ξ - x·η for rows (x, ξ), (y, η), summed over modes."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return np.sum(Y[..., 0] * X[..., 1] - X[..., 0] * Y[..., 1], axis=-1)


def _mode_phase(kappa: float, fixed: Tuple[int, int], shape: Tuple[int, int], fixed_first: bool) -> np.ndarray:
    p = np.arange(shape[0]) - shape[0] // 2
    q = np.arange(shape[1]) - shape[1] // 2
    p0, q0 = fixed
    if fixed_first:
        # σ(w0, w') with w' running: p' q0 - p0 q'
        return np.exp(1j * kappa * (np.multiply.outer(p * q0, np.ones(shape[1])) - p0 * q[None, :]))
    # σ(w, w0) with w running: p0 q - p q0
    return np.exp(1j * kappa * (p0 * q[None, :] - np.multiply.outer(p * q0, np.ones(shape[1]))))


def twisted_convolution(a: np.ndarray, b: np.ndarray, kappas: Sequence[float]) -> np.ndarray:
    """c[w''] = sum_{w+w'=w''} a[w] b[w'] exp(i sum_j κ_j (p'_j q_j - p_j q'_j)).

    Arrays are centered with axes (x_1, ξ_1, ..., x_n, ξ_n). The loop runs over
    the nonzero entries of the sparser operand in index order.
    """
    if a.shape != b.shape:
        raise ModeMismatchError(f"operand shapes differ: {a.shape} vs {b.shape}")
    n = len(kappas)
    if a.ndim != 2 * n:
        raise ModeMismatchError(f"{n} phase constants for a {a.ndim}-axis array")
    ea, eb = pg.support_extent(a), pg.support_extent(b)
    out = CompensatedSum(a.shape)
    if not np.any(a) or not np.any(b):
        return out.total
    pg.check_product_band(ea, eb, a.shape, what="star product")
    a_sparse = np.count_nonzero(a) <= np.count_nonzero(b)
    loop, other = (a, b) if a_sparse else (b, a)
    e_loop, e_other = (ea, eb) if a_sparse else (eb, ea)
    box = tuple(slice(s // 2 - e, s // 2 + e + 1) for s, e in zip(a.shape, e_other))
    other_box = other[box]
    centers = np.array([s // 2 for s in a.shape])
    for idx in np.argwhere(loop != 0):
        freq = idx - centers
        phase = np.ones(other_box.shape, dtype=complex)
        for j, kappa in enumerate(kappas):
            local = _mode_phase(kappa, (int(freq[2 * j]), int(freq[2 * j + 1])), other_box.shape[2 * j:2 * j + 2], a_sparse)
            view = [1] * other_box.ndim
            view[2 * j] = local.shape[0]
            view[2 * j + 1] = local.shape[1]
            phase = phase * local.reshape(view)
        target = tuple(
            slice(s // 2 - e + int(f), s // 2 + e + int(f) + 1) for s, e, f in zip(a.shape, e_other, freq)
        )
        out.add(loop[tuple(idx)] * other_box * phase, target)
    return out.total


def _kappa(grid: Grid2D, h: float) -> float:
    return 0.5 * h * grid.wavenumber ** 2


def weyl_star_mode(a: ModeFunction, b: ModeFunction, h: HLike) -> ModeFunction:
    """Exact Weyl product of two band-limited mode functions."""
    if a.grid != b.grid:
        raise ModeMismatchError(f"grids differ: {a.grid} vs {b.grid}")
    hp = as_planck(h)
    coeffs = twisted_convolution(np.asarray(a.coeffs), np.asarray(b.coeffs), (_kappa(a.grid, hp.h),))
    return ModeFunction(a.grid, coeffs)


def weyl_star_tensor(A: sy.TensorSymbol, B: sy.TensorSymbol, h: HLike) -> sy.TensorSymbol:
    if A.n_modes != B.n_modes:
        raise ModeMismatchError(f"mode counts differ: {A.n_modes} vs {B.n_modes}")
    hp = as_planck(h)
    cache = {}
    factors = []
    for a, b in zip(A.factors, B.factors):
        key = (id(a), id(b))
        if key not in cache:
            cache[key] = weyl_star_mode(a, b, hp)
        factors.append(cache[key])
    return sy.TensorSymbol(tuple(factors), A.prefactor * B.prefactor)


def weyl_star_dense(A: sy.DenseSymbol, B: sy.DenseSymbol, h: HLike) -> sy.DenseSymbol:
    if A.grids != B.grids:
        raise ModeMismatchError("dense operands live on different grids")
    hp = as_planck(h)
    kappas = tuple(_kappa(g, hp.h) for g in A.grids)
    coeffs = twisted_convolution(np.asarray(A.coeffs), np.asarray(B.coeffs), kappas)
    return sy.DenseSymbol(A.grids, coeffs, A.prefactor * B.prefactor)


def weyl_star(A, B, h: HLike):
    """Weyl composition for any pair of supported forms."""
    if isinstance(A, PolynomialSymbol) or isinstance(B, PolynomialSymbol):
        if not (isinstance(A, PolynomialSymbol) and isinstance(B, PolynomialSymbol)):
            raise SymbolFormError("polynomial symbols compose only with polynomial symbols")
        return moyal_product(A, B, as_planck(h).h)
    if isinstance(A, ModeFunction) and isinstance(B, ModeFunction):
        return weyl_star_mode(A, B, h)
    if A.n_modes != B.n_modes:
        raise ModeMismatchError(f"mode counts differ: {A.n_modes} vs {B.n_modes}")
    if isinstance(A, sy.TensorSymbol) and isinstance(B, sy.TensorSymbol):
        return weyl_star_tensor(A, B, h)
    if isinstance(A, sy.DenseSymbol) or isinstance(B, sy.DenseSymbol):
        return weyl_star_dense(sy.to_dense(A), sy.to_dense(B), h)
    terms = [weyl_star_tensor(a, b, h) for a in sy.to_canonical(A).terms for b in sy.to_canonical(B).terms]
    return sy.CanonicalSymbol(A.grids, tuple(terms))


@dataclass(frozen=True)
class GaussianWindowed:
    """amplitude * exp(-rate |X - center|^2) * carrier(X) on one mode."""

    rate: float
    center: Tuple[float, float] = (0.0, 0.0)
    carrier: Optional[ModeFunction] = None
    amplitude: complex = 1.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.rate) or self.rate <= 0:
            raise NonDecayingInputError(f"Gaussian rate must be positive, got {self.rate}")

    def evaluate(self, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(xi, dtype=float))
        env = self.amplitude * np.exp(-self.rate * ((x - self.center[0]) ** 2 + (xi - self.center[1]) ** 2))
        if self.carrier is not None:
            env = env * self.carrier.evaluate(x, xi)
        return env

    def on_grid(self, grid: Grid2D, trim: float = 1e-13) -> ModeFunction:
        return ModeFunction.from_callable(grid, self.evaluate, trim=trim)


def gaussian_star_closed_form(a: float, b: float, h: HLike, x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """exp(-a|X|^2) ⋆ exp(-b|X|^2) = exp(-(a+b)|X|^2/(1+ab h^2)) / (1+ab h^2)."""
    hv = as_planck(h).h
    denom = 1.0 + a * b * hv * hv
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(xi, dtype=float) ** 2
    return np.exp(-(a + b) * r2 / denom) / denom


def _check_decay(fn, X: np.ndarray, R: float, label: str) -> None:
    edge = np.linspace(-R, R, 65)
    ones = np.ones_like(edge)
    xs = np.concatenate([edge, edge, -R * ones, R * ones]) + X[0]
    ks = np.concatenate([-R * ones, R * ones, edge, edge]) + X[1]
    boundary = float(np.max(np.abs(fn.evaluate(xs, ks))))
    inner = np.linspace(-R, R, 33)
    gx, gk = np.meshgrid(inner + X[0], inner + X[1], indexing="ij")
    interior = float(np.max(np.abs(fn.evaluate(gx, gk))))
    if boundary > DECAY_TOL * max(1.0, interior):
        raise NonDecayingInputError(
            f"{label} does not decay on the quadrature box around X={tuple(X)}: boundary max {boundary:.3e}"
        )


def _weyl_quadrature_at(a, b, hv: float, X: np.ndarray, t: np.ndarray, w: np.ndarray) -> complex:
    yy, kk = np.meshgrid(t + X[0], t + X[1], indexing="ij")
    amat = a.evaluate(yy, kk)
    bmat = b.evaluate(yy, kk)
    e1 = np.exp(-2j * np.multiply.outer(t, t) / hv)  # [z, η]
    e2 = np.exp(2j * np.multiply.outer(t, t) / hv)  # [ζ, y]
    wb = w[:, None] * bmat * w[None, :]
    g = e1.T @ wb @ e2  # [η, y]
    wa = w[:, None] * amat * w[None, :]
    return complex(np.sum(wa * g.T)) / (math.pi * hv) ** 2


def weyl_star_quadrature(
    a,
    b,
    h: HLike,
    points: np.ndarray,
    quad: Optional[QuadratureSpec] = None,
    tol: float = 1e-9,
    max_doublings: int = 3,
) -> QuadratureResult:
    """Direct evaluation of the 4D Weyl integral at each output point.

    ``a`` and ``b`` expose ``evaluate(x, xi)`` and must decay on the box
    X + [-R, R]^2. Nodes double until successive values agree within ``tol``
    (relative to the largest output magnitude).
    """
    hp = as_planck(h)
    if hp.h < MIN_QUADRATURE_H:
        raise InvalidParameterError(f"quadrature oracle needs h >= {MIN_QUADRATURE_H}, got {hp.h}")
    quad = quad or QuadratureSpec()
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != 2:
        raise ModeMismatchError("output points must be rows (x, ξ)")
    for X in pts:
        _check_decay(a, X, quad.R, "left operand")
        _check_decay(b, X, quad.R, "right operand")

    def _evaluate(nodes: int) -> np.ndarray:
        t, w = quad.nodes_weights(nodes)
        return np.array([_weyl_quadrature_at(a, b, hp.h, X, t, w) for X in pts])

    def _distance(prev: np.ndarray, cur: np.ndarray) -> float:
        return float(np.max(np.abs(prev - cur)) / max(1.0, float(np.max(np.abs(cur)))))

    def _on_refine(level: int, nodes: int, change: float) -> None:
        logger.info("Weyl quadrature refine level=%s nodes=%s change=%.3e", level, nodes, change)

    result = refine_until_stable(_evaluate, quad.nodes, _distance, max_doublings, tol, _on_refine)
    if not result.converged:
        logger.warning(
            "Weyl quadrature not converged nodes=%s error_estimate=%.3e tol=%.1e", result.resolution, result.change, tol
        )
    return QuadratureResult(result.value, result.change, result.resolution, not result.converged)


def _polynomial_operator(P: PolynomialSymbol, basis: HermiteBasis) -> np.ndarray:
    if P.degree > 2:
        raise InvalidParameterError("operator oracle supports polynomial symbols of degree <= 2")
    u = basis.nodes
    h = basis.h
    phi = basis.functions
    dphi = basis.first_derivatives()
    d2phi = basis.second_derivatives()
    terms = P.terms()
    action = np.zeros(phi.shape, dtype=complex)
    action += terms.get((0, 0), 0.0) * phi
    action += terms.get((1, 0), 0.0) * u * phi
    action += terms.get((0, 1), 0.0) * (-1j * h) * dphi
    action += terms.get((2, 0), 0.0) * u * u * phi
    action += terms.get((1, 1), 0.0) * (-1j * h) * (u * dphi + 0.5 * phi)
    action += terms.get((0, 2), 0.0) * (-h * h) * d2phi
    return (phi * basis.spacing) @ action.T


def _mode_operator(a: ModeFunction, basis: HermiteBasis) -> np.ndarray:
    # Op(e^{i(αx+βξ)}) f(u) = e^{iαu + iαβh/2} f(u + βh)
    u = basis.nodes
    h = basis.h
    phi = basis.functions
    k = a.grid.wavenumber
    half = a.grid.half
    out = np.zeros((basis.K, basis.K), dtype=complex)
    nz = np.argwhere(a.coeffs != 0)
    for q_index in np.unique(nz[:, 1]):
        beta = (int(q_index) - half) * k
        rows = nz[nz[:, 1] == q_index][:, 0]
        alphas = (rows - half) * k
        weights = a.coeffs[rows, q_index]
        g = np.exp(1j * np.multiply.outer(u + 0.5 * beta * h, alphas)) @ weights
        shifted = hermite_functions(u + beta * h, basis.K, h)
        out += (phi * (basis.spacing * g)) @ shifted.T
    return out


def hermite_operator_oracle(
    a: Union[ModeFunction, PolynomialSymbol],
    h: HLike,
    K: int,
    basis: Optional[HermiteBasis] = None,
) -> OperatorMatrix:
    """Matrix of <Op_h^weyl(a) φ_j, φ_k> in the h-scaled Hermite basis."""
    hp = as_planck(h)
    basis = basis or HermiteBasis.default(hp.h, K)
    if basis.K != K or basis.h != hp.h:
        raise InvalidParameterError("basis does not match the requested h and K")
    witness = basis.check()
    if isinstance(a, PolynomialSymbol):
        entries = _polynomial_operator(a, basis)
    elif isinstance(a, ModeFunction):
        entries = _mode_operator(a, basis)
    else:
        raise InvalidParameterError(f"operator oracle cannot quantize {type(a).__name__}")
    return OperatorMatrix(entries, hp.h, witness)


def matrix_composition_defect(a: ModeFunction, b: ModeFunction, h: HLike, K: int) -> float:
    """Bulk max |M(a⋆b) - M(a)M(b)| relative to the bulk scale of M(a⋆b)."""
    hp = as_planck(h)
    basis = HermiteBasis.default(hp.h, K)
    composed = hermite_operator_oracle(weyl_star_mode(a, b, hp), hp, K, basis)
    product = hermite_operator_oracle(a, hp, K, basis) @ hermite_operator_oracle(b, hp, K, basis)
    diff = composed.bulk() - product.bulk()
    scale = max(1.0, float(np.max(np.abs(composed.bulk()))))
    return float(np.max(np.abs(diff))) / scale


def leibniz_residual(A, B, h: HLike, mode: int, axis: str) -> float:
    """sup |∂ C_h(A,B) - C_h(∂A, B) - C_h(A, ∂B)| for one first-order derivative."""
    n = A.n_modes
    alpha = [0] * n
    beta = [0] * n
    if axis == "x":
        alpha[mode] = 1
    elif axis in ("xi", "ξ"):
        beta[mode] = 1
    else:
        raise InvalidParameterError(f"axis must be x or xi, got {axis!r}")
    lhs = sy.derivative(weyl_star(A, B, h), alpha, beta)
    rhs = sy.add(weyl_star(sy.derivative(A, alpha, beta), B, h), weyl_star(A, sy.derivative(B, alpha, beta), h))
    return sy.coefficient_l1(sy.subtract(lhs, rhs))


def dilation_residual(A, B, h: HLike, weights: pg.DilationWeights) -> float:
    """sup bound of δ_λ C_h(A,B) - C_h(δ_λ A, δ_λ B)."""
    lhs = pg.dilate(weyl_star(A, B, h), weights)
    rhs = weyl_star(pg.dilate(A, weights), pg.dilate(B, weights), h)
    return sy.coefficient_l1(sy.subtract(lhs, rhs))
