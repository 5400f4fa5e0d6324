from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import roots_jacobi
from scipy.stats import linregress

from app.calculus import phase_grid as pg
from app.calculus import symbols as sy
from app.calculus.hybrid_decomp import BoundReport, ModeFamily, family_stats, fit_product_constant
from app.calculus.phase_grid import ModeFunction
from app.calculus.polynomial import PolynomialSymbol, moyal_term_poly
from app.calculus.star_core import HLike, as_planck, weyl_star, weyl_star_mode
from app.core.errors import InvalidParameterError, SymbolFormError
from app.core.logging import logger
from app.core.refinement import refine_until_stable

MAX_TERM_ORDER = 6
MAX_REMAINDER_ORDER = 4
THETA_NODES = 16
THETA_TOL = 1e-10
WEIGHT_SUM_TOL = 1e-12
CLASS_SHIFT = 6


@dataclass(frozen=True)
class ThetaQuadrature:
    """Nodes on (0, 1) with the weight N (1 - θ)^{N-1} folded into the weights."""

    N: int
    nodes: int = THETA_NODES

    def __post_init__(self) -> None:
        if self.N < 1:
            raise InvalidParameterError("expansion order must be at least 1")
        if self.nodes < 1:
            raise InvalidParameterError("θ-quadrature needs at least one node")

    def rule(self, nodes: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        count = nodes or self.nodes
        x, w = roots_jacobi(count, self.N - 1, 0.0)
        theta = 0.5 * (1.0 + x)
        weights = self.N * 2.0 ** (-self.N) * w
        return theta, weights

    def weight_sum_defect(self) -> float:
        _, weights = self.rule()
        return abs(float(np.sum(weights)) - 1.0)

    def doubled(self) -> "ThetaQuadrature":
        return ThetaQuadrature(self.N, 2 * self.nodes)


def compositions(total: int, parts: int) -> List[Tuple[int, ...]]:
    """Ordered tuples of ``parts`` non-negative integers summing to ``total``, lexicographic."""
    if parts == 1:
        return [(total,)]
    out = []
    for first in range(total + 1):
        for rest in compositions(total - first, parts - 1):
            out.append((first,) + rest)
    return out


def _pairs(k: int) -> List[Tuple[int, int, float]]:
    return [(a, k - a, (-1.0) ** (k - a) / (math.factorial(a) * math.factorial(k - a))) for a in range(k + 1)]


def _mode_term(a: ModeFunction, b: ModeFunction, k: int) -> ModeFunction:
    """sum_{a+b=k} (-1)^b/(a! b!) [∂_x^b ∂_ξ^a A][∂_x^a ∂_ξ^b B] for one mode, no h power."""
    parts = []
    for p, q, weight in _pairs(k):
        left = pg.derivative(a, q, p)
        right = pg.derivative(b, p, q)
        if left.is_zero or right.is_zero:
            continue
        parts.append(pg.multiply(left, right).scale(weight))
    return pg.sum_modes(parts, a.grid)


def _check_order(k: int, cap: int) -> None:
    if int(k) != k or k < 0 or k > cap:
        raise InvalidParameterError(f"order must be an integer in 0..{cap}, got {k}")


def _tensor_term(A: sy.TensorSymbol, B: sy.TensorSymbol, k: int, h: float) -> sy.Symbol:
    n = A.n_modes
    cache: Dict[Tuple[int, int, int], ModeFunction] = {}

    def factor(j: int, order: int) -> ModeFunction:
        key = (id(A.factors[j]), id(B.factors[j]), order)
        if key not in cache:
            cache[key] = _mode_term(A.factors[j], B.factors[j], order)
        return cache[key]

    prefactor = A.prefactor * B.prefactor * (-0.5j * h) ** k
    if k == 0:
        return sy.multiply(A, B)
    terms = []
    for orders in compositions(k, n):
        terms.append(sy.TensorSymbol(tuple(factor(j, o) for j, o in enumerate(orders)), prefactor))
    return sy.CanonicalSymbol(A.grids, tuple(terms))


def _multi_indices(k: int, n: int):
    """(α, β) over 2n coordinates with |α| + |β| = k, lexicographic."""
    for flat in itertools.product(range(k + 1), repeat=2 * n):
        if sum(flat) == k:
            yield flat[:n], flat[n:]


def _generic_term(A, B, k: int, h: float) -> sy.Symbol:
    parts = []
    for alpha, beta in _multi_indices(k, A.n_modes):
        weight = (-1.0) ** sum(beta) / (
            math.prod(math.factorial(a) for a in alpha) * math.prod(math.factorial(b) for b in beta)
        )
        left = sy.derivative(A, beta, alpha)
        right = sy.derivative(B, alpha, beta)
        if left.is_zero or right.is_zero:
            continue
        parts.append(sy.scale(sy.multiply(left, right), weight * (-0.5j * h) ** k))
    if not parts:
        return sy.zero_like(A)
    return sy.sum_symbols(parts, A.grids)


def moyal_term(A, B, k: int, h: HLike):
    """Order-k term (h/2i)^k/k! σ(∇_Y, ∇_Z)^k [A(X+Y) B(X+Z)] at Y = Z = 0."""
    _check_order(k, MAX_TERM_ORDER)
    hv = as_planck(h).h
    if isinstance(A, PolynomialSymbol) or isinstance(B, PolynomialSymbol):
        if not (isinstance(A, PolynomialSymbol) and isinstance(B, PolynomialSymbol)):
            raise SymbolFormError("polynomial symbols expand only against polynomial symbols")
        return moyal_term_poly(A, B, k, hv)
    if isinstance(A, ModeFunction) and isinstance(B, ModeFunction):
        if k == 0:
            return pg.multiply(A, B)
        return _mode_term(A, B, k).scale((-0.5j * hv) ** k)
    if isinstance(A, sy.TensorSymbol) and isinstance(B, sy.TensorSymbol):
        return _tensor_term(A, B, k, hv)
    if k == 0:
        return sy.multiply(A, B)
    return _generic_term(A, B, k, hv)


def _add(F, G):
    if isinstance(F, PolynomialSymbol):
        return F + G
    if isinstance(F, ModeFunction):
        return F + G
    return sy.add(F, G)


def _subtract(F, G):
    if isinstance(F, (PolynomialSymbol, ModeFunction)):
        return F - G
    return sy.subtract(F, G)


def symbol_norm(F) -> float:
    """Lattice sup for periodic symbols; coefficient sum for polynomials."""
    if isinstance(F, PolynomialSymbol):
        return float(np.sum(np.abs(F.coeffs)))
    if isinstance(F, ModeFunction):
        return F.sup_norm()
    return sy.sup_norm(F)


@dataclass(frozen=True)
class ExpansionResult:
    terms: Tuple[object, ...]
    partial_sum: object
    remainder_direct: object
    remainder_integral: Optional[object]
    per_order_norms: Tuple[float, ...]
    h: float
    N: int

    @property
    def remainder_norm(self) -> float:
        return symbol_norm(self.remainder_direct)

    def route_difference(self) -> Optional[float]:
        if self.remainder_integral is None:
            return None
        return residual_norm(_subtract(self.remainder_direct, self.remainder_integral))

    def to_dict(self) -> Dict[str, object]:
        return {
            "N": self.N,
            "h": self.h,
            "per_order_norms": list(self.per_order_norms),
            "remainder_norm": self.remainder_norm,
            "route_difference": self.route_difference(),
        }


def residual_norm(F) -> float:
    """Upper bound on sup|F| from coefficient magnitudes."""
    if isinstance(F, PolynomialSymbol):
        return float(np.sum(np.abs(F.coeffs)))
    if isinstance(F, ModeFunction):
        return F.l1_coefficients()
    return sy.coefficient_l1(F)


def moyal_partial_sum(A, B, N: int, h: HLike, with_integral: bool = False) -> ExpansionResult:
    """First N terms of the expansion and the remainder C_h(A, B) minus their sum."""
    _check_order(N, MAX_TERM_ORDER)
    if N < 1:
        raise InvalidParameterError("expansion needs at least one term")
    hv = as_planck(h).h
    terms = tuple(moyal_term(A, B, k, hv) for k in range(N))
    partial = terms[0]
    for term in terms[1:]:
        partial = _add(partial, term)
    exact = weyl_star(A, B, hv)
    direct = _subtract(exact, partial)
    integral = remainder_integral(A, B, N, hv) if with_integral else None
    norms = tuple(symbol_norm(t) for t in terms)
    logger.info("Moyal expansion N=%s h=%s remainder_norm=%.6g", N, hv, symbol_norm(direct))
    return ExpansionResult(terms, partial, direct, integral, norms, hv, N)


def _mode_remainder_factor(a: ModeFunction, b: ModeFunction, k: int, h: float) -> ModeFunction:
    """u_k(θ) = sum_{a+b=k} (-1)^b/(a! b!) C_{θh}(∂_x^b ∂_ξ^a A, ∂_x^a ∂_ξ^b B) at θh = h."""
    parts = []
    for p, q, weight in _pairs(k):
        left = pg.derivative(a, q, p)
        right = pg.derivative(b, p, q)
        if left.is_zero or right.is_zero:
            continue
        parts.append(weyl_star_mode(left, right, h).scale(weight))
    return pg.sum_modes(parts, a.grid)


def _tensor_remainder(A: sy.TensorSymbol, B: sy.TensorSymbol, N: int, h: float, quad: ThetaQuadrature, nodes: int):
    theta, weights = quad.rule(nodes)
    n = A.n_modes
    orders = compositions(N, n)
    scale = A.prefactor * B.prefactor * (-0.5j * h) ** N
    terms = []
    for th, w in zip(theta, weights):
        cache: Dict[Tuple[int, int, int], ModeFunction] = {}
        for combo in orders:
            factors = []
            for j, k in enumerate(combo):
                key = (id(A.factors[j]), id(B.factors[j]), k)
                if key not in cache:
                    cache[key] = _mode_remainder_factor(A.factors[j], B.factors[j], k, th * h)
                factors.append(cache[key])
            terms.append(sy.TensorSymbol(tuple(factors), scale * w))
    return sy.CanonicalSymbol(A.grids, tuple(terms))


def _mode_remainder(a: ModeFunction, b: ModeFunction, N: int, h: float, quad: ThetaQuadrature, nodes: int) -> ModeFunction:
    theta, weights = quad.rule(nodes)
    parts = [_mode_remainder_factor(a, b, N, th * h).scale(w) for th, w in zip(theta, weights)]
    return pg.sum_modes(parts, a.grid).scale((-0.5j * h) ** N)


def _generic_remainder(A, B, N: int, h: float, quad: ThetaQuadrature, nodes: int):
    theta, weights = quad.rule(nodes)
    parts = []
    for alpha, beta in _multi_indices(N, A.n_modes):
        weight = (-1.0) ** sum(beta) / (
            math.prod(math.factorial(a) for a in alpha) * math.prod(math.factorial(b) for b in beta)
        )
        left = sy.derivative(A, beta, alpha)
        right = sy.derivative(B, alpha, beta)
        if left.is_zero or right.is_zero:
            continue
        for th, w in zip(theta, weights):
            parts.append(sy.scale(weyl_star(left, right, th * h), weight * w * (-0.5j * h) ** N))
    if not parts:
        return sy.zero_like(A)
    return sy.sum_symbols(parts, A.grids)


def _remainder_at(A, B, N: int, h: float, quad: ThetaQuadrature, nodes: int):
    if isinstance(A, ModeFunction) and isinstance(B, ModeFunction):
        return _mode_remainder(A, B, N, h, quad, nodes)
    if isinstance(A, sy.TensorSymbol) and isinstance(B, sy.TensorSymbol):
        return _tensor_remainder(A, B, N, h, quad, nodes)
    return _generic_remainder(A, B, N, h, quad, nodes)


def remainder_integral(
    A,
    B,
    N: int,
    h: HLike,
    quad: Optional[ThetaQuadrature] = None,
    tol: float = THETA_TOL,
    check: bool = True,
):
    """R_N from the θ-integral over compositions at scaled h of derivative pairs.

    With ``check`` the node count is doubled once and a change above ``tol``
    is logged as a quadrature flag; the finer value is returned.
    """
    _check_order(N, MAX_REMAINDER_ORDER)
    if N < 1:
        raise InvalidParameterError("remainder order must be at least 1")
    if isinstance(A, PolynomialSymbol) or isinstance(B, PolynomialSymbol):
        raise SymbolFormError("the integral remainder is computed for periodic symbols")
    hv = as_planck(h).h
    quad = quad or ThetaQuadrature(N)
    if quad.N != N:
        raise InvalidParameterError(f"θ-quadrature built for N={quad.N}, asked for N={N}")
    if not check:
        return _remainder_at(A, B, N, hv, quad, quad.nodes)

    def _on_refine(level: int, nodes: int, change: float) -> None:
        logger.info("θ-quadrature refine N=%s nodes=%s change=%.3e", N, nodes, change)

    result = refine_until_stable(
        lambda nodes: _remainder_at(A, B, N, hv, quad, nodes),
        quad.nodes,
        lambda prev, cur: residual_norm(_subtract(prev, cur)),
        levels=1,
        tol=tol,
        on_refine=_on_refine,
    )
    if not result.converged:
        logger.warning("θ-quadrature not converged N=%s h=%s change=%.3e tol=%.1e", N, hv, result.change, tol)
    return result.value


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    rvalue: float
    hs: Tuple[float, ...] = ()
    norms: Tuple[float, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "rvalue": self.rvalue,
            "hs": list(self.hs),
            "norms": list(self.norms),
        }


def slope_fit(hs: Sequence[float], norms: Sequence[float]) -> SlopeFit:
    """Least-squares slope of log(norm) against log(h)."""
    if len(hs) != len(norms) or len(hs) < 2:
        raise InvalidParameterError("slope fit needs at least two (h, norm) pairs")
    if min(hs) <= 0 or min(norms) <= 0:
        raise InvalidParameterError("slope fit needs positive h values and norms")
    fit = linregress(np.log(np.asarray(hs, dtype=float)), np.log(np.asarray(norms, dtype=float)))
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.rvalue), tuple(hs), tuple(norms))


def remainder_scaling(A, B, N: int, hs: Sequence[float]) -> SlopeFit:
    norms = [moyal_partial_sum(A, B, N, h).remainder_norm for h in hs]
    return slope_fit(hs, norms)


def term_symmetry_residual(A, B, k: int, h: HLike) -> float:
    """Size of term_k(B, A) - (-1)^k term_k(A, B)."""
    forward = moyal_term(A, B, k, h)
    backward = moyal_term(B, A, k, h)
    if isinstance(forward, (PolynomialSymbol, ModeFunction)):
        return residual_norm(backward - forward.scale((-1.0) ** k))
    return residual_norm(sy.subtract(backward, sy.scale(forward, (-1.0) ** k)))


def _families(A: sy.TensorSymbol, B: sy.TensorSymbol, spec: sy.SymbolClassSpec) -> List[ModeFamily]:
    return [
        ModeFamily(a, b, r, d, f"mode{j}")
        for j, (a, b, r, d) in enumerate(zip(A.factors, B.factors, spec.rho, spec.delta))
    ]


def remainder_class_check(
    A,
    B,
    N: int,
    h: HLike,
    spec_a: sy.SymbolClassSpec,
    spec_b: sy.SymbolClassSpec,
    slack: float = sy.CERTIFY_SLACK,
) -> BoundReport:
    """Certify R_N in S_{m-N-6}(M'' h^N/N! (sum ρ_j δ_j)^N, 2ρ, 2δ).

    M'' = M M' prod (1 + K h ρ_j δ_j) with K fitted per mode from the
    measured composed sup-norms.
    """
    hv = as_planck(h).h
    if not (isinstance(A, sy.TensorSymbol) and isinstance(B, sy.TensorSymbol)):
        raise SymbolFormError("the remainder class check runs on tensor symbols")
    if spec_a.rho != spec_b.rho or spec_a.delta != spec_b.delta:
        raise InvalidParameterError("A and B must share the weights ρ, δ")
    if spec_a.m != spec_b.m or spec_a.m < N + CLASS_SHIFT:
        raise InvalidParameterError(f"class order m must satisfy m >= N + {CLASS_SHIFT}, got m={spec_a.m}")
    cert_a = sy.certify_class(A, spec_a, slack)
    cert_b = sy.certify_class(B, spec_b, slack)
    K = max(fit_product_constant(family_stats(f, hv)) for f in _families(A, B, spec_a))
    factors = tuple(1.0 + K * hv * r * d for r, d in zip(spec_a.rho, spec_a.delta))
    M_dd = spec_a.M * spec_b.M * math.prod(factors)
    weight_sum = sum(r * d for r, d in zip(spec_a.rho, spec_a.delta))
    target_M = M_dd * hv ** N / math.factorial(N) * weight_sum ** N
    target = sy.SymbolClassSpec(
        spec_a.m - N - CLASS_SHIFT,
        target_M,
        tuple(2 * r for r in spec_a.rho),
        tuple(2 * d for d in spec_a.delta),
    )
    remainder = moyal_partial_sum(A, B, N, hv).remainder_direct
    cert = sy.certify_class(remainder, target, slack)
    passed = cert.passed and cert_a.passed and cert_b.passed
    logger.info(
        "Remainder class check N=%s h=%s measured=%.6g bound=%.6g pass=%s", N, hv, cert.minimal_M, target_M, passed
    )
    return BoundReport(
        experiment="thm13",
        n=A.n_modes,
        h=hv,
        lhs=cert.minimal_M,
        rhs=target_M,
        log_lhs=math.log(cert.minimal_M) if cert.minimal_M > 0 else float("-inf"),
        log_rhs=math.log(target_M) if target_M > 0 else float("-inf"),
        per_mode_factors=factors,
        fitted_constant=K,
        passed=passed,
        details={
            "N": N,
            "M_double_prime": M_dd,
            "target_class": target.to_dict(),
            "certificate": cert.to_dict(),
            "inputs_certified": cert_a.passed and cert_b.passed,
        },
    )


def remainder_n_dependence(
    a: ModeFunction,
    b: ModeFunction,
    h: HLike,
    n_list: Sequence[int] = (1, 2, 4, 8),
    rho: float = 1.0,
    delta: float = 1.0,
) -> List[BoundReport]:
    """sup|R_1| for replicated modes against M'' h (n ρ δ), via the telescoping bound."""
    hv = as_planck(h).h
    stats = family_stats(ModeFamily(a, b, rho, delta, "replicated"), hv)
    K = fit_product_constant(stats)
    composed = weyl_star_mode(a, b, hv)
    product = pg.multiply(a, b)
    s, p = stats.composed_sup, product.sup_norm(4)
    d = (composed - product).sup_norm(4)
    reports = []
    for n in n_list:
        measured = sy.telescoping_bound([s] * n, [p] * n, [d] * n)
        factor = 1.0 + K * stats.t
        bound = (stats.M_a * stats.M_b * factor) ** n * hv * n * rho * delta
        passed = measured <= bound * (1.0 + 1e-12)
        reports.append(
            BoundReport(
                experiment="thm13-n",
                n=n,
                h=hv,
                lhs=measured,
                rhs=bound,
                log_lhs=math.log(measured) if measured > 0 else float("-inf"),
                log_rhs=math.log(bound) if bound > 0 else float("-inf"),
                per_mode_factors=tuple([factor] * n),
                fitted_constant=K,
                passed=passed,
                details={"N": 1, "measure": "telescoping"},
            )
        )
    return reports
