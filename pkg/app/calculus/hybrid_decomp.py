from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import comb, stirling2

from app.calculus import phase_grid as pg
from app.calculus import symbols as sy
from app.calculus.gauss_wick import reg_compose, reg_compose_kernel_quadrature
from app.calculus.phase_grid import Grid2D, ModeFunction
from app.calculus.star_core import (
    HLike,
    QuadratureResult,
    QuadratureSpec,
    as_planck,
    symplectic_form,
    weyl_star,
    weyl_star_mode,
    weyl_star_quadrature,
)
from app.core.errors import (
    AliasingError,
    HypothesisViolationError,
    InvalidParameterError,
    ModeMismatchError,
    SymbolFormError,
)
from app.core.logging import logger

DECOMPOSITION_MAX_MODES = 3
DECOMPOSITION_TOL = 1e-8
PERMUTATION_TOL = 1e-12
PERMUTATION_SEED = 7
BOUND_SLACK = 1e-12
CLASS_ORDER = 6
NORM_ORDER = 4
NORM_REFINE = 4
HETEROGENEOUS_CAP = 12
DEFAULT_N_LIST = tuple(2 ** k for k in range(11))
LABELS = ("-", "I", "J", "L")


@dataclass(frozen=True)
class ModeSubset:
    """Subset of the modes {0..n-1}; masks read left to right, "101" = {0, 2}."""

    n: int
    members: FrozenSet[int] = frozenset()

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidParameterError("mode count must be positive")
        members = frozenset(int(j) for j in self.members)
        if any(j < 0 or j >= self.n for j in members):
            raise InvalidParameterError(f"subset {sorted(members)} is not inside 0..{self.n - 1}")
        object.__setattr__(self, "members", members)

    @classmethod
    def from_mask(cls, mask: str) -> "ModeSubset":
        mask = mask.strip()
        if not mask or set(mask) - {"0", "1"}:
            raise InvalidParameterError(f"mode mask must be a non-empty 0/1 string, got {mask!r}")
        return cls(len(mask), frozenset(j for j, c in enumerate(mask) if c == "1"))

    @classmethod
    def full(cls, n: int) -> "ModeSubset":
        return cls(n, frozenset(range(n)))

    @classmethod
    def empty(cls, n: int) -> "ModeSubset":
        return cls(n, frozenset())

    @property
    def mask(self) -> Tuple[bool, ...]:
        return tuple(j in self.members for j in range(self.n))

    def to_mask(self) -> str:
        return "".join("1" if flag else "0" for flag in self.mask)

    def complement(self) -> "ModeSubset":
        return ModeSubset(self.n, frozenset(range(self.n)) - self.members)

    def __len__(self) -> int:
        return len(self.members)

    def __contains__(self, j: object) -> bool:
        return j in self.members

    def __iter__(self):
        return iter(sorted(self.members))

    def _check(self, other: "ModeSubset") -> None:
        if other.n != self.n:
            raise ModeMismatchError(f"subsets over {self.n} and {other.n} modes")

    def __or__(self, other: "ModeSubset") -> "ModeSubset":
        self._check(other)
        return ModeSubset(self.n, self.members | other.members)

    def __and__(self, other: "ModeSubset") -> "ModeSubset":
        self._check(other)
        return ModeSubset(self.n, self.members & other.members)

    def isdisjoint(self, other: "ModeSubset") -> bool:
        self._check(other)
        return self.members.isdisjoint(other.members)


@dataclass(frozen=True)
class TriplePartition:
    """Ordered split of E into disjoint (possibly empty) I, J, L."""

    I: ModeSubset
    J: ModeSubset
    L: ModeSubset

    def __post_init__(self) -> None:
        if not (self.I.isdisjoint(self.J) and self.I.isdisjoint(self.L) and self.J.isdisjoint(self.L)):
            raise InvalidParameterError("partition blocks must be pairwise disjoint")

    @property
    def E(self) -> ModeSubset:
        return self.I | self.J | self.L

    @property
    def n(self) -> int:
        return self.I.n

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> "TriplePartition":
        n = len(labels)
        if any(label not in LABELS for label in labels):
            raise InvalidParameterError(f"labels must be drawn from {LABELS}, got {list(labels)}")
        pick = lambda tag: ModeSubset(n, frozenset(j for j, label in enumerate(labels) if label == tag))  # noqa: E731
        return cls(pick("I"), pick("J"), pick("L"))

    def labels(self) -> str:
        out = []
        for j in range(self.n):
            out.append("I" if j in self.I else "J" if j in self.J else "L" if j in self.L else "-")
        return "".join(out)

    def describe(self) -> str:
        return f"E={sorted(self.E.members)} I={sorted(self.I.members)} J={sorted(self.J.members)} L={sorted(self.L.members)}"


def enumerate_partitions(n: int) -> List[TriplePartition]:
    """All 4^n assignments of modes to I, J, L or the complement of E, lexicographic."""
    return [TriplePartition.from_labels(labels) for labels in itertools.product(LABELS, repeat=n)]


def triple_partitions(E: ModeSubset) -> List[TriplePartition]:
    """Elements of P_3(E): ordered disjoint triples covering E."""
    members = sorted(E.members)
    out = []
    for blocks in itertools.product("IJL", repeat=len(members)):
        labels = ["-"] * E.n
        for j, tag in zip(members, blocks):
            labels[j] = tag
        out.append(TriplePartition.from_labels(labels))
    return out


@dataclass(frozen=True)
class P3Counts:
    p: int
    exact: int
    stirling_expression: int

    def to_dict(self) -> Dict[str, int]:
        return {"p": self.p, "exact": self.exact, "stirling_expression": self.stirling_expression}


def p3_counts(p: int) -> P3Counts:
    """|P_3(E)| for |E| = p by enumeration, next to 3!(1 + S(p,2) + S(p,3))."""
    if p < 0:
        raise InvalidParameterError("set size must be non-negative")
    exact = sum(1 for _ in itertools.product(range(3), repeat=p)) if p <= 10 else 3 ** p
    stirling = 6 * (1 + int(stirling2(p, 2, exact=True)) + int(stirling2(p, 3, exact=True)))
    logger.info("Partition count p=%s exact=%s stirling_expression=%s", p, exact, stirling)
    return P3Counts(p, exact, stirling)


def hybrid_kernel(Y: np.ndarray, Z: np.ndarray, I: ModeSubset, h: HLike) -> complex:
    """Integral kernel of the hybrid composition at (Y, Z), rows (x_j, ξ_j)."""
    hv = as_planck(h).h
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if Y.shape != Z.shape or Y.shape[0] != I.n:
        raise ModeMismatchError(f"kernel arguments of shape {Y.shape}, {Z.shape} for {I.n} modes")
    inside = list(I.members)
    outside = sorted(I.complement().members)
    k = len(inside)
    log_value = -2 * k * math.log(math.pi * hv) - 2 * (I.n - k) * math.log(2 * math.pi * hv)
    exponent = 0.0 + 0.0j
    if inside:
        exponent += -2j / hv * float(symplectic_form(Y[inside], Z[inside]))
    if outside:
        u = Y[outside, 0] + 1j * Y[outside, 1]
        v = Z[outside, 0] + 1j * Z[outside, 1]
        exponent += complex(np.sum(v * np.conj(u))) / (2 * hv)
        exponent -= float(np.sum(Y[outside] ** 2) + np.sum(Z[outside] ** 2)) / (2 * hv)
    return complex(np.exp(log_value + exponent))


def _require_modes(F, I: ModeSubset) -> None:
    if F.n_modes != I.n:
        raise ModeMismatchError(f"subset over {I.n} modes for a symbol with {F.n_modes} modes")


def hybrid_compose(A, B, I: ModeSubset, h: HLike):
    """Weyl composition on the modes of I, regularized composition elsewhere."""
    hp = as_planck(h)
    _require_modes(A, I)
    _require_modes(B, I)
    if isinstance(A, sy.TensorSymbol) and isinstance(B, sy.TensorSymbol):
        cache: Dict[Tuple[int, int, bool], ModeFunction] = {}
        factors = []
        for j, (a, b) in enumerate(zip(A.factors, B.factors)):
            key = (id(a), id(b), j in I)
            if key not in cache:
                cache[key] = weyl_star_mode(a, b, hp) if j in I else reg_compose(a, b, hp)
            factors.append(cache[key])
        return sy.TensorSymbol(tuple(factors), A.prefactor * B.prefactor)
    outside = I.complement().mask
    t = 0.25 * hp.h
    inner = weyl_star(sy.heat_modes(A, outside, t), sy.heat_modes(B, outside, t), hp)
    return sy.heat_modes(inner, outside, t)


def T_operator(F, I: ModeSubset, h: HLike):
    """prod_{j in I} (1 - e^{(h/4)Δ_j}) as a per-mode Fourier multiplier."""
    hp = as_planck(h)
    _require_modes(F, I)
    if not len(I):
        return F
    return sy.mode_multiplier(F, I.mask, lambda grid: 1.0 - pg.heat_multiplier(grid, 0.25 * hp.h))


def decomposition_term(A, B, part: TriplePartition, h: HLike):
    hp = as_planck(h)
    t = 0.25 * hp.h
    left = sy.heat_modes(T_operator(A, part.J, hp), part.L.mask, t)
    right = T_operator(B, part.L, hp)
    inner = hybrid_compose(left, right, part.E, hp)
    return sy.heat_modes(T_operator(inner, part.I, hp), (part.J | part.L).mask, t)


def _checked_term(A, B, part: TriplePartition, h: HLike):
    try:
        return decomposition_term(A, B, part, h)
    except AliasingError as exc:
        raise AliasingError(f"decomposition term {part.describe()} aliases: {exc}") from exc


@dataclass(frozen=True)
class DecompositionReport:
    n: int
    h: float
    term_count: int
    residual: float
    lattice_residual: float
    permuted_residual: float
    permutation_delta: float
    tol: float
    passed: bool
    terms: Tuple[str, ...] = ()
    term_sups: Tuple[float, ...] = ()
    partition_counts: Tuple[P3Counts, ...] = ()

    def to_dict(self) -> Dict[str, object]:
        return {
            "n": self.n,
            "h": self.h,
            "term_count": self.term_count,
            "residual": self.residual,
            "lattice_residual": self.lattice_residual,
            "permuted_residual": self.permuted_residual,
            "permutation_delta": self.permutation_delta,
            "tol": self.tol,
            "pass": self.passed,
            "terms": list(self.terms),
            "term_sups": list(self.term_sups),
            "partition_counts": [c.to_dict() for c in self.partition_counts],
        }


def decomposition_check(
    A,
    B,
    h: HLike,
    tol: float = DECOMPOSITION_TOL,
    seed: int = PERMUTATION_SEED,
    workers: int = 1,
    budget: int = sy.DEFAULT_LATTICE_BUDGET,
) -> DecompositionReport:
    """Compare C_h(A, B) with the sum of all 4^n decomposition terms."""
    hp = as_planck(h)
    if A.n_modes != B.n_modes:
        raise ModeMismatchError(f"mode counts differ: {A.n_modes} vs {B.n_modes}")
    n = A.n_modes
    if n > DECOMPOSITION_MAX_MODES:
        raise InvalidParameterError(f"decomposition check is limited to n <= {DECOMPOSITION_MAX_MODES}, got {n}")
    parts = enumerate_partitions(n)
    logger.info("Decomposition start n=%s h=%s terms=%s", n, hp.h, len(parts))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = list(pool.map(lambda part: _checked_term(A, B, part, hp), parts))
    else:
        terms = [_checked_term(A, B, part, hp) for part in parts]
    lhs = weyl_star(A, B, hp)
    grids = sy.grids_of(A)
    rhs = sy.sum_symbols(terms, grids)
    diff = sy.subtract(lhs, rhs)
    residual = sy.coefficient_l1(diff)
    lattice_residual = sy.lattice_sup(diff, budget).value

    order = np.random.default_rng(seed).permutation(len(terms))
    permuted = sy.sum_symbols([terms[i] for i in order], grids)
    permuted_residual = sy.coefficient_l1(sy.subtract(lhs, permuted))
    delta = abs(permuted_residual - residual)

    counts = tuple(p3_counts(p) for p in range(n + 1))
    expected = sum(int(comb(n, c.p, exact=True)) * c.exact for c in counts)
    if expected != len(parts):
        logger.warning("Decomposition term count mismatch enumerated=%s expected=%s", len(parts), expected)

    passed = residual <= tol and delta <= PERMUTATION_TOL
    if not passed:
        logger.warning(
            "Decomposition identity failed n=%s residual=%.3e permutation_delta=%.3e tol=%.1e",
            n,
            residual,
            delta,
            tol,
        )
    logger.info("Decomposition finish n=%s residual=%.3e", n, residual)
    return DecompositionReport(
        n=n,
        h=hp.h,
        term_count=len(parts),
        residual=residual,
        lattice_residual=lattice_residual,
        permuted_residual=permuted_residual,
        permutation_delta=delta,
        tol=tol,
        passed=passed,
        terms=tuple(p.labels() for p in parts),
        term_sups=tuple(sy.sup_norm(t, budget) for t in terms),
        partition_counts=counts,
    )


def _require_tensor(F, what: str) -> sy.TensorSymbol:
    if not isinstance(F, sy.TensorSymbol):
        raise SymbolFormError(f"{what} is defined for tensor symbols, got {type(F).__name__}")
    return F


def cell_integral(f: ModeFunction, refine: int = NORM_REFINE) -> float:
    """Riemann sum of |f| over one period cell."""
    values = f.refined_samples(refine) if refine > 1 else f.samples
    return float(np.mean(np.abs(values))) * f.grid.cell_measure


def n_norm(A, I: ModeSubset, refine: int = NORM_REFINE) -> float:
    """Integral over the I-variables (one period cell each) of the sup over the rest."""
    A = _require_tensor(A, "the partial-freeze norm")
    _require_modes(A, I)
    value = abs(A.prefactor)
    for j, f in enumerate(A.factors):
        value *= cell_integral(f, refine) if j in I else f.sup_norm(refine)
    return value


def _weighted_mode_factor(table: np.ndarray, h: float) -> float:
    m = table.shape[0] - 1
    orders = np.arange(m + 1)
    weights = np.sqrt(h) ** np.add.outer(orders, orders)
    return float(np.sum(weights * table))


def weighted_norm(F, I: ModeSubset, h: HLike, m: int = NORM_ORDER) -> float:
    """Sum over (α, β) supported in I, entries <= m, of h^{(|α|+|β|)/2} sup|∂^α_x ∂^β_ξ F|."""
    hv = as_planck(h).h
    _require_modes(F, I)
    if m < 0:
        raise InvalidParameterError("norm order must be non-negative")
    if isinstance(F, sy.TensorSymbol):
        cache: Dict[Tuple[int, bool], float] = {}
        value = abs(F.prefactor)
        for j, f in enumerate(F.factors):
            key = (id(f), j in I)
            if key not in cache:
                cache[key] = _weighted_mode_factor(sy.derivative_table(f, m), hv) if j in I else f.sup_norm()
            value *= cache[key]
        return value
    inside = sorted(I.members)
    total = 0.0
    orders = range(m + 1)
    for alpha_in in itertools.product(orders, repeat=len(inside)):
        for beta_in in itertools.product(orders, repeat=len(inside)):
            alpha = [0] * F.n_modes
            beta = [0] * F.n_modes
            for j, a, b in zip(inside, alpha_in, beta_in):
                alpha[j], beta[j] = a, b
            weight = hv ** (0.5 * (sum(alpha) + sum(beta)))
            total += weight * sy.sup_norm(sy.derivative(F, alpha, beta))
    return total


@dataclass(frozen=True)
class BoundReport:
    experiment: str
    n: int
    h: float
    lhs: float
    rhs: float
    log_lhs: float
    log_rhs: float
    per_mode_factors: Tuple[float, ...]
    fitted_constant: float
    passed: bool
    details: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return {
            "experiment": self.experiment,
            "n": self.n,
            "h": self.h,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "log_lhs": self.log_lhs,
            "log_rhs": self.log_rhs,
            "per_mode_factors": list(self.per_mode_factors),
            "fitted_constant": self.fitted_constant,
            "pass": self.passed,
            "details": dict(self.details),
        }

    def row(self) -> Dict[str, object]:
        return {"n": self.n, "h": self.h, "lhs": self.lhs, "rhs": self.rhs, "fitted_constant": self.fitted_constant}


def _safe_exp(value: float) -> float:
    if value == float("-inf"):
        return 0.0
    return math.exp(value) if value < 700.0 else float("inf")


def _safe_log(value: float) -> float:
    return math.log(value) if value > 0 else float("-inf")


def _within(lhs: float, rhs: float, slack: float = BOUND_SLACK) -> bool:
    return lhs <= rhs + slack * max(1.0, abs(rhs))


def _log_within(log_lhs: float, log_rhs: float, slack: float = BOUND_SLACK) -> bool:
    if log_lhs == float("-inf"):
        return True
    return log_lhs <= log_rhs + slack * max(1.0, abs(log_rhs))


@dataclass(frozen=True)
class ModeFamily:
    """One mode of a tensor corpus: the factors of A and B with their class weights."""

    a: ModeFunction
    b: ModeFunction
    rho: float
    delta: float
    label: str = ""


@dataclass(frozen=True)
class FamilyStats:
    composed_sup: float
    M_a: float
    M_b: float
    t: float


def family_stats(family: ModeFamily, h: float, m: int = CLASS_ORDER) -> FamilyStats:
    t = h * family.rho * family.delta
    if t > 1.0:
        raise HypothesisViolationError(
            f"h*rho*delta = {t:.6g} > 1 for mode family {family.label or '?'} (h={h}, rho={family.rho}, delta={family.delta})"
        )
    composed = weyl_star_mode(family.a, family.b, h)
    spec = (family.rho,), (family.delta,)
    M_a = sy.class_norms(sy.TensorSymbol((family.a,)), m).minimal_M(*spec)
    M_b = sy.class_norms(sy.TensorSymbol((family.b,)), m).minimal_M(*spec)
    return FamilyStats(composed.sup_norm(NORM_REFINE), M_a, M_b, t)


def fit_product_constant(stats: FamilyStats) -> float:
    """Smallest K with s <= M M' (1 + K t) for one mode."""
    base = stats.M_a * stats.M_b
    if base == 0.0:
        return 0.0 if stats.composed_sup == 0.0 else float("inf")
    if stats.t == 0.0:
        return 0.0
    return max(0.0, (stats.composed_sup / base - 1.0) / stats.t)


def identical_family(a: ModeFunction, b: ModeFunction, rho: float = 1.0, delta: float = 1.0) -> Callable[[int], ModeFamily]:
    family = ModeFamily(a, b, rho, delta, "identical")
    return lambda j: family


@lru_cache(maxsize=None)
def _heterogeneous_mode(k: int, amplitude: float, Q: int) -> ModeFamily:
    kx = (k + 1) // 2
    kxi = k - kx
    grid = Grid2D((2 ** max(kx, kxi)) * math.pi, Q)
    rho, delta = 2.0 ** -kx, 2.0 ** -kxi
    f = ModeFunction.from_callable(grid, lambda x, xi: 1.0 + amplitude * np.sin(rho * x) * np.sin(delta * xi))
    return ModeFamily(f, f, rho, delta, f"2^-{k}")


def heterogeneous_family(amplitude: float = 0.3, Q: int = 16) -> Callable[[int], ModeFamily]:
    """Mode j (1-based) carries 1 + c sin(ρ_j x) sin(δ_j ξ) with ρ_j δ_j = 2^-min(j, 12)."""
    return lambda j: _heterogeneous_mode(min(j, HETEROGENEOUS_CAP), float(amplitude), int(Q))


def bound_experiment_thm12(
    families: Callable[[int], ModeFamily],
    h: HLike,
    n_list: Sequence[int] = DEFAULT_N_LIST,
    m: int = CLASS_ORDER,
    label: str = "corpus",
) -> List[BoundReport]:
    """Fit K on mode 1 and check sup|C_h(A,B)| <= M M' prod (1 + K h ρ_j δ_j) for each n."""
    hv = as_planck(h).h
    if not n_list or min(n_list) < 1:
        raise InvalidParameterError("mode counts must be positive")
    cache: Dict[int, FamilyStats] = {}

    def _stats(j: int) -> FamilyStats:
        family = families(j)
        if id(family) not in cache:
            cache[id(family)] = family_stats(family, hv, m)
        return cache[id(family)]

    K = fit_product_constant(_stats(1))
    logger.info("Product bound fit corpus=%s h=%s K=%.6g", label, hv, K)
    reports = []
    for n in n_list:
        log_lhs = 0.0
        log_rhs = 0.0
        factors = []
        for j in range(1, n + 1):
            st = _stats(j)
            log_lhs += _safe_log(st.composed_sup)
            factor = 1.0 + K * st.t
            factors.append(factor)
            log_rhs += _safe_log(st.M_a * st.M_b) + math.log1p(K * st.t)
        passed = _log_within(log_lhs, log_rhs)
        if not passed:
            logger.warning("Product bound violated corpus=%s n=%s log_lhs=%.12g log_rhs=%.12g", label, n, log_lhs, log_rhs)
        reports.append(
            BoundReport(
                experiment="thm12",
                n=n,
                h=hv,
                lhs=_safe_exp(log_lhs),
                rhs=_safe_exp(log_rhs),
                log_lhs=log_lhs,
                log_rhs=log_rhs,
                per_mode_factors=tuple(factors),
                fitted_constant=K,
                passed=passed,
                details={"corpus": label, "class_order": m},
            )
        )
    return reports


def bound_experiment_lemma41(
    A,
    B,
    E: ModeSubset,
    h: HLike,
    constant: float = 1.0,
    m: int = NORM_ORDER,
) -> BoundReport:
    """sup|C^{hyb,E}(A,B)| against K0^{|E|} N^{(m)}_E(A) N^{(m)}_E(B), with the minimal K0 reported."""
    hv = as_planck(h).h
    composed = hybrid_compose(A, B, E, hv)
    lhs = sy.sup_norm(composed)
    base = weighted_norm(A, E, hv, m) * weighted_norm(B, E, hv, m)
    size = len(E)
    if size:
        fitted = (lhs / base) ** (1.0 / size) if base > 0 else float("inf")
    else:
        fitted = 1.0
    rhs = constant ** size * base
    passed = _within(lhs, rhs)
    if not passed:
        logger.warning("Hybrid norm bound failed E=%s lhs=%.6g rhs=%.6g fitted=%.6g", E.to_mask(), lhs, rhs, fitted)
    return BoundReport(
        experiment="lemma41",
        n=E.n,
        h=hv,
        lhs=lhs,
        rhs=rhs,
        log_lhs=_safe_log(lhs),
        log_rhs=_safe_log(rhs),
        per_mode_factors=(),
        fitted_constant=fitted,
        passed=passed,
        details={"E": E.to_mask(), "norm_order": m, "configured_constant": constant, "norm_product": base},
    )


def bound_experiment_prop23(A, B, I: ModeSubset, h: HLike, refine: int = NORM_REFINE) -> BoundReport:
    """sup|C^{hyb,I}(A,B)| <= (πh)^{-2|I|} N_I(A) N_I(B), cell-measure integrals."""
    hv = as_planck(h).h
    lhs = sy.sup_norm(hybrid_compose(A, B, I, hv))
    rhs = (math.pi * hv) ** (-2 * len(I)) * n_norm(A, I, refine) * n_norm(B, I, refine)
    passed = _within(lhs, rhs)
    return BoundReport(
        experiment="prop23",
        n=I.n,
        h=hv,
        lhs=lhs,
        rhs=rhs,
        log_lhs=_safe_log(lhs),
        log_rhs=_safe_log(rhs),
        per_mode_factors=(),
        fitted_constant=lhs / rhs if rhs > 0 else 0.0,
        passed=passed,
        details={"I": I.to_mask(), "integral": "period cell"},
    )


def bound_experiment_prop42(
    A,
    B,
    eps: Sequence[float],
    h: HLike,
    constant: Optional[float] = None,
    m: int = CLASS_ORDER,
) -> BoundReport:
    """Every decomposition term against M M' (K h)^{|E|} prod_{j in E} ε_j^2, K fitted over terms."""
    hv = as_planck(h).h
    A = _require_tensor(A, "the term bound experiment")
    B = _require_tensor(B, "the term bound experiment")
    n = A.n_modes
    eps = tuple(float(e) for e in eps)
    if len(eps) != n:
        raise ModeMismatchError(f"{len(eps)} weights for {n} modes")
    if any(hv * e * e > 1.0 for e in eps):
        raise HypothesisViolationError(f"h*eps_j^2 > 1 for some mode (h={hv}, eps={list(eps)})")
    spec = sy.SymbolClassSpec(m, 0.0, eps, eps)
    M_a = sy.class_norms(A, m).minimal_M(spec.rho, spec.delta)
    M_b = sy.class_norms(B, m).minimal_M(spec.rho, spec.delta)
    base = M_a * M_b
    fitted = 0.0
    worst_ratio = 0.0
    term_rows = []
    for part in enumerate_partitions(n):
        sup = sy.sup_norm(_checked_term(A, B, part, hv))
        size = len(part.E)
        scale = base * math.prod(eps[j] ** 2 for j in part.E)
        if size == 0:
            worst_ratio = max(worst_ratio, sup / base if base > 0 else 0.0)
        elif sup > 0:
            fitted = max(fitted, (sup / scale) ** (1.0 / size) / hv if scale > 0 else float("inf"))
        term_rows.append({"labels": part.labels(), "sup": sup, "scale": scale})
    K = fitted if constant is None else constant
    lhs = max(row["sup"] for row in term_rows)
    passed = worst_ratio <= 1.0 + BOUND_SLACK
    for row in term_rows:
        size = sum(1 for c in row["labels"] if c != "-")
        bound = row["scale"] * (K * hv) ** size if size else base
        row["bound"] = bound
        passed = passed and _within(row["sup"], bound)
    rhs = max(row["bound"] for row in term_rows)
    if not passed:
        logger.warning("Term bound failed n=%s K=%.6g", n, K)
    return BoundReport(
        experiment="prop42",
        n=n,
        h=hv,
        lhs=lhs,
        rhs=rhs,
        log_lhs=_safe_log(lhs),
        log_rhs=_safe_log(rhs),
        per_mode_factors=tuple(1.0 + K * hv * e * e for e in eps),
        fitted_constant=fitted,
        passed=passed,
        details={"M": M_a, "M_prime": M_b, "terms": term_rows},
    )


def _mode_points(points: np.ndarray, n: int) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 2:
        pts = pts[None, ...]
    if pts.shape[1:] != (n, 2):
        raise ModeMismatchError(f"points must have shape (P, {n}, 2), got {pts.shape}")
    return pts


def hybrid_quadrature(
    A: sy.TensorSymbol,
    B: sy.TensorSymbol,
    I: ModeSubset,
    h: HLike,
    points: np.ndarray,
    factor_a: Optional[Sequence[object]] = None,
    factor_b: Optional[Sequence[object]] = None,
    quad: Optional[QuadratureSpec] = None,
) -> QuadratureResult:
    """Mixed-kernel quadrature of C^{hyb,I}, mode by mode.

    The kernel factorizes for tensor symbols, so each mode contributes one
    four-dimensional integral: Weyl kernel on I (operands must decay; pass
    decaying stand-ins through ``factor_a``/``factor_b``), Gaussian kernel
    elsewhere.
    """
    hp = as_planck(h)
    A = _require_tensor(A, "hybrid quadrature")
    B = _require_tensor(B, "hybrid quadrature")
    _require_modes(A, I)
    pts = _mode_points(points, A.n_modes)
    fa = list(factor_a) if factor_a is not None else list(A.factors)
    fb = list(factor_b) if factor_b is not None else list(B.factors)
    values = np.full(pts.shape[0], A.prefactor * B.prefactor, dtype=complex)
    per_mode: List[QuadratureResult] = []
    for j in range(A.n_modes):
        if j in I:
            result = weyl_star_quadrature(fa[j], fb[j], hp, pts[:, j, :], quad)
        else:
            result = reg_compose_kernel_quadrature(fa[j], fb[j], hp, pts[:, j, :])
        per_mode.append(result)
        values = values * result.values
    mags = [float(np.max(np.abs(r.values))) for r in per_mode]
    error = 0.0
    for j, r in enumerate(per_mode):
        error += r.error_estimate * max(1.0, mags[j]) * math.prod(mags[:j] + mags[j + 1:])
    flagged = any(r.flagged for r in per_mode)
    nodes = max(r.nodes for r in per_mode)
    return QuadratureResult(values, error, nodes, flagged)


def subsets(n: int) -> Iterable[ModeSubset]:
    for mask in itertools.product((False, True), repeat=n):
        yield ModeSubset(n, frozenset(j for j, flag in enumerate(mask) if flag))
