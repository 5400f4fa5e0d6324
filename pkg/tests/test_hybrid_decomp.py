from __future__ import annotations

import math

import numpy as np
import pytest

from app.calculus import symbols as sy
from app.calculus.gauss_wick import reg_compose
from app.calculus.hybrid_decomp import (
    ModeSubset,
    TriplePartition,
    T_operator,
    bound_experiment_lemma41,
    bound_experiment_prop23,
    bound_experiment_prop42,
    bound_experiment_thm12,
    decomposition_check,
    enumerate_partitions,
    family_stats,
    fit_product_constant,
    FamilyStats,
    heterogeneous_family,
    hybrid_compose,
    hybrid_kernel,
    identical_family,
    n_norm,
    p3_counts,
    subsets,
    triple_partitions,
    weighted_norm,
)
from app.calculus.phase_grid import ModeFunction
from app.calculus.star_core import weyl_star
from app.core.errors import HypothesisViolationError, InvalidParameterError, ModeMismatchError
from conftest import bump, sin_sin, sin_x


def test_mode_subset_masks_read_left_to_right():
    subset = ModeSubset.from_mask("101")
    assert subset.members == frozenset({0, 2})
    assert subset.to_mask() == "101"
    assert subset.complement().to_mask() == "010"
    assert len(subset) == 2 and 2 in subset and 1 not in subset
    assert list(subset) == [0, 2]


@pytest.mark.parametrize("mask", ["", "12", "1a0"])
def test_mode_subset_rejects_bad_masks(mask):
    with pytest.raises(InvalidParameterError):
        ModeSubset.from_mask(mask)


def test_mode_subset_operations_check_the_mode_count():
    with pytest.raises(ModeMismatchError):
        ModeSubset.full(2) | ModeSubset.full(3)
    with pytest.raises(InvalidParameterError):
        ModeSubset(2, frozenset({2}))


def test_partition_blocks_must_be_disjoint():
    with pytest.raises(InvalidParameterError):
        TriplePartition(ModeSubset.from_mask("10"), ModeSubset.from_mask("11"), ModeSubset.empty(2))
    part = TriplePartition.from_labels("IJ-L")
    assert part.labels() == "IJ-L"
    assert part.E.to_mask() == "1101"


def test_partition_enumeration_counts():
    assert len(enumerate_partitions(2)) == 16
    assert len(triple_partitions(ModeSubset.from_mask("1011"))) == 27
    assert len(list(subsets(3))) == 8


@pytest.mark.parametrize("p, exact, stirling", [(0, 1, 6), (1, 3, 6), (2, 9, 12), (3, 27, 30)])
def test_partition_count_against_stirling_expression(p, exact, stirling):
    counts = p3_counts(p)
    assert counts.exact == exact == 3 ** p
    assert counts.stirling_expression == stirling


def test_hybrid_kernel_values():
    empty = ModeSubset.empty(1)
    value = hybrid_kernel(np.array([2.0, 0.0]), np.array([0.0, 0.0]), empty, 1.0)
    assert value == pytest.approx((2 * math.pi) ** -2 * math.exp(-2.0))
    full = ModeSubset.full(1)
    h = 0.5
    assert hybrid_kernel(np.zeros(2), np.zeros(2), full, h) == pytest.approx((math.pi * h) ** -2)
    with pytest.raises(ModeMismatchError):
        hybrid_kernel(np.zeros(4), np.zeros(4), full, h)


def test_hybrid_composition_interpolates_weyl_and_regularized(grid):
    A = sy.tensor_symbol([bump(grid), sin_sin(grid)])
    B = sy.tensor_symbol([sin_sin(grid), bump(grid)])
    h = 0.4
    full = hybrid_compose(A, B, ModeSubset.full(2), h)
    assert sy.coefficient_l1(sy.subtract(full, weyl_star(A, B, h))) <= 1e-14
    mixed = hybrid_compose(A, B, ModeSubset.from_mask("10"), h)
    np.testing.assert_allclose(mixed.factors[1].coeffs, reg_compose(A.factors[1], B.factors[1], h).coeffs, atol=1e-15)


def test_hybrid_composition_on_dense_symbols(small_grid):
    A = sy.tensor_symbol([bump(small_grid), sin_sin(small_grid)])
    B = sy.tensor_symbol([sin_sin(small_grid), bump(small_grid)])
    I = ModeSubset.from_mask("01")
    tensor = hybrid_compose(A, B, I, 0.3)
    dense = hybrid_compose(sy.to_dense(A), sy.to_dense(B), I, 0.3)
    np.testing.assert_allclose(sy.to_dense(tensor).coeffs, dense.coeffs, atol=1e-13)


def test_T_operator_kills_the_mean_on_its_modes(grid):
    A = sy.replicate(bump(grid), 2)
    assert T_operator(A, ModeSubset.empty(2), 0.5) is A
    killed = T_operator(sy.replicate(bump(grid), 1), ModeSubset.full(1), 0.5)
    assert killed.factors[0].coeffs[grid.half, grid.half] == 0


def test_decomposition_identity(corpus):
    A = corpus.get_symbol("bump", 2)
    report = decomposition_check(A, A, 0.2)
    assert report.passed
    assert report.term_count == 16
    assert report.residual <= 1e-8
    assert report.permutation_delta <= 1e-12
    assert [c.exact for c in report.partition_counts] == [1, 3, 9]


def test_decomposition_identity_parallel_matches_serial(corpus):
    A, B = corpus.get_symbol("bump", 2), corpus.get_symbol("half_bump", 2)
    serial = decomposition_check(A, B, 0.3)
    threaded = decomposition_check(A, B, 0.3, workers=4)
    assert threaded.residual == pytest.approx(serial.residual, abs=1e-15)
    assert threaded.terms == serial.terms


def test_decomposition_is_limited_to_three_modes(grid):
    A = sy.replicate(bump(grid), 4)
    with pytest.raises(InvalidParameterError):
        decomposition_check(A, A, 0.2)


def test_empty_subset_fits_unit_constant(corpus):
    A = corpus.get_symbol("bump", 2)
    report = bound_experiment_lemma41(A, A, ModeSubset.empty(2), 0.5)
    assert report.fitted_constant == 1.0
    assert report.passed


def test_partial_freeze_norm_of_the_unit(grid):
    one = sy.replicate(ModeFunction.constant(grid), 2)
    assert n_norm(one, ModeSubset.from_mask("10")) == pytest.approx((2 * math.pi) ** 2, rel=1e-12)
    assert n_norm(one, ModeSubset.empty(2)) == pytest.approx(1.0)


@pytest.mark.parametrize(
    "make, m, expected",
    [
        (sin_x, 1, 1.5),
        (sin_sin, 4, 1.9375 ** 2),
    ],
)
def test_weighted_norm_values(grid, make, m, expected):
    F = sy.replicate(make(grid), 1)
    assert weighted_norm(F, ModeSubset.full(1), 0.25, m) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("c", [2.5, -0.4j])
def test_fitted_constants_do_not_change_when_a_factor_is_scaled(corpus, c):
    A = corpus.get_symbol("bump", 2)
    cA = A.with_prefactor(c * A.prefactor)
    I = ModeSubset.from_mask("10")
    plain, scaled = bound_experiment_lemma41(A, A, I, 0.5), bound_experiment_lemma41(cA, A, I, 0.5)
    assert scaled.lhs == pytest.approx(abs(c) * plain.lhs, rel=1e-10)
    assert scaled.fitted_constant == pytest.approx(plain.fitted_constant, rel=1e-10)
    plain, scaled = bound_experiment_prop23(A, A, I, 0.5), bound_experiment_prop23(cA, A, I, 0.5)
    assert scaled.fitted_constant == pytest.approx(plain.fitted_constant, rel=1e-10)
    plain, scaled = bound_experiment_prop42(A, A, (1.0, 1.0), 0.5), bound_experiment_prop42(cA, A, (1.0, 1.0), 0.5)
    assert scaled.details["M"] == pytest.approx(abs(c) * plain.details["M"], rel=1e-10)
    assert scaled.fitted_constant == pytest.approx(plain.fitted_constant, rel=1e-10)
    assert scaled.passed


@pytest.mark.parametrize("mask", ["00", "10", "01", "11"])
def test_hybrid_norm_bounds_hold(corpus, mask):
    A = corpus.get_symbol("bump", 2)
    I = ModeSubset.from_mask(mask)
    assert bound_experiment_lemma41(A, A, I, 0.5).passed
    prop = bound_experiment_prop23(A, A, I, 0.5)
    assert prop.passed
    assert prop.row()["fitted_constant"] <= 1.0


def test_term_bounds_with_fitted_constant(corpus):
    A = corpus.get_symbol("bump", 2)
    report = bound_experiment_prop42(A, A, (1.0, 1.0), 0.5)
    assert report.passed
    assert len(report.details["terms"]) == 16
    with pytest.raises(HypothesisViolationError):
        bound_experiment_prop42(A, A, (2.0, 1.0), 0.5)


def test_product_bound_is_dimension_free_for_heterogeneous_modes():
    reports = bound_experiment_thm12(heterogeneous_family(), 0.5, (1, 2, 4, 8, 64))
    assert all(r.passed for r in reports)
    assert len({r.fitted_constant for r in reports}) == 1
    assert reports[-1].rhs < math.inf


def test_product_bound_for_identical_modes(corpus):
    a = corpus.get_factor("bump")
    reports = bound_experiment_thm12(identical_family(a, a), 0.5, (1, 16, 256))
    assert all(r.passed for r in reports)
    assert reports[1].log_lhs == pytest.approx(16 * reports[0].log_lhs, rel=1e-12)


def test_family_hypothesis_is_enforced(corpus):
    a = corpus.get_factor("bump")
    with pytest.raises(HypothesisViolationError):
        family_stats(identical_family(a, a, rho=2.0, delta=1.0)(1), 0.75)


def test_fit_product_constant_edge_cases():
    assert fit_product_constant(FamilyStats(0.0, 0.0, 1.0, 0.5)) == 0.0
    assert fit_product_constant(FamilyStats(1.0, 0.0, 1.0, 0.5)) == math.inf
    assert fit_product_constant(FamilyStats(1.5, 1.0, 1.0, 0.25)) == pytest.approx(2.0)
    assert fit_product_constant(FamilyStats(0.5, 1.0, 1.0, 0.25)) == 0.0


@pytest.mark.slow
def test_decomposition_identity_in_three_modes(corpus):
    A, B = corpus.get_symbol("bump", 3), corpus.get_symbol("half_bump", 3)
    report = decomposition_check(A, B, 0.2, workers=4)
    assert report.term_count == 64
    assert report.passed
