from __future__ import annotations

import math

import numpy as np
import pytest

from app.calculus import symbols as sy
from app.core.errors import InvalidParameterError, ModeMismatchError, SymbolFormError
from conftest import bump, sin_sin, sin_x, sin_xi, trig

REL_TOL = 1e-12


def test_tensor_symbol_needs_factors():
    with pytest.raises(SymbolFormError):
        sy.TensorSymbol(())


def test_tensor_evaluate_is_a_product(grid):
    F = sy.tensor_symbol([sin_x(grid), sin_xi(grid)], prefactor=2.0)
    points = np.array([[[0.3, 0.1], [0.2, 1.1]]])
    expected = 2.0 * math.sin(0.3) * math.sin(1.1)
    np.testing.assert_allclose(F.evaluate(points), [expected], atol=1e-14)
    with pytest.raises(ModeMismatchError):
        F.evaluate(np.zeros((1, 3, 2)))


def test_tensor_sup_norm_of_many_modes(grid):
    factor = bump(grid, 0.5)
    F = sy.replicate(factor, 100)
    assert sy.sup_norm(F) == pytest.approx(1.5 ** 100, rel=REL_TOL)
    assert sy.log_sup_norm(F) == pytest.approx(100 * math.log(1.5), rel=REL_TOL)
    assert sy.lattice_sup(F).method == "factorized"


def test_dense_and_tensor_forms_agree(small_grid):
    F = sy.tensor_symbol([bump(small_grid), sin_sin(small_grid)])
    D = sy.to_dense(F)
    assert sy.sup_norm(D) == pytest.approx(sy.sup_norm(F), rel=REL_TOL)
    tensor_norms = sy.class_norms(F, 2)
    dense_norms = sy.class_norms(D, 2)
    assert not dense_norms.factorized
    for key in tensor_norms:
        assert dense_norms[key] == pytest.approx(tensor_norms[key], rel=1e-10, abs=1e-13)


def test_dense_form_is_capped(grid):
    with pytest.raises(SymbolFormError):
        sy.to_dense(sy.replicate(sin_x(grid), 4))


def test_canonical_sum_and_difference_cancel(grid):
    F = sy.tensor_symbol([sin_x(grid), bump(grid)])
    zero = sy.subtract(F, F)
    assert sy.coefficient_l1(zero) == pytest.approx(0.0, abs=1e-15)
    doubled = sy.add(F, F)
    assert sy.sup_norm(doubled) == pytest.approx(2 * sy.sup_norm(F), rel=REL_TOL)


def test_conjugate_tensor(grid):
    F = sy.tensor_symbol([trig(grid, {(1, 1): 1.0j})], prefactor=1.0 + 1.0j)
    G = sy.conjugate(F)
    points = np.array([[[0.7, -0.4]]])
    np.testing.assert_allclose(G.evaluate(points), np.conj(F.evaluate(points)), atol=1e-14)


def test_derivative_multi_index(grid):
    F = sy.tensor_symbol([sin_x(grid), sin_xi(grid)])
    d = sy.derivative(F, (1, 0), (0, 1))
    assert sy.sup_norm(d) == pytest.approx(1.0, rel=REL_TOL)
    assert sy.derivative(F, (0, 1), (0, 0)).is_zero
    with pytest.raises(ModeMismatchError):
        sy.derivative(F, (1,), (0,))


def test_heat_modes_only_touch_selected_modes(grid):
    F = sy.tensor_symbol([sin_x(grid), sin_x(grid)])
    G = sy.heat_modes(F, (True, False), 0.5)
    assert sy.sup_norm(G) == pytest.approx(math.exp(-0.5), rel=REL_TOL)
    np.testing.assert_allclose(G.factors[1].coeffs, F.factors[1].coeffs)


def test_certify_reports_first_violation(corpus, grid):
    F = corpus.get_symbol("sin2x_sinxi", grid=grid)
    failing = sy.certify_class(F, sy.SymbolClassSpec(2, 1.0, (1.0,), (1.0,)))
    assert not failing.passed
    assert failing.violation == ((1,), (0,))
    assert failing.violation_sup == pytest.approx(2.0, rel=REL_TOL)
    assert failing.violation_bound == pytest.approx(1.0)

    passing = sy.certify_class(F, sy.SymbolClassSpec(2, 1.0, (2.0,), (1.0,)))
    assert passing.passed
    assert passing.minimal_M == pytest.approx(1.0, rel=REL_TOL)


def test_zero_weights_allow_vanishing_derivatives(corpus, grid):
    F = corpus.get_symbol("sin_x", grid=grid)
    cert = sy.certify_class(F, sy.SymbolClassSpec(3, 1.0, (1.0,), (0.0,)))
    assert cert.passed
    G = corpus.get_symbol("sin_xi", grid=grid)
    assert not sy.certify_class(G, sy.SymbolClassSpec(3, 1.0, (1.0,), (0.0,))).passed


def test_class_norms_key_bounds(grid):
    norms = sy.class_norms(sy.tensor_symbol([sin_x(grid), sin_xi(grid)]), 2)
    assert len(norms) == 3 ** 4
    with pytest.raises(KeyError):
        norms[((3, 0), (0, 0))]
    with pytest.raises(InvalidParameterError):
        sy.class_norms(sy.tensor_symbol([sin_x(grid)]), sy.MAX_CLASS_ORDER + 1)


def test_class_spec_validation_and_replication():
    with pytest.raises(InvalidParameterError):
        sy.SymbolClassSpec(2, 1.0, (1.0,), (1.0, 1.0))
    with pytest.raises(InvalidParameterError):
        sy.SymbolClassSpec(2, -1.0, (1.0,), (1.0,))
    spec = sy.SymbolClassSpec(4, 1.5, (1.0,), (2.0,)).replicate(3)
    assert spec.M == pytest.approx(1.5 ** 3)
    assert spec.rho == (1.0, 1.0, 1.0)
    assert spec.weight((1, 0, 0), (0, 2, 0)) == pytest.approx(4.0)


def test_canonical_sup_uses_strided_lattice_over_budget(grid):
    F = sy.add(sy.replicate(bump(grid), 2), sy.replicate(sin_sin(grid), 2))
    full = sy.lattice_sup(F)
    strided = sy.lattice_sup(F, budget=(grid.Q // 2) ** 4)
    assert full.method == "full"
    assert strided.method == "strided"
    assert strided.value <= full.value + 1e-12


def test_telescoping_bound_matches_hand_sum():
    value = sy.telescoping_bound([2.0, 3.0], [1.0, 1.5], [0.1, 0.2])
    assert value == pytest.approx(0.1 * 1.5 + 2.0 * 0.2)
