from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from app.calculus import phase_grid as pg
from app.calculus import symbols as sy
from app.calculus.phase_grid import Grid2D, ModeFunction
from app.calculus.star_core import (
    GaussianWindowed,
    PlanckParam,
    QuadratureSpec,
    dilation_residual,
    gaussian_star_closed_form,
    leibniz_residual,
    symplectic_form,
    weyl_star,
    weyl_star_mode,
    weyl_star_quadrature,
)
from app.core.errors import InvalidParameterError, ModeMismatchError, NonDecayingInputError
from app.services.corpus import random_unit_mode_functions
from conftest import bump, sin_sin, sin_x, sin_xi, trig

STAR_TOL = 1e-12
ORACLE_TOL = 1e-8
PROBES = np.array([[0.0, 0.0], [0.3, 0.2], [-0.5, 0.4]])


def test_symplectic_form_convention():
    assert symplectic_form(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(-1.0)
    assert symplectic_form(np.array([0.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(1.0)


@pytest.mark.parametrize("h", [0.1, 0.5, 2.0])
def test_plane_waves_pick_up_the_symplectic_phase(grid, h):
    a = ModeFunction.plane_wave(grid, 1, 0)
    b = ModeFunction.plane_wave(grid, 0, 1)
    c = weyl_star_mode(a, b, h)
    assert c.terms() == pytest.approx({(1, 1): complex(np.exp(-0.5j * h))})
    reverse = weyl_star_mode(b, a, h)
    assert reverse.terms() == pytest.approx({(1, 1): complex(np.exp(0.5j * h))})


def test_constant_one_is_the_unit(grid):
    one = ModeFunction.constant(grid)
    b = bump(grid)
    np.testing.assert_allclose(weyl_star_mode(one, b, 0.7).coeffs, b.coeffs, atol=STAR_TOL)
    np.testing.assert_allclose(weyl_star_mode(b, one, 0.7).coeffs, b.coeffs, atol=STAR_TOL)


@settings(max_examples=20, deadline=None)
@given(h=st.floats(min_value=0.05, max_value=2.0), seed=st.integers(min_value=0, max_value=10_000))
def test_composition_is_associative(h, seed):
    grid = Grid2D(math.pi, 32)
    a, b, c = random_unit_mode_functions(grid, 3, seed, max_freq=2)
    left = weyl_star_mode(weyl_star_mode(a, b, h), c, h)
    right = weyl_star_mode(a, weyl_star_mode(b, c, h), h)
    np.testing.assert_allclose(left.coeffs, right.coeffs, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(h=st.floats(min_value=0.05, max_value=2.0), seed=st.integers(min_value=0, max_value=10_000))
def test_adjoint_reverses_order(h, seed):
    grid = Grid2D(math.pi, 32)
    a, b = random_unit_mode_functions(grid, 2, seed)
    lhs = weyl_star_mode(a, b, h).conj()
    rhs = weyl_star_mode(b.conj(), a.conj(), h)
    np.testing.assert_allclose(lhs.coeffs, rhs.coeffs, atol=1e-12)


@pytest.mark.parametrize("h", [0.1, 0.5])
def test_first_order_deviation_from_pointwise_product(small_grid, h):
    a, b = sin_x(small_grid), sin_xi(small_grid)
    deviation = weyl_star_mode(a, b, h) - pg.multiply(a, b)
    assert deviation.sup_norm() == pytest.approx(math.sin(h / 2), rel=1e-12)


def test_tensor_composition_factorizes(small_grid):
    A = sy.tensor_symbol([sin_sin(small_grid), bump(small_grid)])
    B = sy.tensor_symbol([bump(small_grid), trig(small_grid, {(2, 1): 0.5, (-2, -1): 0.5})])
    h = 0.4
    tensor = weyl_star(A, B, h)
    assert isinstance(tensor, sy.TensorSymbol)
    dense = weyl_star(sy.to_dense(A), sy.to_dense(B), h)
    diff = sy.to_dense(tensor).coeffs - dense.coeffs
    assert float(np.max(np.abs(diff))) <= 1e-13


def test_composition_is_bilinear_over_canonical_sums(grid):
    A1 = sy.tensor_symbol([sin_x(grid), bump(grid)])
    A2 = sy.tensor_symbol([bump(grid), sin_xi(grid)])
    B = sy.tensor_symbol([sin_sin(grid), bump(grid)])
    h = 0.3
    summed = weyl_star(sy.add(A1, A2), B, h)
    separate = sy.add(weyl_star(A1, B, h), weyl_star(A2, B, h))
    assert sy.coefficient_l1(sy.subtract(summed, separate)) <= STAR_TOL


def test_mode_count_must_match(grid):
    with pytest.raises(ModeMismatchError):
        weyl_star(sy.replicate(bump(grid), 2), sy.replicate(bump(grid), 3), 0.5)
    with pytest.raises(ModeMismatchError):
        weyl_star_mode(bump(grid), bump(Grid2D(math.pi, 16)), 0.5)


@pytest.mark.parametrize("mode, axis", [(0, "x"), (0, "xi"), (1, "x"), (1, "xi")])
def test_leibniz_rule(grid, mode, axis):
    A = sy.tensor_symbol([sin_sin(grid), bump(grid)])
    B = sy.tensor_symbol([bump(grid), sin_sin(grid)])
    assert leibniz_residual(A, B, 0.6, mode, axis) <= STAR_TOL


def test_symplectic_dilation_commutes_with_composition(grid):
    A = sy.tensor_symbol([sin_sin(grid, 1, 2)])
    B = sy.tensor_symbol([trig(grid, {(1, 2): 0.25, (1, -2): 0.25, (-1, 2): 0.25, (-1, -2): 0.25})])
    assert dilation_residual(A, B, 0.5, pg.DilationWeights((2.0,))) <= STAR_TOL


def test_planck_parameter():
    with pytest.raises(InvalidParameterError):
        PlanckParam(0.0)
    with pytest.raises(InvalidParameterError):
        PlanckParam(float("nan"))
    assert PlanckParam(0.5).hypothesis_flags((1.0, 4.0), (1.0, 1.0)) == (True, False)
    assert PlanckParam(0.5).scaled(0.5).h == 0.25


def test_gaussian_spectral_product_matches_closed_form(wide_grid):
    g = GaussianWindowed(1.0).on_grid(wide_grid)
    h = 0.5
    composed = weyl_star_mode(g, g, h)
    expected = gaussian_star_closed_form(1.0, 1.0, h, PROBES[:, 0], PROBES[:, 1])
    np.testing.assert_allclose(composed.evaluate(PROBES[:, 0], PROBES[:, 1]), expected, atol=ORACLE_TOL)


@pytest.mark.slow
def test_quadrature_oracle_matches_closed_form():
    g = GaussianWindowed(1.0)
    h = 0.5
    result = weyl_star_quadrature(g, g, h, PROBES)
    assert not result.flagged
    expected = gaussian_star_closed_form(1.0, 1.0, h, PROBES[:, 0], PROBES[:, 1])
    np.testing.assert_allclose(result.values, expected, atol=ORACLE_TOL)


@pytest.mark.slow
def test_quadrature_oracle_matches_spectral_product_with_carrier(wide_grid):
    carrier = ModeFunction.from_callable(Grid2D(math.pi, 32), lambda x, xi: np.cos(x))
    windowed = GaussianWindowed(1.0, carrier=carrier)
    plain = GaussianWindowed(1.0)
    h = 0.5
    spectral = weyl_star_mode(windowed.on_grid(wide_grid), plain.on_grid(wide_grid), h)
    result = weyl_star_quadrature(windowed, plain, h, PROBES)
    assert not result.flagged
    np.testing.assert_allclose(result.values, spectral.evaluate(PROBES[:, 0], PROBES[:, 1]), atol=1e-7)


def test_quadrature_refuses_slowly_decaying_inputs():
    slow = GaussianWindowed(0.01)
    with pytest.raises(NonDecayingInputError):
        weyl_star_quadrature(slow, slow, 0.5, PROBES[:1])
    with pytest.raises(NonDecayingInputError):
        GaussianWindowed(0.0)


def test_quadrature_refuses_tiny_h():
    g = GaussianWindowed(1.0)
    with pytest.raises(InvalidParameterError):
        weyl_star_quadrature(g, g, 0.01, PROBES[:1])


def test_quadrature_spec_validation():
    with pytest.raises(InvalidParameterError):
        QuadratureSpec(R=-1.0)
    with pytest.raises(InvalidParameterError):
        QuadratureSpec(rule="simpson")
    t, w = QuadratureSpec(R=2.0, nodes=33, rule="trapezoid").nodes_weights()
    assert float(np.sum(w)) == pytest.approx(4.0)
    assert t[0] == pytest.approx(-2.0)
