from __future__ import annotations

import pytest

from app.calculus.phase_grid import ModeFunction
from app.calculus.polynomial import (
    PolynomialSymbol,
    commutator,
    moyal_product,
    moyal_term_poly,
    poly_derivative,
    poly_multiply,
)
from app.calculus.star_core import weyl_star
from app.core.errors import InvalidParameterError, SymbolFormError


def _terms_close(P: PolynomialSymbol, expected, tol: float = 1e-14) -> None:
    got = P.terms()
    assert set(got) == set(expected)
    for key, value in expected.items():
        assert abs(got[key] - value) <= tol


def test_position_momentum_product():
    h = 0.3
    _terms_close(moyal_product(PolynomialSymbol.x(), PolynomialSymbol.xi(), h), {(1, 1): 1.0, (0, 0): 0.5j * h})
    _terms_close(moyal_product(PolynomialSymbol.xi(), PolynomialSymbol.x(), h), {(1, 1): 1.0, (0, 0): -0.5j * h})


def test_canonical_commutator():
    h = 0.7
    _terms_close(commutator(PolynomialSymbol.x(), PolynomialSymbol.xi(), h), {(0, 0): 1j * h})


def test_quadratic_product_stops_after_second_order():
    h = 0.4
    A = PolynomialSymbol.from_terms({(2, 0): 1.0})
    B = PolynomialSymbol.from_terms({(0, 2): 1.0})
    _terms_close(moyal_product(A, B, h), {(2, 2): 1.0, (1, 1): 2j * h, (0, 0): -0.5 * h * h})
    assert moyal_term_poly(A, B, 3, h).is_zero


def test_derivative_and_product():
    P = PolynomialSymbol.from_terms({(3, 1): 2.0, (0, 2): 1.0})
    _terms_close(poly_derivative(P, 2, 1), {(1, 0): 12.0})
    assert poly_derivative(P, 4, 0).is_zero
    _terms_close(poly_multiply(PolynomialSymbol.x(), PolynomialSymbol.x()), {(2, 0): 1.0})
    assert P.degree == 4


def test_polynomial_validation():
    with pytest.raises(InvalidParameterError):
        PolynomialSymbol.from_terms({(-1, 0): 1.0})
    with pytest.raises(InvalidParameterError):
        poly_derivative(PolynomialSymbol.x(), -1, 0)
    with pytest.raises(InvalidParameterError):
        moyal_term_poly(PolynomialSymbol.x(), PolynomialSymbol.x(), -1, 0.1)


def test_polynomials_do_not_mix_with_periodic_symbols(grid):
    with pytest.raises(SymbolFormError):
        weyl_star(PolynomialSymbol.x(), ModeFunction.constant(grid), 0.1)


def test_weyl_star_dispatches_polynomials():
    h = 0.2
    _terms_close(weyl_star(PolynomialSymbol.x(), PolynomialSymbol.xi(), h), {(1, 1): 1.0, (0, 0): 0.1j})
