from __future__ import annotations

import math

import numpy as np
import pytest

from app.calculus.hermite_basis import HermiteBasis, OperatorMatrix, hermite_functions
from app.calculus.phase_grid import Grid2D, ModeFunction
from app.calculus.polynomial import PolynomialSymbol, moyal_product
from app.calculus.star_core import hermite_operator_oracle, matrix_composition_defect
from app.core.errors import InvalidParameterError, QuadratureError

H = 0.5
K = 24


def test_default_basis_is_orthonormal():
    basis = HermiteBasis.default(H, 32)
    assert basis.check() <= 1e-10


def test_under_resolved_basis_is_reported():
    basis = HermiteBasis(H, 32, 1.0)
    with pytest.raises(QuadratureError):
        basis.check()


@pytest.mark.parametrize("size", [0, 129])
def test_basis_size_limits(size):
    with pytest.raises(InvalidParameterError):
        HermiteBasis.default(H, size)


def test_ground_state_profile():
    u = np.linspace(-2.0, 2.0, 9)
    phi = hermite_functions(u, 1, H)[0]
    np.testing.assert_allclose(phi, (math.pi * H) ** -0.25 * np.exp(-u * u / (2 * H)), rtol=1e-14)


def test_identity_symbol_gives_identity_matrix():
    grid = Grid2D(math.pi, 32)
    matrix = hermite_operator_oracle(ModeFunction.constant(grid), H, K)
    np.testing.assert_allclose(matrix.entries, np.eye(K), atol=1e-10)


def test_position_and_momentum_matrix_elements():
    x = hermite_operator_oracle(PolynomialSymbol.x(), H, K)
    xi = hermite_operator_oracle(PolynomialSymbol.xi(), H, K)
    assert x.entries[0, 1] == pytest.approx(math.sqrt(H / 2), abs=1e-10)
    assert xi.entries[0, 1] == pytest.approx(-1j * math.sqrt(H / 2), abs=1e-10)
    assert x.hermiticity_defect() <= 1e-10
    assert xi.hermiticity_defect() <= 1e-10


def test_harmonic_oscillator_spectrum():
    P = PolynomialSymbol.from_terms({(2, 0): 1.0, (0, 2): 1.0})
    matrix = hermite_operator_oracle(P, H, K)
    expected = np.diag((2 * np.arange(K) + 1) * H)
    np.testing.assert_allclose(matrix.entries, expected, atol=1e-8)


def test_polynomial_composition_matches_matrix_product():
    x, xi = PolynomialSymbol.x(), PolynomialSymbol.xi()
    composed = hermite_operator_oracle(moyal_product(x, xi, H), H, K)
    product = hermite_operator_oracle(x, H, K) @ hermite_operator_oracle(xi, H, K)
    np.testing.assert_allclose(composed.bulk(), product.bulk(), atol=1e-9)


def test_band_limited_composition_matches_matrix_product():
    grid = Grid2D(2 * math.pi, 32)
    a = ModeFunction.from_coefficients(grid, {(1, 0): 0.5, (-1, 0): 0.5})
    b = ModeFunction.from_coefficients(grid, {(0, 1): 0.5, (0, -1): 0.5})
    assert matrix_composition_defect(a, b, H, 48) <= 1e-6


def test_oracle_rejects_high_degree_and_foreign_inputs():
    with pytest.raises(InvalidParameterError):
        hermite_operator_oracle(PolynomialSymbol.from_terms({(3, 0): 1.0}), H, K)
    with pytest.raises(InvalidParameterError):
        hermite_operator_oracle("x", H, K)


def test_operator_matrix_algebra():
    m = OperatorMatrix(np.array([[1.0, 2.0j], [0.0, 1.0]]), H)
    assert m.adjoint().entries[1, 0] == pytest.approx(-2.0j)
    assert m.hermiticity_defect() == pytest.approx(2.0)
    assert (OperatorMatrix.identity(H, 2) @ m).entries[0, 1] == pytest.approx(2.0j)
    with pytest.raises(InvalidParameterError):
        OperatorMatrix(np.ones((2, 3)), H)
    with pytest.raises(QuadratureError):
        OperatorMatrix(np.array([[np.nan]]), H)
