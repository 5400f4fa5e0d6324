from __future__ import annotations

import json
import math

import numpy as np
import pytest

from app.calculus.phase_grid import Grid2D
from app.core.config import Settings
from app.core.errors import ConfigError, InvalidDiscretizationError
from app.services.corpus import build_corpus_repo, random_unit_mode_functions
from conftest import bump, sin_x


def _write(tmp_path, document):
    path = tmp_path / "corpus.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return str(path)


def test_bundled_corpus_lists_symbols_and_pairs(corpus):
    assert {"bump", "sin_x", "sinsin", "gauss"} <= set(corpus.list_symbols())
    assert corpus.get_pair("slope") == ("sin_x", "sin_xi")
    assert "bump" in corpus.list_pairs()


def test_factors_are_placed_on_the_default_grid(corpus, grid):
    np.testing.assert_allclose(corpus.get_factor("bump").coeffs, bump(grid).coeffs)
    np.testing.assert_allclose(corpus.get_factor("sin_x").coeffs, sin_x(grid).coeffs)


def test_physical_wavenumbers_move_with_the_grid(corpus):
    wide = Grid2D(2 * math.pi, 32)
    f = corpus.get_factor("sin_x", wide)
    assert f.terms() == pytest.approx({(2, 0): -0.5j, (-2, 0): 0.5j})


def test_off_lattice_wavenumber_is_rejected(corpus):
    with pytest.raises(InvalidDiscretizationError):
        corpus.get_factor("sin_x", Grid2D(2.5, 32))


def test_single_factor_entries_replicate(corpus):
    A = corpus.get_symbol("bump", 3)
    assert A.n_modes == 3
    assert A.factors[0] is A.factors[2]


def test_multi_mode_entries_keep_their_mode_count(corpus):
    A = corpus.get_symbol("sinx1_sinxi2")
    assert A.n_modes == 2
    with pytest.raises(ConfigError):
        corpus.get_symbol("sinx1_sinxi2", 3)
    with pytest.raises(ConfigError):
        corpus.get_factor("sinx1_sinxi2")


def test_gaussian_entries(corpus):
    windowed = corpus.get_windowed("gauss_cos")
    assert windowed.carrier is not None
    g = corpus.get_factor("gauss")
    assert g.grid.L == 8.0 and g.grid.Q == 128
    assert abs(complex(g.evaluate(np.array(0.0), np.array(0.0))) - 1.0) <= 1e-10
    with pytest.raises(ConfigError):
        corpus.get_windowed("bump")


def test_unknown_names(corpus):
    with pytest.raises(ConfigError):
        corpus.get_symbol("nope")
    with pytest.raises(ConfigError):
        corpus.get_pair("nope")
    assert corpus.get_class("nope") is None
    assert corpus.get_class("bump").M == 1.3


def test_corpus_path_from_settings(tmp_path):
    path = _write(tmp_path, {"symbols": {"one": {"factors": [{"coeffs": [{"p": 0, "q": 0, "re": 2.0}]}]}}})
    repo = build_corpus_repo(Settings(corpus_path=path))
    assert repo.list_symbols() == ["one"]
    assert repo.get_factor("one").terms() == {(0, 0): 2.0}


@pytest.mark.parametrize(
    "document",
    [
        {"symbols": {"bad": {"form": "wavelet"}}},
        {"symbols": {"bad": {"factors": []}}},
        {"symbols": {"bad": {"n": 3, "factors": [{"coeffs": []}, {"coeffs": []}]}}},
        {"symbols": {}, "pairs": {"p": ["a", "b"]}},
        {"symbols": {"bad": {"form": "gaussian"}}},
    ],
)
def test_malformed_corpus_documents(tmp_path, document):
    with pytest.raises(ConfigError):
        build_corpus_repo(Settings(), _write(tmp_path, document))


def test_missing_and_invalid_files(tmp_path):
    with pytest.raises(ConfigError):
        build_corpus_repo(Settings(), str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        build_corpus_repo(Settings(), str(broken))


def test_random_unit_functions(grid):
    fs = random_unit_mode_functions(grid, 3, seed=11)
    assert len(fs) == 3
    for f in fs:
        assert f.l1_coefficients() == pytest.approx(1.0)
        assert f.sup_norm() <= 1.0 + 1e-12
    again = random_unit_mode_functions(grid, 3, seed=11)
    np.testing.assert_array_equal(fs[0].coeffs, again[0].coeffs)
    with pytest.raises(InvalidDiscretizationError):
        random_unit_mode_functions(grid, 1, seed=0, max_freq=8)
