from __future__ import annotations

import hashlib
import logging
import math

import pytest

from app.core.config import Settings, load_settings
from app.core.errors import ConfigError, InvalidParameterError, NonDecayingInputError, QuadratureError, WeylCompError
from app.core.logging import RunContextFilter, get_experiment, get_run_id, set_experiment, set_run_id
from app.core.refinement import refine_until_stable


def test_default_settings():
    assert load_settings() == Settings()
    assert Settings().grid_L == math.pi
    assert set(Settings.__dataclass_fields__) == {"grid_L", "grid_Q", "log_level", "workers", "lattice_budget", "corpus_path"}


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("WEYL_GRID_L", "6.0")
    monkeypatch.setenv("WEYL_GRID_Q", "64")
    monkeypatch.setenv("WEYL_LOG_LEVEL", "debug")
    monkeypatch.setenv("WEYL_WORKERS", "4")
    monkeypatch.setenv("WEYL_CORPUS", " /tmp/corpus.json ")
    settings = load_settings()
    assert (settings.grid_L, settings.grid_Q, settings.log_level, settings.workers) == (6.0, 64, "DEBUG", 4)
    assert settings.corpus_path == "/tmp/corpus.json"


def test_unparseable_values_fall_back_to_defaults(monkeypatch):
    monkeypatch.setenv("WEYL_GRID_Q", "many")
    monkeypatch.setenv("WEYL_GRID_L", "inf")
    settings = load_settings()
    assert settings.grid_Q == 32 and settings.grid_L == math.pi


@pytest.mark.parametrize("name", ["WEYL_WORKERS", "WEYL_LATTICE_BUDGET"])
def test_non_positive_limits_are_rejected(monkeypatch, name):
    monkeypatch.setenv(name, "0")
    with pytest.raises(ConfigError):
        load_settings()


def test_error_hierarchy():
    assert issubclass(NonDecayingInputError, QuadratureError)
    assert issubclass(QuadratureError, WeylCompError)
    assert issubclass(InvalidParameterError, ValueError)


def test_run_id_is_derived_from_the_seed_text():
    run = set_run_id(seed_text="abc")
    assert run == hashlib.sha256(b"abc").hexdigest()[:12]
    assert get_run_id() == run
    assert set_run_id("fixed") == "fixed"
    assert set_run_id() == "-"


def test_context_filter_stamps_records():
    set_run_id("r1")
    set_experiment("decompose")
    record = logging.LogRecord("weylcomp", logging.INFO, __file__, 1, "msg", None, None)
    assert RunContextFilter().filter(record)
    assert (record.run_id, record.experiment) == ("r1", "decompose")
    set_experiment()
    assert get_experiment() == "-"


def test_refinement_stops_once_stable():
    seen = []
    result = refine_until_stable(lambda n: 1.0 / n, 4, lambda a, b: abs(a - b), levels=5, tol=0.07, on_refine=lambda *args: seen.append(args))
    assert result.converged
    assert result.resolution == 16
    assert result.value == pytest.approx(1 / 16)
    assert result.levels_used == 2 == len(seen)


def test_refinement_reports_non_convergence():
    result = refine_until_stable(lambda n: float(n), 1, lambda a, b: abs(a - b), levels=2, tol=0.1)
    assert not result.converged
    assert result.value == 4.0 and result.change == 2.0
    with pytest.raises(InvalidParameterError):
        refine_until_stable(lambda n: n, 0, lambda a, b: 0.0)
