from __future__ import annotations

import io
import json
import math

import numpy as np
import pytest
from openpyxl import load_workbook

from app.core.errors import ConfigError
from app.main import EXIT_CONFIG, EXIT_CRITERION, EXIT_OK, main
from app.runner.exporters import build_report, build_rows_csv, build_rows_xlsx, to_jsonable
from app.runner.formatters import format_failure, format_summary
from app.runner.models import ExperimentConfig, RunResult, parse_class_spec
from app.runner.parser import parse_command, parse_float_list, parse_int_list


def _report(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_config_round_trip():
    config = ExperimentConfig(command="hybrid", h=0.25, modes=("10", "01"), n=2)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(config.to_dict())))
    assert again == config
    assert again.config_hash() == config.config_hash()


@pytest.mark.parametrize(
    "data",
    [
        {"command": "star", "colour": "red"},
        {"h": 0.5},
        {"command": "star", "n": 1.5},
        {"command": "star", "h": "abc"},
        [],
    ],
)
def test_config_from_dict_rejects_bad_input(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(data)


@pytest.mark.parametrize(
    "config",
    [
        ExperimentConfig(command="integrate"),
        ExperimentConfig(command="star", grid_Q=7),
        ExperimentConfig(command="star", h=-0.1),
        ExperimentConfig(command="expand", h_list=(0.1,)),
        ExperimentConfig(command="expand", N=5),
        ExperimentConfig(command="reg", K=1),
        ExperimentConfig(command="hybrid", n=2, modes=("101",)),
        ExperimentConfig(command="hybrid", modes=("10", "1")),
        ExperimentConfig(command="certify", spec="m=2,M=1,rho=1"),
        ExperimentConfig(command="decompose", workers=0),
    ],
)
def test_validation_errors(config):
    with pytest.raises(ConfigError):
        config.validate()


def test_class_spec_text():
    spec = parse_class_spec("m=6, M=1.5, rho=1;2, delta=0.5;0.5")
    assert (spec.m, spec.M, spec.rho, spec.delta) == (6, 1.5, (1.0, 2.0), (0.5, 0.5))
    for text in ("m=6,M=1,rho=1;1,delta=1", "m=6,M=-1,rho=1,delta=1", "m6,M=1,rho=1,delta=1"):
        with pytest.raises(ConfigError):
            parse_class_spec(text)


def test_list_flags():
    assert parse_float_list("0.4, 0.2,") == (0.4, 0.2)
    assert parse_int_list("1,2,4") == (1, 2, 4)
    with pytest.raises(ConfigError):
        parse_int_list("1,two")


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "hybrid", "h": 0.3, "n": 2}), encoding="utf-8")
    config = parse_command(["hybrid", "--config", str(path), "--h", "0.1"])
    assert config.h == 0.1 and config.n == 2
    with pytest.raises(ConfigError):
        parse_command(["star", "--config", str(path)])


def test_unknown_choice_is_an_argparse_error():
    with pytest.raises(SystemExit) as exc:
        parse_command(["bounds", "--experiment", "thm99"])
    assert exc.value.code == 2


def test_certify_passes_and_writes_files(tmp_path, capsys):
    out, csv_path = tmp_path / "report.json", tmp_path / "rows.csv"
    code = main(["certify", "--symbol", "sinsin", "--out", str(out), "--csv", str(csv_path)])
    assert code == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "certify: PASS"
    payload = _report(out)["payload"]
    assert payload["pass"] is True
    assert payload["minimal_M"] == pytest.approx(1.0)
    text = csv_path.read_bytes().decode("utf-8")
    assert text.startswith("alpha,beta,sup,bound\r\n")


def test_certify_violation_exits_with_criterion_code(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["certify", "--symbol", "sin2x_sinxi", "--spec", "m=2,M=1,rho=1,delta=1", "--out", str(out)])
    assert code == EXIT_CRITERION
    payload = _report(out)["payload"]
    assert payload["pass"] is False
    assert payload["violation"] == [[1], [0]]
    assert "class bound" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["star", "--grid-Q", "7"],
        ["expand", "--h-list", "0.1"],
        ["certify", "--symbol", "missing"],
        ["decompose", "--config", "does-not-exist.json"],
    ],
)
def test_configuration_problems_exit_with_config_code(argv):
    assert main(argv) == EXIT_CONFIG


def test_bad_worker_setting_is_a_config_error(monkeypatch):
    monkeypatch.setenv("WEYL_WORKERS", "0")
    assert main(["certify"]) == EXIT_CONFIG


def test_unwritable_report_path(tmp_path):
    assert main(["certify", "--out", str(tmp_path / "missing" / "report.json")]) == EXIT_CONFIG


def test_star_command(capsys):
    assert main(["star", "--n", "2", "--h", "0.3"]) == EXIT_OK
    assert capsys.readouterr().out.startswith("star: PASS")


def test_decompose_payload_is_deterministic(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["decompose", "--out", str(first)]) == EXIT_OK
    assert main(["decompose", "--workers", "3", "--out", str(second)]) == EXIT_OK
    a, b = _report(first)["payload"], _report(second)["payload"]
    assert a["residual"] == b["residual"]
    assert a["terms"] == b["terms"] and len(a["terms"]) == 16


def test_hybrid_and_bounds_commands():
    assert main(["hybrid", "--modes", "10,01"]) == EXIT_OK
    assert main(["bounds", "--experiment", "lemma41", "--n", "2"]) == EXIT_OK
    assert main(["bounds", "--experiment", "thm12", "--n-list", "1,2,4,8"]) == EXIT_OK
    assert main(["bounds", "--experiment", "thm13-n"]) == EXIT_OK


def test_expand_command(tmp_path):
    out = tmp_path / "expand.json"
    assert main(["expand", "--N", "1", "--h-list", "0.2,0.1,0.05", "--out", str(out)]) == EXIT_OK
    payload = _report(out)["payload"]
    assert abs(payload["slope"] - 1.0) <= 0.1
    assert len(payload["h_list"]) == 3


def test_to_jsonable():
    value = {"a": math.inf, "b": -math.inf, "c": complex(1, -2), "d": np.array([1.0, np.nan]), "e": (np.int64(3), True)}
    assert to_jsonable(value) == {"a": "inf", "b": "-inf", "c": {"re": 1.0, "im": -2.0}, "d": [1.0, "nan"], "e": [3, True]}


def test_empty_tables_keep_their_header():
    assert build_rows_csv(["n", "lhs"], []) == "n,lhs\r\n"
    workbook = load_workbook(io.BytesIO(build_rows_xlsx(["n", "lhs"], [{"n": 1, "lhs": math.inf}])))
    sheet = workbook.active
    assert [c.value for c in sheet[1]] == ["n", "lhs"]
    assert [c.value for c in sheet[2]] == [1, "inf"]


def test_summary_and_failure_text():
    result = RunResult("bounds", {"experiment": "thm12", "h": 0.5}, ["n"], [{"n": 1}])
    result.require(False, "thm12 bound at n=1")
    summary = format_summary(result)
    assert summary.splitlines()[0] == "bounds: FAIL"
    assert "failed: thm12 bound at n=1" in summary
    assert format_failure(result) == "bounds: failed invariants: thm12 bound at n=1"
    report = build_report(result, {"seconds": 0.5})
    assert report["payload"]["pass"] is False
    assert report["timing"] == {"seconds": 0.5}
