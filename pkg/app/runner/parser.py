from __future__ import annotations

import argparse
import json
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

from app.core.errors import ConfigError
from app.runner.models import BOUND_EXPERIMENTS, COMMANDS, FAMILIES, ExperimentConfig

COMMAND_HELP = {
    "star": "Weyl composition of a corpus pair with unit, adjoint and Leibniz checks",
    "reg": "regularized composition with the anti-Wick and kernel cross-checks",
    "hybrid": "hybrid composition for mode subsets with its norm bounds",
    "decompose": "decomposition identity over all triple partitions",
    "expand": "Moyal expansion, remainder routes and h-slope fit",
    "certify": "class-norm certification of a corpus symbol",
    "bounds": "dimension-independence bound experiments",
    "sweep": "product bound over an h-list x n-list grid",
}


def parse_float_list(text: str) -> Tuple[float, ...]:
    try:
        return tuple(float(item) for item in text.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def parse_int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(item) for item in text.split(",") if item.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from exc


def parse_masks(text: str) -> Tuple[str, ...]:
    return tuple(item.strip() for item in text.split(",") if item.strip())


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config; flags override its fields")
    common.add_argument("--corpus", help="corpus JSON (default: bundled std.json)")
    common.add_argument("--grid-L", dest="grid_L", type=float)
    common.add_argument("--grid-Q", dest="grid_Q", type=int)
    common.add_argument("--h", type=float)
    common.add_argument("--h-list", dest="h_list", type=str)
    common.add_argument("--n", type=int)
    common.add_argument("--n-list", dest="n_list", type=str)
    common.add_argument("--modes", type=str, help='comma-separated bitmasks such as "101"')
    common.add_argument("--N", dest="N", type=int, help="expansion order")
    common.add_argument("--K", dest="K", type=int, help="Hermite basis size")
    common.add_argument("--tol", type=float)
    common.add_argument("--pair", help="corpus pair name")
    common.add_argument("--symbol", help="corpus symbol name")
    common.add_argument("--spec", help='class spec such as "m=6,M=1,rho=1,delta=1"')
    common.add_argument("--experiment", choices=BOUND_EXPERIMENTS)
    common.add_argument("--family", choices=FAMILIES)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="JSON report path")
    common.add_argument("--csv", help="CSV table path")
    common.add_argument("--xlsx", help="XLSX table path")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weylcomp", description="Weyl symbol composition experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_flags()
    for command in COMMANDS:
        sub.add_parser(command, parents=[common], help=COMMAND_HELP[command])
    return parser


def load_config_file(path: str) -> Dict[str, Any]:
    try:
        with Path(path).open("r", encoding="utf-8") as handle:
            data = json.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must contain a JSON object")
    return data


def parse_command(argv: Optional[Sequence[str]] = None) -> ExperimentConfig:
    """Flags on top of the optional config file, validated before anything runs."""
    args = build_parser().parse_args(list(argv) if argv is not None else None)
    overrides: Dict[str, Any] = {
        "corpus": args.corpus,
        "grid_L": args.grid_L,
        "grid_Q": args.grid_Q,
        "h": args.h,
        "h_list": parse_float_list(args.h_list) if args.h_list else None,
        "n": args.n,
        "n_list": parse_int_list(args.n_list) if args.n_list else None,
        "modes": parse_masks(args.modes) if args.modes else None,
        "N": args.N,
        "K": args.K,
        "tol": args.tol,
        "pair": args.pair,
        "symbol": args.symbol,
        "spec": args.spec,
        "experiment": args.experiment,
        "family": args.family,
        "workers": args.workers,
        "out": args.out,
        "csv": args.csv,
        "xlsx": args.xlsx,
    }
    if args.config:
        base_data = load_config_file(args.config)
        base_data.setdefault("command", args.command)
        base = ExperimentConfig.from_dict(base_data)
        if base.command != args.command:
            raise ConfigError(f"config file is for {base.command!r}, command line asks for {args.command!r}")
    else:
        base = ExperimentConfig(command=args.command)
    return base.merged(overrides).validate()
