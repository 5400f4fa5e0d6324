from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

from app.core.errors import ConfigError

COMMANDS = ("star", "reg", "hybrid", "decompose", "expand", "certify", "bounds", "sweep")
BOUND_EXPERIMENTS = ("thm12", "lemma41", "prop23", "prop42", "thm13", "thm13-n")
FAMILIES = ("heterogeneous", "identical")


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    corpus: Optional[str] = None
    grid_L: Optional[float] = None
    grid_Q: Optional[int] = None
    h: Optional[float] = None
    h_list: Tuple[float, ...] = ()
    n: Optional[int] = None
    n_list: Tuple[int, ...] = ()
    modes: Tuple[str, ...] = ()
    N: Optional[int] = None
    K: Optional[int] = None
    tol: Optional[float] = None
    pair: Optional[str] = None
    symbol: Optional[str] = None
    spec: Optional[str] = None
    experiment: Optional[str] = None
    family: Optional[str] = None
    workers: Optional[int] = None
    out: Optional[str] = None
    csv: Optional[str] = None
    xlsx: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {}
        for item in fields(self):
            value = getattr(self, item.name)
            data[item.name] = list(value) if isinstance(value, tuple) else value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a JSON object")
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        if "command" not in data:
            raise ConfigError("config is missing the command")
        try:
            kwargs: Dict[str, Any] = {
                "command": str(data["command"]),
                "corpus": _opt_str(data.get("corpus")),
                "grid_L": _opt_float(data.get("grid_L")),
                "grid_Q": _opt_int(data.get("grid_Q")),
                "h": _opt_float(data.get("h")),
                "h_list": tuple(float(v) for v in data.get("h_list") or ()),
                "n": _opt_int(data.get("n")),
                "n_list": tuple(int(v) for v in data.get("n_list") or ()),
                "modes": tuple(str(v) for v in data.get("modes") or ()),
                "N": _opt_int(data.get("N")),
                "K": _opt_int(data.get("K")),
                "tol": _opt_float(data.get("tol")),
                "pair": _opt_str(data.get("pair")),
                "symbol": _opt_str(data.get("symbol")),
                "spec": _opt_str(data.get("spec")),
                "experiment": _opt_str(data.get("experiment")),
                "family": _opt_str(data.get("family")),
                "workers": _opt_int(data.get("workers")),
                "out": _opt_str(data.get("out")),
                "csv": _opt_str(data.get("csv")),
                "xlsx": _opt_str(data.get("xlsx")),
            }
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config value: {exc}") from exc
        return cls(**kwargs)

    def merged(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """Overrides win wherever they are set."""
        changes = {k: v for k, v in overrides.items() if v is not None and v != ()}
        return replace(self, **changes)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def validate(self) -> "ExperimentConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {', '.join(COMMANDS)}")
        if self.grid_L is not None and (not math.isfinite(self.grid_L) or self.grid_L <= 0):
            raise ConfigError(f"--grid-L must be positive, got {self.grid_L}")
        if self.grid_Q is not None and (self.grid_Q < 4 or self.grid_Q % 2):
            raise ConfigError(f"--grid-Q must be an even integer >= 4, got {self.grid_Q}")
        for h in ((self.h,) if self.h is not None else ()) + self.h_list:
            if not math.isfinite(h) or h <= 0:
                raise ConfigError(f"h values must be positive, got {h}")
        if self.n is not None and self.n < 1:
            raise ConfigError(f"--n must be positive, got {self.n}")
        if any(n < 1 for n in self.n_list):
            raise ConfigError("--n-list entries must be positive")
        for mask in self.modes:
            if not mask or set(mask) - {"0", "1"}:
                raise ConfigError(f"mode masks are 0/1 strings, got {mask!r}")
            if self.n is not None and len(mask) != self.n:
                raise ConfigError(f"mode mask {mask!r} does not have n={self.n} entries")
        if len({len(mask) for mask in self.modes}) > 1:
            raise ConfigError("all mode masks must have the same length")
        if self.N is not None and not 1 <= self.N <= 4:
            raise ConfigError(f"--N must be in 1..4, got {self.N}")
        if self.K is not None and not 2 <= self.K <= 128:
            raise ConfigError(f"--K must be in 2..128, got {self.K}")
        if self.tol is not None and (not math.isfinite(self.tol) or self.tol <= 0):
            raise ConfigError(f"--tol must be positive, got {self.tol}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("--workers must be at least 1")
        if self.experiment is not None and self.experiment not in BOUND_EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; expected one of {', '.join(BOUND_EXPERIMENTS)}")
        if self.family is not None and self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}")
        if self.command == "expand" and len(self.h_list) == 1:
            raise ConfigError("expand needs at least two h values for the slope fit")
        if self.spec is not None:
            parse_class_spec(self.spec)
        return self


@dataclass(frozen=True)
class ClassSpecText:
    m: int
    M: float
    rho: Tuple[float, ...]
    delta: Tuple[float, ...]


def parse_class_spec(text: str) -> ClassSpecText:
    """Parse "m=6,M=1,rho=1,delta=1"; rho and delta take ";"-separated per-mode lists."""
    values: Dict[str, str] = {}
    for chunk in text.split(","):
        if not chunk.strip():
            continue
        key, sep, value = chunk.partition("=")
        if not sep:
            raise ConfigError(f"class spec entries are key=value, got {chunk!r}")
        values[key.strip()] = value.strip()
    missing = {"m", "M", "rho", "delta"} - set(values)
    if missing:
        raise ConfigError(f"class spec is missing {', '.join(sorted(missing))}")
    try:
        m = int(values["m"])
        M = float(values["M"])
        rho = tuple(float(v) for v in values["rho"].split(";"))
        delta = tuple(float(v) for v in values["delta"].split(";"))
    except ValueError as exc:
        raise ConfigError(f"malformed class spec {text!r}: {exc}") from exc
    if m < 0 or M < 0 or min(rho + delta) < 0:
        raise ConfigError(f"class spec entries must be non-negative: {text!r}")
    if len(rho) != len(delta):
        raise ConfigError("rho and delta lists must have the same length")
    return ClassSpecText(m, M, rho, delta)


@dataclass
class RunResult:
    command: str
    payload: Dict[str, Any]
    columns: List[str] = field(default_factory=list)
    rows: List[Dict[str, Any]] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def require(self, condition: bool, invariant: str) -> None:
        if not condition:
            self.failures.append(invariant)


def _opt_str(value: Any) -> Optional[str]:
    return None if value is None else str(value)


def _opt_float(value: Any) -> Optional[float]:
    return None if value is None else float(value)


def _opt_int(value: Any) -> Optional[int]:
    if value is None:
        return None
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"expected an integer, got {value}")
    return int(value)
