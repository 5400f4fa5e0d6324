from __future__ import annotations

from typing import Any, Dict, List

from app.runner.models import RunResult

SUMMARY_KEYS = {
    "star": ("pair", "n", "h", "sup_norm", "unit_residual", "adjoint_residual", "leibniz_residual", "oracle_error"),
    "reg": ("pair", "h", "K", "sup_norm", "contraction_bound", "wick_route_error", "kernel_route_error"),
    "hybrid": ("pair", "n", "h"),
    "decompose": ("pair", "n", "h", "term_count", "residual", "lattice_residual", "permutation_delta"),
    "expand": ("pair", "N", "slope", "rvalue", "max_route_difference"),
    "certify": ("symbol", "n", "minimal_M", "violation"),
    "bounds": ("experiment", "family", "h"),
    "sweep": ("family", "h_list", "n_list"),
}


def format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    if value is None:
        return "-"
    return str(value)


def format_row(row: Dict[str, Any], columns: List[str]) -> str:
    return "  ".join(f"{column}={format_value(row.get(column))}" for column in columns)


def format_summary(result: RunResult, max_rows: int = 12) -> str:
    status = "PASS" if result.passed else "FAIL"
    lines = [f"{result.command}: {status}"]
    for key in SUMMARY_KEYS.get(result.command, ()):
        if key in result.payload:
            lines.append(f"  {key}: {format_value(result.payload[key])}")
    if result.rows:
        lines.append(f"  rows: {len(result.rows)}")
        for row in result.rows[:max_rows]:
            lines.append("    " + format_row(row, result.columns))
        if len(result.rows) > max_rows:
            lines.append(f"    ... {len(result.rows) - max_rows} more")
    for failure in result.failures:
        lines.append(f"  failed: {failure}")
    return "\n".join(lines)


def format_failure(result: RunResult) -> str:
    return f"{result.command}: failed invariants: {', '.join(result.failures)}"
