from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import is_dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from openpyxl import Workbook
from openpyxl.styles import Font
from openpyxl.utils import get_column_letter

from app.core.logging import logger
from app.runner.models import RunResult


def to_jsonable(value: Any) -> Any:
    """Plain JSON values; non-finite floats become "inf", "-inf" or "nan"."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return _finite_or_text(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _finite_or_text(value.real), "im": _finite_or_text(value.imag)}
    if is_dataclass(value) and hasattr(value, "to_dict"):
        return to_jsonable(value.to_dict())
    if value is None or isinstance(value, str):
        return value
    return str(value)


def _finite_or_text(value: float) -> Any:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def build_report(result: RunResult, timing: Dict[str, float]) -> Dict[str, Any]:
    payload = dict(result.payload)
    payload["command"] = result.command
    payload["pass"] = result.passed
    payload["failures"] = list(result.failures)
    return {"payload": to_jsonable(payload), "timing": to_jsonable(timing)}


def write_json_report(path: str, result: RunResult, timing: Dict[str, float]) -> None:
    text = json.dumps(build_report(result, timing), sort_keys=True, indent=2, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")
    logger.info("Report written path=%s", path)


def build_rows_csv(columns: Sequence[str], rows: List[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(list(columns))
    for row in rows:
        writer.writerow([_csv_cell(row.get(column)) for column in columns])
    return buffer.getvalue()


def _csv_cell(value: Any) -> str:
    value = to_jsonable(value)
    if value is None:
        return ""
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return repr(value) if isinstance(value, float) else str(value)


def write_csv(path: str, columns: Sequence[str], rows: List[Dict[str, Any]]) -> None:
    Path(path).write_text(build_rows_csv(columns, rows), encoding="utf-8", newline="")
    logger.info("CSV written path=%s rows=%s", path, len(rows))


def build_rows_xlsx(columns: Sequence[str], rows: List[Dict[str, Any]], title: str = "Results") -> bytes:
    workbook = Workbook()
    sheet = workbook.active
    sheet.title = title[:31]

    sheet.append(list(columns))
    for cell in sheet[1]:
        cell.font = Font(bold=True)

    for row in rows:
        sheet.append([_xlsx_cell(row.get(column)) for column in columns])

    sheet.freeze_panes = "A2"
    _autosize_columns(sheet, len(columns))

    buffer = io.BytesIO()
    workbook.save(buffer)
    buffer.seek(0)
    return buffer.read()


def write_xlsx(path: str, columns: Sequence[str], rows: List[Dict[str, Any]], title: str = "Results") -> None:
    Path(path).write_bytes(build_rows_xlsx(columns, rows, title))
    logger.info("XLSX written path=%s rows=%s", path, len(rows))


def _xlsx_cell(value: Any) -> Any:
    value = to_jsonable(value)
    if isinstance(value, bool) or value is None:
        return _safe_str(value)
    if isinstance(value, (int, float)):
        return value
    if isinstance(value, (dict, list)):
        return json.dumps(value, sort_keys=True)
    return _safe_str(value)


def _safe_str(value: object) -> str:
    if value is None:
        return ""
    return str(value)


def _autosize_columns(sheet, column_count: int) -> None:
    for col in range(1, column_count + 1):
        max_len = 0
        for cell in sheet[get_column_letter(col)]:
            value = cell.value
            if value is None:
                continue
            max_len = max(max_len, len(str(value)))
        sheet.column_dimensions[get_column_letter(col)].width = min(max_len + 2, 40)


def emit_report(result: RunResult, timing: Dict[str, float], out: Optional[str], csv_path: Optional[str], xlsx_path: Optional[str]) -> None:
    """Write the requested files; OSError propagates to the caller."""
    if out:
        write_json_report(out, result, timing)
    if csv_path:
        write_csv(csv_path, result.columns, result.rows)
    if xlsx_path:
        write_xlsx(xlsx_path, result.columns, result.rows, result.command)
