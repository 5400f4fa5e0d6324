from __future__ import annotations

import hashlib
import logging
from contextvars import ContextVar
from typing import Optional

_run_id: ContextVar[str] = ContextVar("run_id", default="-")
_experiment: ContextVar[str] = ContextVar("experiment", default="-")

logger = logging.getLogger("weylcomp")


def set_run_id(value: Optional[str] = None, seed_text: Optional[str] = None) -> str:
    if value:
        run = value
    elif seed_text is not None:
        run = hashlib.sha256(seed_text.encode("utf-8")).hexdigest()[:12]
    else:
        run = "-"
    _run_id.set(run)
    return run


def get_run_id() -> str:
    return _run_id.get()


def set_experiment(value: Optional[str] = None) -> str:
    name = value or "-"
    _experiment.set(name)
    return name


def get_experiment() -> str:
    return _experiment.get()


class RunContextFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = get_run_id()
        record.experiment = get_experiment()
        return True


def setup_logging(level: str = "INFO") -> None:
    if logger.handlers:
        logger.setLevel(level)
        return
    handler = logging.StreamHandler()
    formatter = logging.Formatter(
        "%(asctime)s %(levelname)s %(name)s run_id=%(run_id)s experiment=%(experiment)s - %(message)s"
    )
    handler.setFormatter(formatter)
    handler.addFilter(RunContextFilter())
    logger.addHandler(handler)
    logger.setLevel(level)
