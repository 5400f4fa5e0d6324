from __future__ import annotations

import sys
import time
from typing import Optional, Sequence

from app.core.config import load_settings
from app.core.errors import ConfigError, WeylCompError
from app.core.logging import logger, set_run_id, setup_logging
from app.runner.exporters import emit_report
from app.runner.formatters import format_failure, format_summary
from app.runner.models import RunResult
from app.runner.parser import parse_command
from app.runner.pipeline import ExperimentPipeline
from app.services.corpus import build_corpus_repo

EXIT_OK = 0
EXIT_CRITERION = 1
EXIT_CONFIG = 2


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        settings = load_settings()
        setup_logging(settings.log_level)
        config = parse_command(argv)
        set_run_id(seed_text=config.config_hash())
        corpus = build_corpus_repo(settings, config.corpus)
        pipeline = ExperimentPipeline(settings, corpus)
        started = time.perf_counter()
        result = pipeline.run(config)
        elapsed = time.perf_counter() - started
    except ConfigError as exc:
        logger.error("Config error: %s", exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except WeylCompError as exc:
        logger.error("Experiment failed %s: %s", type(exc).__name__, exc)
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CRITERION

    try:
        emit_report(result, {"seconds": elapsed}, config.out, config.csv, config.xlsx)
    except OSError as exc:
        logger.error("Report write failed: %s", exc)
        print(f"cannot write report: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(format_summary(result))
    return exit_status(result)


def exit_status(result: RunResult) -> int:
    if result.passed:
        return EXIT_OK
    print(format_failure(result), file=sys.stderr)
    return EXIT_CRITERION


if __name__ == "__main__":
    sys.exit(main())
