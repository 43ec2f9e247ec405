"""Command-line entry point for the Volterra inclusion lab.

Usage:
    volterra-lab <kind> --config experiment.json [--out DIR] [--seed N] [--threads N]

Exit codes: 0 success, 2 bad config or arguments, 3 numerical failure
(non-convergence, empty funnel, violated precondition), 4 artefact I/O error.
"""

import argparse
import json
import sys
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError
from shared.core.config import settings
from shared.core.logging import configure_logging, get_logger
from shared.exceptions import (
    ArtifactWriteError,
    ConditionSearchError,
    ConfigurationError,
    EmptyFunnelError,
    InconsistentDataError,
    InvalidArgumentError,
    NonConvergenceError,
    NotInvertibleError,
    NotStableError,
    NumericFailureError,
    PreconditionViolatedError,
)
from shared.schemas import EXPERIMENT_KINDS, ExperimentConfig

from app.runners.experiment_runner import run_experiment

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

CONFIG_ERRORS = (ValidationError, ConfigurationError, InvalidArgumentError)
NUMERIC_ERRORS = (
    NonConvergenceError,
    EmptyFunnelError,
    NotStableError,
    PreconditionViolatedError,
    NumericFailureError,
    ConditionSearchError,
    NotInvertibleError,
    InconsistentDataError,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="volterra-lab",
        description=f"{settings.app_name} {settings.app_version}",
    )
    parser.add_argument("--log-level", default=None, help="Override LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="kind", required=True)
    for kind in EXPERIMENT_KINDS:
        sub = subparsers.add_parser(kind, help=f"Run a '{kind}' experiment")
        sub.add_argument("--config", required=True, type=Path, help="Experiment JSON file")
        sub.add_argument("--out", type=Path, default=None, help="Artefact directory")
        sub.add_argument("--seed", type=int, default=None, help="Override the root seed")
        sub.add_argument("--threads", type=int, default=None, help="Override worker threads")
    return parser


def load_config(
    path: Path, seed: int | None = None, threads: int | None = None
) -> ExperimentConfig:
    """
    Read and validate an experiment file, applying command-line overrides.

    Raises:
        ConfigurationError: If the file is missing or not JSON
        ValidationError: If the document does not match the schema
    """
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(document, dict):
        raise ConfigurationError(f"Config {path} must be a JSON object")
    if seed is not None:
        document["seed"] = seed
    if threads is not None:
        document["threads"] = threads
    return ExperimentConfig.model_validate(document)


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config, args.seed, args.threads)
        outcome = run_experiment(config, args.kind, args.out)
    except CONFIG_ERRORS as e:
        logger.error("Invalid experiment configuration", kind=args.kind, error=str(e))
        return EXIT_CONFIG
    except NUMERIC_ERRORS as e:
        logger.error(
            "Experiment failed numerically",
            kind=args.kind,
            error_type=type(e).__name__,
            error=str(e),
        )
        return EXIT_NUMERIC
    except (ArtifactWriteError, OSError) as e:
        logger.error("Could not write artefacts", kind=args.kind, error=str(e))
        return EXIT_IO
    logger.info("Experiment complete", kind=outcome.kind, tables=len(outcome.tables))
    return EXIT_OK


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
