"""Pieces shared by the sapt, spkg and sds-index front ends."""
import argparse
import logging
import sys
from typing import TextIO

from config import Settings
from models.errors import SdsError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CODES = {
    "usage": 2,
    "resolution": 3,
    "transport": 4,
    "build": 5,
    "database": 6,
}


def exit_code_for(error: SdsError) -> int:
    return EXIT_CODES.get(error.category, 1)


def add_verbosity(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="log progress (-vv for debug detail)"
    )


def log_level(settings: Settings, verbose: int = 0) -> int:
    """-vv or DEBUG=true gives DEBUG, -v gives INFO, otherwise SDS_LOG_LEVEL."""
    if verbose >= 2 or settings.DEBUG:
        return logging.DEBUG
    if verbose == 1:
        return logging.INFO
    return getattr(logging, settings.SDS_LOG_LEVEL.upper(), logging.WARNING)


def setup_logging(settings: Settings, verbose: int = 0) -> None:
    logging.basicConfig(
        level=log_level(settings, verbose),
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def report_error(error: SdsError, stream: TextIO = None) -> int:
    """Print the machine-readable error line and return the exit status."""
    stream = stream or sys.stderr
    print(f"error: {type(error).__name__}: {error}", file=stream)
    return exit_code_for(error)
