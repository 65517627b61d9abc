"""Package logger: one stream handler and per-module levels from UDPOTLOGLEVEL."""

import logging
import os
from collections.abc import Mapping

ROOT_LOGGER = "udpot"
LEVEL_VAR = "UDPOTLOGLEVEL"
FORMAT = "%(name)s %(levelname)s: %(message)s"

MEMPROF = 5  # tracemalloc statistics of level evaluations
LEVELS = {
    "MEMPROF": MEMPROF,
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


def register_levels() -> None:
    """Give the MEMPROF level its name in log records."""
    logging.addLevelName(MEMPROF, "MEMPROF")


def parse_levels(text: str) -> dict[str, int]:
    """Map logger names to levels.

    Items are separated by whitespace and read ``LEVEL`` for the package logger or
    ``module:LEVEL`` for ``udpot.module``, so ``"WARNING verify:DEBUG"`` sets the
    package to WARNING and ``udpot.verify`` to DEBUG.

    Raises:
        ValueError: for a level name not in LEVELS
    """
    out: dict[str, int] = {}
    for item in text.split():
        scope, _, name = item.rpartition(":")
        if name not in LEVELS:
            msg = f"Invalid log level: {name}, choose from {list(LEVELS)}"
            raise ValueError(msg)
        out[f"{ROOT_LOGGER}.{scope}" if scope else ROOT_LOGGER] = LEVELS[name]
    return out


def configure_logging(environ: Mapping[str, str] = os.environ) -> logging.Logger:
    """Attach the package handler once and apply the levels in UDPOTLOGLEVEL."""
    root = logging.getLogger(ROOT_LOGGER)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(FORMAT))
        root.addHandler(handler)
    for name, level in parse_levels(environ.get(LEVEL_VAR, "")).items():
        logging.getLogger(name).setLevel(level)
    return root
