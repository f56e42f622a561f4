"""Logging helper for the signal_evo package.

Provides `configure_logging` to install one stdout handler and
`get_logger(name)` to obtain a package-scoped logger.

Library modules only call `get_logger`; entry points call
`configure_logging` once.
"""
from __future__ import annotations

import logging
import os
import sys
from typing import Optional

DEFAULT_LEVEL = os.environ.get("SIGNAL_EVO_LOG_LEVEL", "INFO")


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger.

    Idempotent: a second call only adjusts the level of the existing
    handler setup.
    """
    lvl = (level or DEFAULT_LEVEL).upper()
    numeric = getattr(logging, lvl, logging.INFO)

    root = logging.getLogger()
    if any(isinstance(h, logging.StreamHandler) for h in root.handlers):
        root.setLevel(numeric)
        return

    handler = logging.StreamHandler(stream=sys.stdout)
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s", "%Y-%m-%dT%H:%M:%S")
    handler.setFormatter(fmt)
    root.addHandler(handler)
    root.setLevel(numeric)


def get_logger(name: str) -> logging.Logger:
    """Return a logger scoped under `signal_evo`.

    Accepts either a bare component name (``"store"``) or a module
    ``__name__`` that already starts with the package name.
    """
    if name == "signal_evo" or name.startswith("signal_evo."):
        return logging.getLogger(name)
    return logging.getLogger(f"signal_evo.{name}")
