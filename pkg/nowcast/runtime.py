"""
Process-wide runtime knobs read from the environment
"""
import logging
import os

from typing import Optional


THREADS_ENV_VAR = "NOWCAST_THREADS"

LOG_LEVEL_ENV_VAR = "NOWCAST_LOG_LEVEL"


def thread_limit(default: Optional[int] = None) -> Optional[int]:
    """
    Worker cap from NOWCAST_THREADS, default when unset or unusable

    Keyword arguments:
    default -- value returned when the variable is absent (default: None)
    """
    raw = os.getenv(THREADS_ENV_VAR)

    if not raw:
        return default

    try:
        limit = int(raw)

    except ValueError:
        logging.warning(f"ignoring {THREADS_ENV_VAR}={raw!r}, expected a positive integer")

        return default

    if limit < 1:
        logging.warning(f"ignoring {THREADS_ENV_VAR}={limit}, expected a positive integer")

        return default

    return limit


def default_log_level() -> str:
    return os.getenv(LOG_LEVEL_ENV_VAR, "INFO").upper()
