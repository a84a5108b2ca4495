"""
Process-level settings read from the environment.
"""
import os
import logging
from dotenv import load_dotenv

from lib.errors import ConfigurationError

load_dotenv()

JOBS_ENV = "TOYDIFF_JOBS"
LOG_LEVEL_ENV = "TOYDIFF_LOG_LEVEL"


def get_default_jobs() -> int:
    """
    Default number of worker threads for chain-level parallelism.

    Returns:
        Value of TOYDIFF_JOBS, or 1 when unset
    """
    raw = os.getenv(JOBS_ENV)
    if raw is None or raw.strip() == "":
        return 1

    try:
        jobs = int(raw)
    except ValueError:
        raise ConfigurationError(f"{JOBS_ENV} must be an integer, got {raw!r}")

    if jobs < 1:
        raise ConfigurationError(f"{JOBS_ENV} must be >= 1, got {jobs}")
    return jobs


def get_log_level() -> int:
    """
    Logging level from TOYDIFF_LOG_LEVEL (name such as INFO or DEBUG).

    Returns:
        Numeric logging level
    """
    name = os.getenv(LOG_LEVEL_ENV, "INFO").strip().upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        raise ConfigurationError(f"{LOG_LEVEL_ENV} is not a logging level: {name!r}")
    return level
