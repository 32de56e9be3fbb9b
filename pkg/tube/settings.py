import os
import logging
from dotenv import load_dotenv

logger = logging.getLogger(__name__)
load_dotenv()

DEFAULT_LOG_LEVEL = "WARNING"
DEFAULT_MAX_UNKNOWNS = 250_000
DEFAULT_DENSE_CROSSOVER = 2_000
DEFAULT_MC_MAX_STEPS = 100_000_000
DEFAULT_MC_WORKERS = 1


def _int_env(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        logger.warning(f"Settings: {name}={raw!r} is not an integer, using {default}.")
        return default
    if value < minimum:
        logger.warning(f"Settings: {name}={value} below minimum {minimum}, using {default}.")
        return default
    return value


def log_level() -> str:
    level = (os.getenv("LTUBE_LOG_LEVEL") or DEFAULT_LOG_LEVEL).upper()
    if not isinstance(logging.getLevelName(level), int):
        logger.warning(f"Settings: unknown LTUBE_LOG_LEVEL {level!r}, using {DEFAULT_LOG_LEVEL}.")
        return DEFAULT_LOG_LEVEL
    return level


def max_unknowns() -> int:
    return _int_env("LTUBE_MAX_UNKNOWNS", DEFAULT_MAX_UNKNOWNS)


def dense_crossover() -> int:
    return _int_env("LTUBE_DENSE_CROSSOVER", DEFAULT_DENSE_CROSSOVER)


def mc_max_steps() -> int:
    return _int_env("LTUBE_MC_MAX_STEPS", DEFAULT_MC_MAX_STEPS)


def mc_workers() -> int:
    return _int_env("LTUBE_MC_WORKERS", DEFAULT_MC_WORKERS)


def color_enabled(stream) -> bool:
    """ANSI colour only on a terminal and only when NO_COLOR is unset."""
    if os.getenv("NO_COLOR") is not None:
        return False
    return bool(getattr(stream, "isatty", lambda: False)())
