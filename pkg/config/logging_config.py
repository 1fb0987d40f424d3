import logging
import sys
from config.settings import settings

_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Route every module logger to stderr; stdout stays reserved for reports"""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(_FORMAT))
    root.addHandler(handler)

    chosen = (level or settings.CASCADE_LOG_LEVEL).upper()
    root.setLevel(getattr(logging, chosen, logging.INFO))
