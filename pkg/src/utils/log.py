"""
Logging setup for command-line runs.

Library modules only create loggers; handlers are attached here, once,
on stderr so that tables written to stdout stay clean.
"""
import logging
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(verbose: bool = False, quiet: bool = False,
                      log_file: Optional[str] = None) -> int:
    """
    Configure the root logger and return the chosen level.

    Args:
        verbose: DEBUG instead of INFO
        quiet: WARNING instead of INFO (wins over verbose)
        log_file: optional file receiving the same records
    """
    level = logging.INFO
    if verbose:
        level = logging.DEBUG
    if quiet:
        level = logging.WARNING
    handlers = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    return level
