import logging
import sys
from typing import Union

# The logger to be used throughout the program
LOG = logging.getLogger("dev.minimum_time_dkf")

_LOG_FORMAT = "%(relativeCreated)6d %(process)d %(threadName)s %(message)s"


def configure_logging(level: Union[str, int]):
    """
    Configure the logger to be used throughout the program. See the LOG variable in this module.

    Records go to standard error so that the output of the CLI commands stays clean.
    Calling this function again only changes the level.

    :param level: The log level (name or numeric level) to use. Name must be one of CRITICAL / FATAL (50),
                  ERROR (40), WARN / WARNING (30), INFO (20), DEBUG (10), or NOTSET (0).
    """
    if isinstance(level, str) and hasattr(logging, level.strip().upper()):
        log_level = getattr(logging, level.strip().upper())
    else:
        log_level = level

    if not (isinstance(log_level, int) and logging.NOTSET <= log_level <= logging.CRITICAL):
        print(f"Invalid log level '{level}', defaulting to WARNING ({logging.WARNING})", file=sys.stderr)
        log_level = logging.WARNING

    LOG.setLevel(log_level)
    if not any(getattr(handler, "_dkf_handler", False) for handler in LOG.handlers):
        stderr_handler = logging.StreamHandler(sys.stderr)
        stderr_handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        stderr_handler._dkf_handler = True
        LOG.addHandler(stderr_handler)
    for handler in LOG.handlers:
        handler.setLevel(log_level)
    LOG.debug("Initialized logging framework with level %s", log_level)
