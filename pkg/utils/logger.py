"""
Logging helpers shared by the library and the command-line launcher
"""

import logging
import sys
from typing import Optional

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
ROOT_NAME = "pipesched"


def setup_logging(level: str = "INFO", log_file: Optional[str] = None) -> None:
    """Configure stderr output plus an optional log file"""
    root = logging.getLogger(ROOT_NAME)
    root.setLevel(getattr(logging, str(level).upper(), logging.INFO))
    for handler in list(root.handlers):
        root.removeHandler(handler)

    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(stream)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)


class Logger:
    def __init__(self, name: str = ROOT_NAME):
        if not name.startswith(ROOT_NAME):
            name = f"{ROOT_NAME}.{name}"
        self._log = logging.getLogger(name)

    def debug(self, msg: str) -> None:
        self._log.debug(msg)

    def info(self, msg: str) -> None:
        self._log.info(msg)

    def warning(self, msg: str) -> None:
        self._log.warning(msg)

    def error(self, msg: str) -> None:
        self._log.error(msg)

    def is_debug(self) -> bool:
        return self._log.isEnabledFor(logging.DEBUG)
