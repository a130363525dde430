# run_logger.py
import logging
import os
import sys
from pathlib import Path

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(message)s"
RUN_LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"


class RunLogHandler(logging.Handler):
    """Keeps formatted records in memory until the run directory is known."""

    def __init__(self, level=logging.NOTSET):
        super().__init__(level)
        self.records: list[str] = []

    def emit(self, record):
        self.records.append(self.format(record))

    def flush_to(self, path) -> None:
        Path(path).write_text("".join(f"{line}\n" for line in self.records), encoding="utf-8")
        self.records.clear()


# Function to set up logger
def setup_run_logger(level=None) -> RunLogHandler:
    level = level or os.getenv("COVKERN_LOG_LEVEL", "INFO")
    logger = logging.getLogger()
    logger.setLevel(level.upper() if isinstance(level, str) else level)

    # Avoid adding multiple handlers
    if not any(isinstance(h, logging.StreamHandler) and getattr(h, "_covkern", False) for h in logger.handlers):
        console = logging.StreamHandler(sys.stderr)
        console.setFormatter(logging.Formatter(LOG_FORMAT, datefmt="%H:%M:%S"))
        console._covkern = True
        logger.addHandler(console)

    for h in logger.handlers:
        if isinstance(h, RunLogHandler):
            h.records.clear()
            return h
    handler = RunLogHandler()
    handler.setFormatter(logging.Formatter(RUN_LOG_FORMAT))
    logger.addHandler(handler)
    return handler
