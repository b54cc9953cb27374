import logging
import os
from logging.config import dictConfig
from typing import Optional


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """
    Configure logging for the simulator.

    Args:
        level (str): Root logging level
        log_file (str, optional): Detailed log file; BOSE_TRANSPORT_LOG_FILE when omitted
    """
    log_file = log_file or os.getenv("BOSE_TRANSPORT_LOG_FILE")
    handlers = {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "default",
            "stream": "ext://sys.stderr",
        },
    }
    if log_file:
        handlers["file"] = {
            "class": "logging.FileHandler",
            "formatter": "detailed",
            "filename": log_file,
            "mode": "a",
        }

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "default": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            },
            "detailed": {
                "format": (
                    "%(asctime)s - %(name)s - %(levelname)s - %(pathname)s:%(lineno)d - %(message)s"
                ),
            },
        },
        "handlers": handlers,
        "root": {
            "level": level.upper(),
            "handlers": list(handlers),
        },
        "loggers": {
            "sqlalchemy.engine": {
                "level": "WARNING",
            },
        },
    }

    dictConfig(logging_config)
