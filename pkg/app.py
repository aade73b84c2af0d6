# app.py
import os
import sys
import logging
from dataclasses import dataclass
from logging.handlers import RotatingFileHandler
from typing import Optional, Type

from config import config, Config

# --- Make the package importable when run from a checkout ---
script_dir = os.path.dirname(os.path.abspath(__file__))
if script_dir not in sys.path:
    sys.path.insert(0, script_dir)
# -------------------------------------------------------------

LOGGER_NAME = 'tll_sizer'
LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [%(pathname)s:%(lineno)d]'


@dataclass
class AppContext:
    """Loaded configuration plus the configured package logger for one run."""
    config_name: str
    settings: Type[Config]
    logger: logging.Logger
    output_dir: str
    debug: bool


def create_app(config_name: Optional[str] = None, output_dir: Optional[str] = None,
               debug: bool = False) -> AppContext:
    """Application Factory Function"""
    # --- Load Config FIRST ---
    if config_name is None:
        config_name = os.environ.get('TLL_ENV', 'production')

    if config_name not in config:
        print(f"WARNING: Invalid TLL_ENV or config name '{config_name}'. Defaulting to 'production'.", file=sys.stderr)
        config_name = 'production'
    settings = config[config_name]
    settings.check_settings(settings)
    # --- Config loaded ---

    is_debug = bool(debug or settings.DEBUG)
    output_dir = output_dir or settings.OUTPUT_DIR

    # --- Configure Logging ---
    log_level = logging.DEBUG if is_debug else logging.INFO
    logger = logging.getLogger(LOGGER_NAME)

    # Repeated runs in one process (tests) must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.propagate = False
    logger.setLevel(log_level)

    stream_handler = logging.StreamHandler(sys.stderr)
    stream_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    stream_handler.setLevel(log_level)
    logger.addHandler(stream_handler)

    if settings.FILE_LOGGING and not settings.TESTING:
        try:
            log_dir = os.path.join(output_dir, 'logs')
            os.makedirs(log_dir, exist_ok=True)
            log_file = os.path.join(log_dir, settings.LOG_FILE_NAME)

            file_handler = RotatingFileHandler(log_file, maxBytes=settings.LOG_MAX_BYTES,
                                               backupCount=settings.LOG_BACKUP_COUNT)
            file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
            file_handler.setLevel(logging.INFO)
            logger.addHandler(file_handler)
            logger.debug(f"File logging configured at {log_file}")
        except OSError as log_e:
            logger.error(f"Failed to configure file logging: {log_e}", exc_info=True)

    logger.debug(f"Loaded configuration '{config_name}' (debug={is_debug}, output_dir={output_dir})")
    return AppContext(config_name=config_name, settings=settings, logger=logger,
                      output_dir=output_dir, debug=is_debug)
