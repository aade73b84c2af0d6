# config.py
import os
from dotenv import load_dotenv

# Load environment variables from .env
load_dotenv()


def _int_env(name: str, default: int) -> int:
    try:
        return int(os.environ.get(name, default))
    except ValueError:
        return default


class Config:
    DEBUG = False # Default to False for base config
    TESTING = False
    FILE_LOGGING = True

    # Where every command writes its artifacts (overridden by --output-dir)
    OUTPUT_DIR = os.environ.get('TLL_OUTPUT_DIR', 'out')

    # Rotating log file, placed under <output_dir>/logs
    LOG_FILE_NAME = os.environ.get('TLL_LOG_FILE_NAME', 'tll_sizer.log')
    LOG_MAX_BYTES = _int_env('TLL_LOG_MAX_BYTES', 10 * 1024 * 1024) # 10MB
    LOG_BACKUP_COUNT = _int_env('TLL_LOG_BACKUP_COUNT', 5)

    # Run defaults that RunConfig picks up when neither file nor flag sets them
    DEFAULT_SEED = _int_env('TLL_DEFAULT_SEED', 0)
    EQUIVALENCE_SAMPLES = _int_env('TLL_EQUIVALENCE_SAMPLES', 20_000)
    SUP_SAMPLES = _int_env('TLL_SUP_SAMPLES', 10_000)

    @staticmethod
    def check_settings(cfg) -> None:
        """Rejects environment values no run could use."""
        if cfg.LOG_MAX_BYTES <= 0 or cfg.LOG_BACKUP_COUNT < 0:
            raise ValueError("TLL_LOG_MAX_BYTES must be positive and TLL_LOG_BACKUP_COUNT non-negative")
        if cfg.EQUIVALENCE_SAMPLES < 1 or cfg.SUP_SAMPLES < 1:
            raise ValueError("Sample counts from the environment must be >= 1")


class DevelopmentConfig(Config):
    DEBUG = True
    FILE_LOGGING = False


class ProductionConfig(Config):
    DEBUG = False # Ensure Debug is False for batch runs
    FILE_LOGGING = True


class TestingConfig(Config):
    TESTING = True
    FILE_LOGGING = False
    EQUIVALENCE_SAMPLES = 2_000
    SUP_SAMPLES = 2_000


# Select config based on environment
config = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': ProductionConfig
}
