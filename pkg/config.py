import os
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()

ARTIFACT_VERSION = "1.0.0"


class Config:
    """Runtime settings read from the environment (experiment settings live in experiment.py)."""

    # Logging settings
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_EVERY = int(os.getenv('PINNFLOW_LOG_EVERY', 100))  # iterations between progress lines

    # Parallelism: --threads overrides PINNFLOW_THREADS
    THREADS = int(os.getenv('PINNFLOW_THREADS', 1))
    DETERMINISTIC = os.getenv('PINNFLOW_DETERMINISTIC', 'false').lower() == 'true'

    # Output settings
    OUTPUT_DIR = os.getenv('PINNFLOW_OUTPUT_DIR', './runs')
    PREDICT_CHUNK = int(os.getenv('PINNFLOW_PREDICT_CHUNK', 8192))  # points per prediction batch

    # Timezone used for manifest timestamps
    TIMEZONE = os.getenv('TIMEZONE', 'UTC')

    @classmethod
    def resolve_threads(cls, cli_threads=None) -> int:
        """Thread count from the command line, falling back to PINNFLOW_THREADS."""
        if cli_threads is not None:
            return int(cli_threads)
        return cls.THREADS

    @classmethod
    def validate(cls):
        """Validate that configuration values are usable."""
        errors = []

        if cls.THREADS < 1:
            errors.append("PINNFLOW_THREADS must be at least 1")

        if cls.PREDICT_CHUNK < 1:
            errors.append("PINNFLOW_PREDICT_CHUNK must be at least 1")

        if cls.LOG_EVERY < 1:
            errors.append("PINNFLOW_LOG_EVERY must be at least 1")

        if cls.LOG_LEVEL.upper() not in ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'):
            errors.append(f"LOG_LEVEL '{cls.LOG_LEVEL}' is not a logging level")

        if errors:
            raise ValueError(f"Configuration validation failed: {'; '.join(errors)}")
