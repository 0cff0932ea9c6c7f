import logging
from datetime import datetime
from typing import List

import numpy as np
import pytz
import torch


def setup_logging(level: str = 'INFO'):
    """Set up logging configuration."""
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance with the specified name."""
    return logging.getLogger(name)


def configure_torch(threads: int = 1, deterministic: bool = False):
    """Switch torch to float64 and set the intra-op thread pool.

    Deterministic mode pins a single intra-op thread so reruns are bit-identical.
    """
    torch.set_default_dtype(torch.float64)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    else:
        torch.set_num_threads(max(1, int(threads)))
    get_logger(__name__).debug(
        f"torch configured: threads={torch.get_num_threads()}, deterministic={deterministic}"
    )


def derive_seeds(seed: int, count: int) -> List[int]:
    """Independent 32-bit child seeds for the sampling and initialization stages."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [int(child.generate_state(1)[0]) for child in children]


def get_current_time(timezone_str: str = 'UTC') -> datetime:
    """Get the current time in the given timezone."""
    return datetime.now(pytz.timezone(timezone_str))
