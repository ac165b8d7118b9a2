# Setup logging
import logging
import sys
from pathlib import Path
from typing import Dict

import numpy as np

# Fixed spawn keys keep every named stream stable when new streams are added.
RANDOM_STREAMS: Dict[str, int] = {
    "train": 0,
    "goals": 1,
    "eval": 2,
    "moving_goal": 3,
    "refine": 4,
}


def setup_logging(name=__name__):
    """
    Return a named logger, configuring the root logger on first use.

    Records go to stdout and to `debug/goal_reaching.log` inside the package,
    so train, refine and eval runs share one log format.

    Args:
        name: Logger name, normally the calling module's `__name__`

    Returns:
        logging.Logger for `name`
    """
    debug_dir = Path(__file__).resolve().parent.parent / "debug"
    debug_dir.mkdir(parents=True, exist_ok=True)

    # root handlers are installed once per process
    if not logging.getLogger().handlers:
        logging.basicConfig(
            level=logging.INFO,
            format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
            handlers=[
                logging.StreamHandler(sys.stdout),  # Console output
                logging.FileHandler(debug_dir / "goal_reaching.log"),  # File output
            ],
        )

    logger = logging.getLogger(name)
    logger.debug("Logger initialized with name: %s", name)
    return logger


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """
    Create the random generator for one named sub-stream of a run.

    All randomness flows from the single root seed; each consumer (training,
    goal sampling, evaluation, moving goals, refinement) draws from its own
    stream so partial re-runs reproduce exactly.

    Args:
        seed: Root seed of the run
        stream: One of the keys of RANDOM_STREAMS

    Returns:
        Independent numpy Generator for that stream

    Raises:
        KeyError: If the stream name is unknown
    """
    if stream not in RANDOM_STREAMS:
        raise KeyError(
            f"Unknown random stream '{stream}'. Available: {list(RANDOM_STREAMS)}"
        )
    sequence = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(RANDOM_STREAMS[stream],)
    )
    return np.random.default_rng(sequence)
