from functools import lru_cache
from pathlib import Path

from application.core.logging import get_logger
from application.models import NDigitDataset
from infrastructure.storage import read_dataset

logger = get_logger(__name__)


@lru_cache(maxsize=4)
def _dataset(path: str, mtime_ns: int) -> NDigitDataset:
    logger.info(f"Loading N-digit dataset from {path}")
    return read_dataset(path)


def dataset(path: Path | str) -> NDigitDataset:
    """Cached dataset reader; a rewritten file is picked up through its modification time."""
    path = Path(path)
    try:
        mtime = path.stat().st_mtime_ns
    except OSError:
        mtime = -1  # let read_dataset raise its IoFailure
    return _dataset(str(path), mtime)


def clear_caches() -> None:
    _dataset.cache_clear()


__all__ = [
    "dataset",
    "clear_caches",
]
