"""Parallel corpus runs and an on-disk cache of example reports."""

import logging
import time
from pathlib import Path
from typing import Any, Callable, List, Optional, Sequence, TypeVar

from diskcache import Cache
from joblib import Parallel, delayed

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

CACHE_DIRNAME = ".symred_cache"


class ResultsCache:
    """Cache for finished example reports."""

    def __init__(self, cache_dir: Path, max_age: float = 7 * 24 * 3600):
        self.cache = Cache(str(Path(cache_dir) / CACHE_DIRNAME))
        self.max_age = max_age

    def get(self, key: str) -> Optional[Any]:
        try:
            value, timestamp = self.cache.get(key, default=(None, None))
            if value is not None and time.time() - timestamp <= self.max_age:
                logger.debug("cache hit %s", key[:16])
                return value
        except Exception:
            logger.debug("cache read failed for %s", key[:16], exc_info=True)
        return None

    def set(self, key: str, value: Any) -> None:
        try:
            self.cache.set(key, (value, time.time()))
        except Exception:
            logger.warning("could not cache report %s", key[:16])

    def close(self) -> None:
        self.cache.close()


def report_key(digest: str, instantiation: str, seed: int, tol: float, trials: int) -> str:
    return f"{digest}:{instantiation}:{seed}:{tol!r}:{trials}"


class ParallelProcessor:
    """Run independent jobs with joblib, returning results in submission order."""

    def __init__(self, n_jobs: int = -1, batch_size: int = 1):
        self.n_jobs = n_jobs
        self.batch_size = batch_size

    def map(self, func: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self.n_jobs == 1 or len(items) <= 1:
            return [func(item) for item in items]
        batches = [items[i:i + self.batch_size] for i in range(0, len(items), self.batch_size)]
        with Parallel(n_jobs=self.n_jobs) as parallel:
            results = parallel(delayed(self._process_batch)(batch, func) for batch in batches)
        return [item for batch_result in results for item in batch_result]

    @staticmethod
    def _process_batch(items: Sequence[T], func: Callable[[T], R]) -> List[R]:
        return [func(item) for item in items]
