"""Utility functions for irfield."""

import os
import time
import logging
from typing import Optional, Callable, Any, Iterable, List, Sequence, Tuple
from functools import wraps

import numpy as np

logger = logging.getLogger(__name__)


def get_env_or_default(key: str, default: Optional[str] = None) -> Optional[str]:
    """Get environment variable or return default."""
    return os.environ.get(key, default)


def setup_logging(level: int = logging.INFO) -> None:
    """Setup logging for irfield."""
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def derive_seed(seed: int, *items: int) -> int:
    """Mix a base seed with item indices into an independent child seed."""
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + [int(i) & 0xFFFFFFFF for i in items])
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def make_rng(seed: int, *items: int) -> np.random.Generator:
    """Get a generator for a seed and optional item indices."""
    return np.random.default_rng(derive_seed(seed, *items))


def ordered_sum(arrays: Sequence[Sequence[np.ndarray]]) -> List[np.ndarray]:
    """
    Sum per-item gradient lists pairwise in a fixed order.

    Args:
        arrays: One list of arrays per item, all lists shaped alike

    Returns:
        Elementwise sum, independent of how the items were computed
    """
    items = [list(a) for a in arrays]
    if not items:
        return []
    while len(items) > 1:
        merged = []
        for i in range(0, len(items) - 1, 2):
            merged.append([x + y for x, y in zip(items[i], items[i + 1])])
        if len(items) % 2:
            merged.append(items[-1])
        items = merged
    return items[0]


def timing_stats(durations_s: Iterable[float]) -> dict:
    """Summarize wall-clock durations in milliseconds."""
    ms = np.asarray(list(durations_s), dtype=np.float64) * 1e3
    if ms.size == 0:
        return {"count": 0, "mean_ms": 0.0, "std_ms": 0.0, "median_ms": 0.0}
    return {
        "count": int(ms.size),
        "mean_ms": float(ms.mean()),
        "std_ms": float(ms.std()),
        "median_ms": float(np.median(ms)),
    }


def time_calls(func: Callable[[], Any], calls: int = 100, warmup: int = 10) -> Tuple[List[float], Any]:
    """Time repeated calls of a zero-argument function after warmup."""
    result = None
    for _ in range(warmup):
        result = func()
    durations = []
    for _ in range(calls):
        start = time.perf_counter()
        result = func()
        durations.append(time.perf_counter() - start)
    return durations, result


def log_duration(label: Optional[str] = None, level: int = logging.INFO) -> Callable:
    """Decorator to log how long a function call took."""

    def decorator(func: Callable) -> Callable:
        name = label or func.__name__

        @wraps(func)
        def wrapper(*args: Any, **kwargs: Any) -> Any:
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                logger.log(level, f"{name} finished in {time.perf_counter() - start:.3f}s")

        return wrapper

    return decorator


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, 1e-6 * (1 + max|a|))."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    floor = 1e-6 * (1.0 + (np.max(np.abs(a)) if a.size else 0.0))
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
