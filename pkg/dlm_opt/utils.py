import logging
import os
import struct
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np
from dotenv import load_dotenv
from joblib import Parallel, delayed
from tqdm import tqdm

from .core import DenseMatrix, InvalidInputError, ObservedMatrix

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_env_loaded = False
_max_workers_override: Optional[int] = None


def load_environment() -> None:
    """Load a .env file once so DLM_THREADS / DLM_LOG_LEVEL can come from it."""
    global _env_loaded
    if not _env_loaded:
        load_dotenv()
        _env_loaded = True


def configure_logging(level: Optional[str] = None) -> None:
    """
    Attach a stream handler to the package logger.

    Args:
        level (Optional[str]): Level name; defaults to DLM_LOG_LEVEL or WARNING
    """
    load_environment()
    level = (level or os.getenv("DLM_LOG_LEVEL") or "WARNING").upper()
    package_logger = logging.getLogger("dlm_opt")
    if not package_logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        package_logger.addHandler(handler)
    package_logger.setLevel(level)


def set_max_workers(n: Optional[int]) -> None:
    """Override the worker cap for this process (None restores the environment value)."""
    global _max_workers_override
    if n is not None and n < 1:
        raise InvalidInputError(f"Worker count must be >= 1, got {n}")
    _max_workers_override = n


def resolve_workers(requested: Optional[int] = None) -> int:
    """
    Number of worker threads for the harness pool.

    Args:
        requested (Optional[int]): Explicit request; capped by DLM_THREADS when set

    Returns:
        int: Worker count >= 1
    """
    load_environment()
    cap = _max_workers_override
    if cap is None:
        raw = os.getenv("DLM_THREADS")
        if raw:
            try:
                cap = max(1, int(raw))
            except ValueError:
                logger.warning("Ignoring non-integer DLM_THREADS=%r", raw)
    n = requested if requested is not None else (cap or os.cpu_count() or 1)
    if cap is not None:
        n = min(n, cap)
    return max(1, int(n))


def run_ordered(
    fn: Callable[[T], R],
    items: Sequence[T],
    workers: Optional[int] = None,
    show_progress: bool = False,
    desc: str = "Running",
) -> List[R]:
    """
    Map fn over items on a thread pool; results come back in input order.

    Args:
        fn: Function applied to each item
        items: Work items
        workers: Requested pool size (see resolve_workers)
        show_progress: Whether to show progress bar (default: False)
        desc: Progress bar label

    Returns:
        List of results, ordered like items regardless of completion order
    """
    n_workers = min(resolve_workers(workers), max(1, len(items)))
    progress = tqdm(items, disable=not show_progress, desc=desc)
    if n_workers == 1:
        return [fn(item) for item in progress]

    # threading backend: fn may be a closure
    return Parallel(n_jobs=n_workers, prefer="threads")(delayed(fn)(item) for item in progress)


def float_key(x: float) -> int:
    """Bit pattern of a float as an unsigned integer, for seeding."""
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def _entropy(keys: Sequence[Any]) -> List[int]:
    entropy = []
    for key in keys:
        if isinstance(key, (float, np.floating)):
            entropy.append(float_key(key))
        else:
            value = int(key)
            if value < 0:
                raise InvalidInputError(f"Seed keys must be non-negative, got {value}")
            entropy.append(value)
    return entropy


def make_rng(*keys: Any) -> np.random.Generator:
    """
    PCG64 generator seeded from a SeedSequence over integer keys.

    Floats are converted with float_key, so a cell's stream depends only on its
    own parameter values.
    """
    return np.random.default_rng(np.random.SeedSequence(_entropy(keys)))


def derive_seed(*keys: Any) -> int:
    """A 63-bit integer seed drawn from the same SeedSequence make_rng would use."""
    state = np.random.SeedSequence(_entropy(keys)).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))


def as_array(M: Any) -> np.ndarray:
    if isinstance(M, DenseMatrix):
        return M.data
    if isinstance(M, ObservedMatrix):
        return M.values.data
    return np.asarray(M, dtype=np.float64)


def as_vector(v: Iterable[float]) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise InvalidInputError(f"Expected a vector, got shape {arr.shape}")
    return arr


def spectral_norm(M: np.ndarray, mode: str = "analytic", iters: int = 100, seed: int = 0) -> float:
    """
    Largest singular value of M.

    ``analytic`` uses the SVD; ``power-iteration`` runs power iteration on MᵀM
    from a seeded start and returns a slightly inflated estimate so it stays an
    upper bound in practice.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0 or not np.any(M):
        return 0.0
    if mode == "analytic":
        return float(np.linalg.norm(M, 2))
    if mode != "power-iteration":
        raise InvalidInputError(f"Unknown lipschitz_mode: {mode}")

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(M.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        new_sigma = float(np.sqrt(norm))
        if abs(new_sigma - sigma) <= 1e-12 * max(new_sigma, 1.0):
            sigma = new_sigma
            break
        sigma = new_sigma
    # power iteration approaches from below
    return sigma * (1.0 + 1e-6)
