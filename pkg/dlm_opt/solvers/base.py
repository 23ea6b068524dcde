import logging
from abc import ABC, abstractmethod
from typing import Any, Optional, Tuple, Union

import numpy as np

from ..core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    NumericalError,
    ObservedMatrix,
    ProblemSpec,
    TrialReport,
)

logger = logging.getLogger(__name__)

MAX_INIT_REDRAWS = 5

DataMatrix = Union[DenseMatrix, ObservedMatrix, np.ndarray]


def data_shape(X: DataMatrix) -> Tuple[int, int]:
    if isinstance(X, (DenseMatrix, ObservedMatrix)):
        return X.shape
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise InvalidInputError(f"Expected a 2-D data matrix, got shape {arr.shape}")
    return arr.shape


def _draw_full_rank(
    rng: np.random.Generator, shape: Tuple[int, int], mean: float, sd: float, name: str
) -> np.ndarray:
    target = min(shape)
    for attempt in range(MAX_INIT_REDRAWS + 1):
        M = rng.normal(mean, sd, size=shape)
        if np.linalg.matrix_rank(M) == target:
            return M
        logger.warning("Initial %s is rank-deficient (attempt %d), re-drawing", name, attempt + 1)
    raise NumericalError(
        f"Could not draw a full-rank initial {name} after {MAX_INIT_REDRAWS} re-draws",
        diagnostic={"shape": list(shape), "mean": mean, "sd": sd},
    )


def initial_factorization(
    d: int, T: int, k: int, seed: int, mean: float = 0.0, sd: Optional[float] = None
) -> Factorization:
    """
    Random Gaussian starting point for the batch solver.

    Args:
        d, T, k: Data rows, samples and inner dimension
        seed (int): PRNG seed
        mean (float): Entry mean
        sd (Optional[float]): Entry standard deviation, 1/sqrt(k) when None

    Returns:
        Factorization: Full-rank (D, H)
    """
    sd = 1.0 / np.sqrt(k) if sd is None else sd
    rng = np.random.default_rng(seed)
    D = _draw_full_rank(rng, (d, k), mean, sd, "D")
    H = _draw_full_rank(rng, (k, T), mean, sd, "H")
    return Factorization(DenseMatrix(D), DenseMatrix(H))


def initial_dictionary(
    d: int, k: int, seed: int, mean: float = 0.0, sd: Optional[float] = None
) -> np.ndarray:
    sd = 1.0 / np.sqrt(k) if sd is None else sd
    return _draw_full_rank(np.random.default_rng(seed), (d, k), mean, sd, "D")


def check_objective(value: float, iteration: int, last_finite: Optional[float]) -> float:
    if not np.isfinite(value):
        raise NumericalError(
            f"Objective became {value} at iteration {iteration}",
            diagnostic={"iteration": iteration, "last_finite_objective": last_finite},
        )
    return value


class BaseSolver(ABC):
    def __init__(self, spec: ProblemSpec, config: Any):
        self.spec = spec
        self.config = config
        self.config.validate()
        self._initialize()

    @abstractmethod
    def _initialize(self) -> None:
        """Check the problem is one this solver handles"""
        pass

    @abstractmethod
    def solve(self, X: DataMatrix, init: Optional[Any] = None) -> Tuple[Any, TrialReport]:
        """Run the solver on X"""
        pass
