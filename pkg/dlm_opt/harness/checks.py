import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict

import numpy as np
from tqdm import tqdm

from ..core import InvalidInputError
from ..model.prox import prox_sql1, prox_sql1_oracle, sql1_optimality_residual
from ..utils import make_rng

logger = logging.getLogger(__name__)


@dataclass
class ProxCheckResult:
    trials: int
    max_oracle_gap: float
    max_residual: float
    failures: int
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def prox_check(
    trials: int = 1000,
    seed: int = 1,
    max_dim: int = 5,
    oracle_tol: float = 1e-6,
    residual_tol: float = 1e-10,
    show_progress: bool = False,
) -> ProxCheckResult:
    """
    Compare prox_sql1 with the scalar-dual oracle on random (u, lam).

    Each trial draws a dimension in [1, max_dim], u with Normal(0, 2^2)
    entries and lam from Exponential(1); every tenth trial uses lam = 0.
    A trial fails if the sup-norm gap to the oracle exceeds oracle_tol or
    the subgradient residual exceeds residual_tol.

    Args:
        trials (int): Number of random problems
        seed (int): Seed; trial i uses make_rng(seed, i)
        max_dim (int): Largest vector length
        oracle_tol (float): Allowed ||prox - oracle||_inf
        residual_tol (float): Allowed optimality residual
        show_progress (bool): Whether to show progress bar (default: False)

    Returns:
        ProxCheckResult: Worst gaps, failure count and the verdict
    """
    if trials < 1:
        raise InvalidInputError(f"trials must be >= 1, got {trials}")
    if max_dim < 1:
        raise InvalidInputError(f"max_dim must be >= 1, got {max_dim}")

    worst_gap = 0.0
    worst_residual = 0.0
    failures = 0
    for trial in tqdm(range(trials), disable=not show_progress, desc="prox-check"):
        rng = make_rng(seed, trial)
        dim = int(rng.integers(1, max_dim + 1))
        u = rng.normal(0.0, 2.0, size=dim)
        lam = 0.0 if trial % 10 == 9 else float(rng.exponential(1.0))

        z = prox_sql1(u, lam).z
        gap = float(np.max(np.abs(z - prox_sql1_oracle(u, lam))))
        residual = sql1_optimality_residual(u, z, lam)
        worst_gap = max(worst_gap, gap)
        worst_residual = max(worst_residual, residual)
        if gap > oracle_tol or residual > residual_tol:
            failures += 1
            logger.warning(
                "prox check %d failed: dim=%d lam=%.6g gap=%.3g residual=%.3g",
                trial,
                dim,
                lam,
                gap,
                residual,
            )

    logger.info(
        "prox check: %d trials, max gap %.3g, max residual %.3g", trials, worst_gap, worst_residual
    )
    return ProxCheckResult(
        trials=trials,
        max_oracle_gap=worst_gap,
        max_residual=worst_residual,
        failures=failures,
        passed=failures == 0,
    )
