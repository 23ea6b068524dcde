import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ..core import InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProxResult:
    z: np.ndarray
    threshold_used: float
    support_size: int


def soft_threshold(u, tau) -> np.ndarray:
    """
    Elementwise soft-thresholding sign(u) * max(|u| - tau, 0).

    Args:
        u: Vector or matrix
        tau: Threshold >= 0 (scalar, or an array broadcastable to u)

    Returns:
        np.ndarray: Thresholded copy of u
    """
    u = np.asarray(u, dtype=np.float64)
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr < 0):
        raise InvalidInputError(f"Threshold must be >= 0, got {tau}")
    return np.sign(u) * np.maximum(np.abs(u) - tau_arr, 0.0)


def prox_sql1(u, lam: float) -> ProxResult:
    """
    Proximal map of lam * ||z||_1^2: argmin_z 1/2||u - z||^2 + lam * ||z||_1^2.

    The solution is a soft-threshold of u at 2*lam*C/(1 + 2*lam*r), where r is
    the support size and C the sum of the r largest magnitudes. Magnitudes are
    sorted with a stable sort so equal entries keep their original order.

    Args:
        u: Input vector
        lam (float): Penalty weight >= 0

    Returns:
        ProxResult: minimiser, threshold and support size
    """
    if lam < 0:
        raise InvalidInputError(f"lam must be >= 0, got {lam}")
    u = np.asarray(u, dtype=np.float64).ravel()

    magnitudes = np.abs(u)
    order = np.argsort(-magnitudes, kind="stable")
    ranked = magnitudes[order]

    r = 0
    running_sum = 0.0
    while r < ranked.size and ranked[r] > 2.0 * lam * running_sum / (1.0 + 2.0 * lam * r):
        running_sum += ranked[r]
        r += 1

    threshold = 2.0 * lam * running_sum / (1.0 + 2.0 * lam * r)
    z = soft_threshold(u, threshold)
    return ProxResult(z=z, threshold_used=float(threshold), support_size=int(np.count_nonzero(z)))


def prox_sql1_oracle(u, lam: float, xtol: float = 1e-15, maxiter: int = 100) -> np.ndarray:
    """
    Independent solution of the lam*||z||_1^2 prox through its scalar dual.

    lam*||z||_1^2 = max over m >= 0 of m*||z||_1 - m^2/(4 lam), so the prox
    equals soft_threshold(u, m*) where m* is the root of the decreasing dual
    derivative ||soft_threshold(u, m)||_1 - m / (2 lam) on [0, 2 lam ||u||_1].
    """
    if lam < 0:
        raise InvalidInputError(f"lam must be >= 0, got {lam}")
    u = np.asarray(u, dtype=np.float64).ravel()
    upper = 2.0 * lam * float(np.abs(u).sum())
    if lam == 0 or upper == 0:
        return u.copy()

    def dual_slope(m: float) -> float:
        return float(np.abs(soft_threshold(u, m)).sum()) - m / (2.0 * lam)

    m_star, info = brentq(
        dual_slope,
        0.0,
        upper,
        xtol=xtol,
        rtol=4.0 * np.finfo(float).eps,
        maxiter=maxiter,
        full_output=True,
        disp=False,
    )
    if not info.converged:
        logger.warning("Prox oracle root search stopped: %s (m=%.17g)", info.flag, m_star)
    else:
        logger.debug("Prox oracle root m=%.17g after %d iterations", m_star, info.iterations)
    return soft_threshold(u, m_star)


def group_soft_threshold(r, tau: float) -> np.ndarray:
    """Proximal map of tau*||r||_2: shrink the whole vector toward zero."""
    if tau < 0:
        raise InvalidInputError(f"Threshold must be >= 0, got {tau}")
    r = np.asarray(r, dtype=np.float64)
    norm = np.linalg.norm(r)
    if norm <= tau:
        return np.zeros_like(r)
    return (1.0 - tau / norm) * r


def sql1_optimality_residual(u, z, lam: float) -> float:
    """
    Largest violation of (z - u) + 2 lam ||z||_1 g = 0 for the best g in the
    subdifferential of ||.||_1 at z.
    """
    u = np.asarray(u, dtype=np.float64).ravel()
    z = np.asarray(z, dtype=np.float64).ravel()
    scale = 2.0 * lam * np.abs(z).sum()
    residual = z - u
    on_support = z != 0
    worst = 0.0
    if on_support.any():
        worst = float(np.max(np.abs(residual[on_support] + scale * np.sign(z[on_support]))))
    off = ~on_support
    if off.any():
        # need |u_i| <= scale so that g_i = u_i / scale lies in [-1, 1]
        worst = max(worst, float(np.max(np.maximum(np.abs(u[off]) - scale, 0.0))))
    return worst
