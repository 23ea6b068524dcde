import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize

from ..core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    NumericalError,
    ProblemSpec,
    RegularizerSpec,
)
from ..model.regularizers import reg_matrix_value, reg_subgradient
from ..utils import make_rng

logger = logging.getLogger(__name__)

DEFAULT_RHO_SCHEDULE = tuple(10.0**p for p in range(0, 7))
RHO_EXTENSION_LIMIT = 1e9
FEASIBILITY_TOL = 1e-6
DEFAULT_ETAS = (0.25, 0.5, 0.75)


def _as_array(Z: Union[DenseMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(Z, DenseMatrix):
        return Z.data
    arr = np.asarray(Z, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInputError(f"Expected a matrix, got shape {arr.shape}")
    return arr


class InducedRegularizerEstimator:
    """Quadratic-penalty homotopy for min over DH = Z of R_D(D) + R_H(H)."""

    def __init__(
        self,
        reg_d: RegularizerSpec,
        reg_h: RegularizerSpec,
        k: int,
        rho_schedule: Optional[Sequence[float]] = None,
        n_starts: int = 5,
        seed: int = 0,
    ):
        if k < 1:
            raise InvalidInputError(f"k must be >= 1, got {k}")
        if n_starts < 1:
            raise InvalidInputError(f"n_starts must be >= 1, got {n_starts}")
        self.reg_d = reg_d
        self.reg_h = reg_h
        self.k = k
        self.rho_schedule = list(rho_schedule or DEFAULT_RHO_SCHEDULE)
        if not self.rho_schedule or any(rho <= 0 for rho in self.rho_schedule):
            raise InvalidInputError("rho_schedule must be a non-empty list of positive values")
        self.n_starts = n_starts
        self.seed = seed

    def _regularizer(self, D: np.ndarray, H: np.ndarray) -> float:
        return reg_matrix_value(self.reg_d, D, "columns") + reg_matrix_value(self.reg_h, H, "rows")

    def _penalised(self, Z: np.ndarray, rho: float):
        d, T = Z.shape
        k = self.k

        def fun(theta: np.ndarray) -> Tuple[float, np.ndarray]:
            D = theta[: d * k].reshape(d, k)
            H = theta[d * k :].reshape(k, T)
            R = D @ H - Z
            value = self._regularizer(D, H) + rho * float(np.sum(R * R))
            grad_D = reg_subgradient(self.reg_d, D, "columns").data + 2.0 * rho * R @ H.T
            grad_H = reg_subgradient(self.reg_h, H, "rows").data + 2.0 * rho * D.T @ R
            return value, np.concatenate([grad_D.ravel(), grad_H.ravel()])

        return fun

    def _run_start(self, Z: np.ndarray, start: int) -> Tuple[float, float]:
        d, T = Z.shape
        k = self.k
        rng = make_rng(self.seed, start)
        scale = np.sqrt(np.linalg.norm(Z) / max(1.0, np.sqrt(k * max(d, T))))
        theta = rng.normal(0.0, scale, size=d * k + k * T)
        target = FEASIBILITY_TOL * np.linalg.norm(Z)

        schedule = list(self.rho_schedule)
        residual = np.inf
        stage = 0
        while stage < len(schedule):
            rho = schedule[stage]
            result = minimize(
                self._penalised(Z, rho),
                theta,
                jac=True,
                method="L-BFGS-B",
                options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12},
            )
            theta = result.x
            D = theta[: d * k].reshape(d, k)
            H = theta[d * k :].reshape(k, T)
            residual = float(np.linalg.norm(D @ H - Z))
            stage += 1
            if stage == len(schedule) and residual > target and rho * 10.0 <= RHO_EXTENSION_LIMIT:
                schedule.append(rho * 10.0)

        D = theta[: d * k].reshape(d, k)
        H = theta[d * k :].reshape(k, T)
        return self._regularizer(D, H), residual

    def estimate(self, Z: Union[DenseMatrix, np.ndarray]) -> float:
        Z = _as_array(Z)
        if not np.any(Z):
            return 0.0

        target = FEASIBILITY_TOL * np.linalg.norm(Z)
        feasible = []
        best_residual = np.inf
        for start in range(self.n_starts):
            value, residual = self._run_start(Z, start)
            best_residual = min(best_residual, residual)
            logger.debug("start %d: value=%.10g residual=%.3g", start, value, residual)
            if residual <= target:
                feasible.append(value)

        if not feasible:
            raise NumericalError(
                "Penalty homotopy did not reach the feasibility tolerance",
                diagnostic={"best_residual": best_residual, "target": target, "k": self.k},
            )
        return float(min(feasible))


def induced_reg_estimate(
    Z: Union[DenseMatrix, np.ndarray],
    reg_d: RegularizerSpec,
    reg_h: RegularizerSpec,
    k: int,
    rho_schedule: Optional[Sequence[float]] = None,
    n_starts: int = 5,
    seed: int = 0,
) -> float:
    """
    Estimate R_k(Z) = min over DH = Z (D with k columns) of sum f_c^2(D_:i) + sum f_r^2(H_i:).

    Minimises the regularizers plus rho ||DH - Z||_F^2 with L-BFGS-B, raising
    rho through the schedule with warm starts (x10 up to 1e9 beyond the
    schedule if still infeasible). The best of ``n_starts`` random starts that
    reach ||DH - Z||_F <= 1e-6 ||Z||_F is returned.

    Args:
        Z: Target matrix
        reg_d (RegularizerSpec): Column regularizer on D
        reg_h (RegularizerSpec): Row regularizer on H
        k (int): Inner dimension
        rho_schedule: Increasing penalty weights, default 1, 10, ..., 1e6
        n_starts (int): Random starts
        seed (int): Seed for the starts

    Returns:
        float: Estimated induced regularizer value
    """
    return InducedRegularizerEstimator(reg_d, reg_h, k, rho_schedule, n_starts, seed).estimate(Z)


def segment_violation(
    Z1: np.ndarray,
    Z2: np.ndarray,
    reg_d: RegularizerSpec,
    reg_h: RegularizerSpec,
    k: int,
    etas: Sequence[float] = DEFAULT_ETAS,
    **estimator_options,
) -> float:
    """Largest R(eta Z1 + (1 - eta) Z2) - eta R(Z1) - (1 - eta) R(Z2) over etas."""
    estimator = InducedRegularizerEstimator(reg_d, reg_h, k, **estimator_options)
    r1 = estimator.estimate(Z1)
    r2 = estimator.estimate(Z2)
    worst = -np.inf
    for eta in etas:
        mid = estimator.estimate(eta * np.asarray(Z1) + (1.0 - eta) * np.asarray(Z2))
        worst = max(worst, mid - eta * r1 - (1.0 - eta) * r2)
    return float(worst)


def convexity_probe(
    reg_d: RegularizerSpec,
    reg_h: RegularizerSpec,
    k: int,
    dims: Tuple[int, int],
    n_segments: int = 5,
    seed: int = 0,
    etas: Sequence[float] = DEFAULT_ETAS,
    **estimator_options,
) -> float:
    """
    Probe the induced regularizer for convexity along random segments.

    Args:
        reg_d, reg_h: Factor regularizers
        k (int): Inner dimension
        dims: (d, T) of the random matrices
        n_segments (int): Number of random (Z1, Z2) pairs
        seed (int): Seed for the pairs
        etas: Interpolation points on each segment

    Returns:
        float: Maximum measured violation; values <= the estimator tolerance mean none was found
    """
    if n_segments < 1:
        raise InvalidInputError(f"n_segments must be >= 1, got {n_segments}")
    d, T = dims
    worst = -np.inf
    for segment in range(n_segments):
        rng = make_rng(seed, d, T, segment)
        Z1 = rng.standard_normal((d, T))
        Z2 = rng.standard_normal((d, T))
        violation = segment_violation(Z1, Z2, reg_d, reg_h, k, etas, **estimator_options)
        logger.debug("segment %d: violation %.3g", segment, violation)
        worst = max(worst, violation)
    return float(worst)


def irp_gap(fact: Factorization, spec: ProblemSpec, **estimator_options) -> float:
    """
    Relative gap between the weighted regularizer value of a factorization and
    the induced minimum over all factorizations of the same Z.

    For degree-two regularizers min over DH = Z of w_D R_D + w_H R_H equals
    sqrt(w_D w_H) R_k(Z); a gap near 0 means the induced regularization
    property holds at this point.
    """
    w_D, w_H = spec.weight_d(), spec.weight_h(fact.H.cols)
    value = w_D * reg_matrix_value(spec.reg_d, fact.D, "columns") + w_H * reg_matrix_value(
        spec.reg_h, fact.H, "rows"
    )
    induced = np.sqrt(w_D * w_H) * induced_reg_estimate(
        fact.Z, spec.reg_d, spec.reg_h, fact.k, **estimator_options
    )
    return float((value - induced) / max(induced, 1e-12))
