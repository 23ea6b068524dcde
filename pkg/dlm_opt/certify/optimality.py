import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, NamedTuple, Optional, Tuple

import numpy as np
from scipy import linalg

from ..core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    ObservedMatrix,
    ProblemSpec,
    UnsupportedKindError,
)
from ..model.losses import LossCalculator
from ..model.regularizers import reg_subgradient
from ..solvers.base import DataMatrix
from ..solvers.batch import as_data

logger = logging.getLogger(__name__)

# Largest dk + kT for which the finite-difference Hessian is formed
HESSIAN_SIZE_LIMIT = 400


@dataclass
class Certificate:
    grad_D_norm: float
    grad_H_norm: float
    dual_sigma_max: float
    alpha: float  # effective trace-norm weight the dual bound is compared to
    globally_optimal: bool
    hessian_min_eig: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


class ShrinkageOptimum(NamedTuple):
    Z: np.ndarray
    objective: float
    factorization: Factorization


def effective_trace_weight(spec: ProblemSpec, n_samples: int) -> float:
    """
    Weight of the trace norm induced by the two squared-l2 terms.

    min over DH = Z of (a/2)||D||^2 + a/(2 s^2 c)||H||^2 equals a/(s sqrt(c)) ||Z||_tr,
    with c = T when averaged.
    """
    c = n_samples if spec.averaged else 1
    return spec.alpha / (spec.s * np.sqrt(c))


def _require_subspace(spec: ProblemSpec) -> None:
    if spec.loss.kind != "half_squared":
        raise UnsupportedKindError(
            f"Shrinkage oracle needs the half-squared loss, got {spec.loss.kind}"
        )
    if spec.reg_d.kind != "squared_l2" or spec.reg_h.kind != "squared_l2":
        raise UnsupportedKindError("Shrinkage oracle needs squared_l2 on both factors")


def svd_shrinkage_optimum(X: DataMatrix, spec: ProblemSpec) -> ShrinkageOptimum:
    """
    Exact optimum of the subspace problem via singular value shrinkage.

    Z* = U (Sigma - c * a_eff)_+ V^T restricted to the top k components, and a
    balanced factorization of Z* with k columns.
    """
    _require_subspace(spec)
    X = as_data(X)
    X_arr = X.data
    T = X.cols
    c = float(T) if spec.averaged else 1.0
    a_eff = effective_trace_weight(spec, T)

    U, sigma, Vt = linalg.svd(X_arr, full_matrices=False)
    shrunk = np.maximum(sigma - c * a_eff, 0.0)
    shrunk[spec.k :] = 0.0
    Z = (U * shrunk) @ Vt

    objective = 0.5 * float(np.sum((sigma - shrunk) ** 2)) / c + a_eff * float(shrunk.sum())

    # split sqrt(shrunk) so that w_D ||D||^2 == w_H ||H||^2
    w_D, w_H = spec.weight_d(), spec.weight_h(T)
    ratio = (w_H / w_D) ** 0.25 if w_D > 0 else 1.0
    r = min(spec.k, shrunk.shape[0])
    D = np.zeros((X.rows, spec.k))
    H = np.zeros((spec.k, T))
    root = np.sqrt(shrunk[:r])
    D[:, :r] = U[:, :r] * root * ratio
    H[:r, :] = (root / ratio)[:, None] * Vt[:r, :]
    return ShrinkageOptimum(Z, objective, Factorization(DenseMatrix(D), DenseMatrix(H)))


def _gradient_blocks(fact: Factorization, X, spec: ProblemSpec) -> Tuple[np.ndarray, np.ndarray]:
    D, H = fact.D.data, fact.H.data
    G = LossCalculator(spec.loss, X, spec.averaged).gradient(D @ H)
    grad_D = G @ H.T + reg_subgradient(spec.reg_d, D, "columns", spec.weight_d()).data
    grad_H = D.T @ G + reg_subgradient(spec.reg_h, H, "rows", spec.weight_h(X.cols)).data
    return grad_D, grad_H


def _data_norm(X) -> float:
    if isinstance(X, ObservedMatrix):
        return float(np.linalg.norm(X.values.data[X.mask]))
    return float(np.linalg.norm(X.data))


def stationarity_residual(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec
) -> Tuple[float, float]:
    """
    Norms of the gradient blocks of the objective with respect to D and H.

    Both are scaled by 1/max(1, ||X||_F). Non-smooth regularizers use the
    subgradient selection of reg_subgradient.

    Returns:
        Tuple[float, float]: (D residual, H residual)
    """
    X = as_data(X)
    if not (spec.reg_d.is_smooth and spec.reg_h.is_smooth):
        logger.debug("Stationarity residual uses subgradient selections for non-smooth terms")
    grad_D, grad_H = _gradient_blocks(fact, X, spec)
    scale = max(1.0, _data_norm(X))
    return float(np.linalg.norm(grad_D)) / scale, float(np.linalg.norm(grad_H)) / scale


def global_certificate(
    fact: Factorization,
    X: DataMatrix,
    spec: ProblemSpec,
    tol: float = 1e-6,
    sigma_tol: float = 1e-4,
    with_hessian: bool = False,
) -> Certificate:
    """
    Global-optimality certificate for the (weighted) squared-l2 objective.

    A stationary point is globally optimal when the dual bound
    sigma_max(Lambda^{-T} grad L(DH)) <= a_eff holds.

    Args:
        fact (Factorization): Candidate solution
        X: Data
        spec (ProblemSpec): squared_l2 or weighted_squared_l2 on D, squared_l2 on H
        tol (float): Bound on both stationarity residuals
        sigma_tol (float): Relative slack on the dual bound, sigma_max <= a_eff (1 + sigma_tol)
        with_hessian (bool): Also report the finite-difference Hessian minimum eigenvalue

    Returns:
        Certificate: Residuals, dual bound and verdict
    """
    if (
        spec.reg_d.kind not in ("squared_l2", "weighted_squared_l2")
        or spec.reg_h.kind != "squared_l2"
    ):
        raise UnsupportedKindError(
            "The certificate covers squared_l2 / weighted_squared_l2 on D and squared_l2 on H"
        )
    X = as_data(X)
    grad_D_norm, grad_H_norm = stationarity_residual(fact, X, spec)

    G = LossCalculator(spec.loss, X, spec.averaged).gradient(fact.Z)
    lam = spec.reg_d.lambda_matrix(fact.D.rows)
    if lam.shape != (fact.D.rows, fact.D.rows):
        raise InvalidInputError(f"Lambda must be {fact.D.rows} x {fact.D.rows}, got {lam.shape}")
    try:
        dual = linalg.solve(lam.T, G)
    except linalg.LinAlgError as exc:
        raise InvalidInputError("Lambda is not invertible") from exc
    sigma = float(np.linalg.norm(dual, 2)) if np.any(dual) else 0.0

    # the induced weight for weighted_squared_l2 is a_eff ||Lambda Z||_tr
    threshold = effective_trace_weight(spec, X.cols)
    optimal = (
        grad_D_norm <= tol and grad_H_norm <= tol and sigma <= threshold * (1.0 + sigma_tol)
    )

    hessian = hessian_min_eigenvalue(fact, X, spec) if with_hessian else None
    return Certificate(
        grad_D_norm=grad_D_norm,
        grad_H_norm=grad_H_norm,
        dual_sigma_max=sigma,
        alpha=threshold,
        globally_optimal=bool(optimal),
        hessian_min_eig=hessian,
    )


def hessian_min_eigenvalue(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec, fd_step: float = 1e-5
) -> float:
    """
    Smallest eigenvalue of the symmetrised central-difference Hessian over vec(D), vec(H).

    Columns are central differences of the analytic gradient with step
    max(fd_step, fd_step * |x_i|).
    """
    X = as_data(X)
    D, H = fact.D.data, fact.H.data
    d, k = D.shape
    T = H.shape[1]
    n = d * k + k * T
    if n > HESSIAN_SIZE_LIMIT:
        raise InvalidInputError(
            f"Hessian of size {n} exceeds the limit of {HESSIAN_SIZE_LIMIT} variables"
        )

    def gradient(theta: np.ndarray) -> np.ndarray:
        point = Factorization(
            DenseMatrix(theta[: d * k].reshape(d, k)), DenseMatrix(theta[d * k :].reshape(k, T))
        )
        grad_D, grad_H = _gradient_blocks(point, X, spec)
        return np.concatenate([grad_D.ravel(), grad_H.ravel()])

    theta0 = np.concatenate([D.ravel(), H.ravel()])
    hessian = np.empty((n, n))
    for i in range(n):
        step = max(fd_step, fd_step * abs(theta0[i]))
        e = np.zeros(n)
        e[i] = step
        hessian[:, i] = (gradient(theta0 + e) - gradient(theta0 - e)) / (2.0 * step)
    hessian = 0.5 * (hessian + hessian.T)
    return float(linalg.eigvalsh(hessian)[0])

