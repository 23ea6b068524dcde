import logging
from typing import Tuple

import numpy as np

from ..core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
)
from ..model.losses import LossCalculator
from ..model.regularizers import vector_norms
from ..solvers.base import DataMatrix
from ..solvers.batch import as_data
from .optimality import effective_trace_weight

logger = logging.getLogger(__name__)

DIRECTIONS = ["summed_to_producted", "producted_to_summed"]


def _require_norm(reg: RegularizerSpec, side: str) -> None:
    if not reg.is_norm:
        raise UnsupportedKindError(
            f"Rebalancing needs a norm regularizer on {side}; {reg.kind} is not one"
        )


def rebalance_factors(
    fact: Factorization, reg_d: RegularizerSpec, reg_h: RegularizerSpec, direction: str
) -> Factorization:
    """
    Rescale each (column of D, row of H) pair between the summed and producted forms.

    With gamma_i = f_r(H_i:) / f_c(D_:i), summed_to_producted returns
    (D Gamma^{-1}, Gamma H) and producted_to_summed returns
    (D Gamma^{1/3}, Gamma^{-1/3} H); the two are inverse to each other.
    Indices where either norm is zero are dropped first. The product DH is
    unchanged up to floating-point rounding.

    Args:
        fact (Factorization): Input factors
        reg_d, reg_h: Norm-type regularizers (f = sqrt of the vector value)
        direction (str): "summed_to_producted" or "producted_to_summed"

    Returns:
        Factorization: Rescaled factors, possibly with fewer columns
    """
    if direction not in DIRECTIONS:
        raise InvalidInputError(f"Unknown direction: {direction}")
    _require_norm(reg_d, "D")
    _require_norm(reg_h, "H")

    D, H = fact.D.data, fact.H.data
    col_norms = vector_norms(reg_d, D, "columns")
    row_norms = vector_norms(reg_h, H, "rows")
    keep = (col_norms > 0) & (row_norms > 0)
    if not keep.any():
        raise InvalidInputError("Every column of D or row of H has zero norm; nothing to rebalance")
    if not keep.all():
        logger.info("Dropping %d zero-norm index(es) before rebalancing", int((~keep).sum()))

    D, H = D[:, keep], H[keep, :]
    gamma = row_norms[keep] / col_norms[keep]
    if direction == "summed_to_producted":
        scale = 1.0 / gamma
    else:
        scale = np.cbrt(gamma)
    return Factorization(DenseMatrix(D * scale), DenseMatrix(H / scale[:, None]))


def producted_stationarity_residual(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec
) -> Tuple[float, float]:
    """
    Gradient norms of loss(DH) + a_eff * sum ||D_:i|| ||H_i:|| (the producted form).

    Only the smooth (squared_l2 / weighted_squared_l2) norms are supported;
    indices with a zero column or row are skipped. Scaled like
    stationarity_residual.
    """
    for reg in (spec.reg_d, spec.reg_h):
        if reg.kind not in ("squared_l2", "weighted_squared_l2"):
            raise UnsupportedKindError(f"Producted residual is not defined for {reg.kind}")
    X = as_data(X)
    D, H = fact.D.data, fact.H.data
    weight = effective_trace_weight(spec, X.cols)
    G = LossCalculator(spec.loss, X, spec.averaged).gradient(D @ H)
    grad_D = G @ H.T
    grad_H = D.T @ G

    lam_d = spec.reg_d.lambda_matrix(D.shape[0])
    lam_h = spec.reg_h.lambda_matrix(H.shape[1])
    for i in range(D.shape[1]):
        LD = lam_d @ D[:, i]
        LH = lam_h @ H[i, :]
        nd, nh = np.linalg.norm(LD), np.linalg.norm(LH)
        if nd == 0 or nh == 0:
            continue
        grad_D[:, i] += weight * nh * (lam_d.T @ LD) / nd
        grad_H[i, :] += weight * nd * (lam_h.T @ LH) / nh

    values = X.values.data[X.mask] if isinstance(X, ObservedMatrix) else X.data
    scale = max(1.0, float(np.linalg.norm(values)))
    return float(np.linalg.norm(grad_D)) / scale, float(np.linalg.norm(grad_H)) / scale


def scaled_problem(spec: ProblemSpec, s: float) -> ProblemSpec:
    """
    The sample-scaled objective whose minimisers are (D / sqrt(s), sqrt(s) H).

    D weight becomes a s / 2 and the H weight is divided by s.
    """
    if not s > 0:
        raise InvalidInputError(f"s must be > 0, got {s}")
    return spec.replace(alpha=spec.alpha * s, s=spec.s * s)


def scaling_transport(fact: Factorization, s: float) -> Factorization:
    """
    Map a factorization to (D / sqrt(s), sqrt(s) H).

    objective_value(output, X, scaled_problem(spec, s)) equals
    objective_value(fact, X, spec) for the squared-l2 regularizers.
    """
    if not s > 0:
        raise InvalidInputError(f"s must be > 0, got {s}")
    root = np.sqrt(s)
    return Factorization(DenseMatrix(fact.D.data / root), DenseMatrix(fact.H.data * root))
