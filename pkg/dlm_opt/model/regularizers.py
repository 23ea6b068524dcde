from typing import Union

import numpy as np

from ..core import (
    DenseMatrix,
    InvalidInputError,
    RegularizerSpec,
    UnsupportedKindError,
)

ORIENTATIONS = ["columns", "rows"]


def _pseudo_huber_sum(v: np.ndarray, mu: float) -> float:
    return float(np.sum(np.sqrt(mu**2 + v**2) - mu))


def _pseudo_huber_grad(v: np.ndarray, mu: float) -> np.ndarray:
    return v / np.sqrt(mu**2 + v**2)


def _split_blocks(spec: RegularizerSpec, v: np.ndarray):
    if spec.split >= v.shape[0]:
        raise InvalidInputError(
            f"partitioned_max split {spec.split} must be smaller than the vector length "
            f"{v.shape[0]}"
        )
    return v[: spec.split], v[spec.split :]


def _inner_sq(inner: str, block: np.ndarray) -> float:
    if inner == "l2":
        return float(block @ block)
    return float(np.abs(block).sum() ** 2)


def _inner_sq_grad(inner: str, block: np.ndarray) -> np.ndarray:
    if inner == "l2":
        return 2.0 * block
    return 2.0 * np.abs(block).sum() * np.sign(block)


def reg_vector_value(spec: RegularizerSpec, v) -> float:
    """
    Per-vector regularizer value f^2(v) (or the plain ||.||_1 term in unsquared mode).

    Args:
        spec (RegularizerSpec): A separable kind, or partitioned_max
        v: Column of D or row of H

    Returns:
        float: Regularizer value
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    kind = spec.kind

    if kind == "squared_l2":
        return float(v @ v)

    if kind == "squared_l1":
        l1 = float(np.abs(v).sum())
        return l1 if spec.unsquared_l1 else l1**2

    if kind == "elastic_net_sq":
        l1 = float(np.abs(v).sum())
        l1_term = l1 if spec.unsquared_l1 else l1**2
        return spec.nu * float(v @ v) + (1.0 - spec.nu) * l1_term

    if kind == "pseudo_huber_sq":
        return _pseudo_huber_sum(v, spec.mu) ** 2

    if kind == "smoothed_elastic_net_sq":
        return spec.nu * float(v @ v) + (1.0 - spec.nu) * _pseudo_huber_sum(v, spec.mu) ** 2

    if kind == "weighted_squared_l2":
        lam = spec.lambda_matrix(v.shape[0])
        if lam.shape[1] != v.shape[0]:
            raise InvalidInputError(
                f"Lambda is {lam.shape} but the vector has {v.shape[0]} entries"
            )
        w = lam @ v
        return float(w @ w)

    if kind == "non_norm_elastic_net":
        weights = spec.diagonal_weights(v.shape[0])
        return spec.nu * float(v @ v) + (1.0 - spec.nu) * float(np.abs(weights * v).sum())

    if kind == "partitioned_max":
        top, bottom = _split_blocks(spec, v)
        return max(_inner_sq(spec.inner, top), _inner_sq(spec.inner, bottom))

    raise UnsupportedKindError(f"{kind} is not defined on a single vector")


def reg_vector_gradient(spec: RegularizerSpec, v) -> np.ndarray:
    """Gradient (a subgradient at kinks, with 0 chosen for zero entries) of reg_vector_value."""
    v = np.asarray(v, dtype=np.float64).ravel()
    kind = spec.kind

    if kind == "squared_l2":
        return 2.0 * v

    if kind == "squared_l1":
        if spec.unsquared_l1:
            return np.sign(v)
        return 2.0 * np.abs(v).sum() * np.sign(v)

    if kind == "elastic_net_sq":
        l1_grad = np.sign(v) if spec.unsquared_l1 else 2.0 * np.abs(v).sum() * np.sign(v)
        return 2.0 * spec.nu * v + (1.0 - spec.nu) * l1_grad

    if kind == "pseudo_huber_sq":
        return 2.0 * _pseudo_huber_sum(v, spec.mu) * _pseudo_huber_grad(v, spec.mu)

    if kind == "smoothed_elastic_net_sq":
        ph = 2.0 * _pseudo_huber_sum(v, spec.mu) * _pseudo_huber_grad(v, spec.mu)
        return 2.0 * spec.nu * v + (1.0 - spec.nu) * ph

    if kind == "weighted_squared_l2":
        lam = spec.lambda_matrix(v.shape[0])
        return 2.0 * lam.T @ (lam @ v)

    if kind == "non_norm_elastic_net":
        weights = spec.diagonal_weights(v.shape[0])
        return 2.0 * spec.nu * v + (1.0 - spec.nu) * weights * np.sign(v)

    if kind == "partitioned_max":
        top, bottom = _split_blocks(spec, v)
        grad = np.zeros_like(v)
        # ties go to the first block
        if _inner_sq(spec.inner, top) >= _inner_sq(spec.inner, bottom):
            grad[: spec.split] = _inner_sq_grad(spec.inner, top)
        else:
            grad[spec.split :] = _inner_sq_grad(spec.inner, bottom)
        return grad

    raise UnsupportedKindError(f"{kind} is not defined on a single vector")


def _as_columns(M: np.ndarray, orientation: str) -> np.ndarray:
    if orientation not in ORIENTATIONS:
        raise InvalidInputError(f"Unknown orientation: {orientation}")
    return M if orientation == "columns" else M.T


def _as_array(M: Union[DenseMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(M, DenseMatrix):
        return M.data
    return np.asarray(M, dtype=np.float64)


def reg_matrix_value(
    spec: RegularizerSpec,
    M: Union[DenseMatrix, np.ndarray],
    orientation: str = "columns",
    weight: float = 1.0,
) -> float:
    """
    Matrix regularizer: weight times the sum of per-vector values.

    ``orientation="columns"`` applies the vector term to each column (the D
    side); ``"rows"`` applies it to each row (the H side). The coupled kinds
    act across the other direction, so on D they sum over rows.

    Args:
        spec (RegularizerSpec): Regularizer kind
        M: D or H
        orientation (str): "columns" or "rows"
        weight (float): Non-negative multiplier

    Returns:
        float: Regularizer value
    """
    if weight < 0:
        raise InvalidInputError(f"weight must be >= 0, got {weight}")
    cols = _as_columns(_as_array(M), orientation)

    if spec.kind == "coupled_rows_l1_sq":
        return weight * float(np.sum(np.abs(cols).sum(axis=1) ** 2))
    if spec.kind == "coupled_rows_l2":
        return weight * float(np.sum(np.linalg.norm(cols, axis=1)))

    total = sum(reg_vector_value(spec, cols[:, j]) for j in range(cols.shape[1]))
    return weight * float(total)


def reg_subgradient(
    spec: RegularizerSpec,
    M: Union[DenseMatrix, np.ndarray],
    orientation: str = "columns",
    weight: float = 1.0,
) -> DenseMatrix:
    """Subgradient of reg_matrix_value with respect to M."""
    if weight < 0:
        raise InvalidInputError(f"weight must be >= 0, got {weight}")
    cols = _as_columns(_as_array(M), orientation)

    if spec.kind == "coupled_rows_l1_sq":
        grad = 2.0 * np.abs(cols).sum(axis=1, keepdims=True) * np.sign(cols)
    elif spec.kind == "coupled_rows_l2":
        norms = np.linalg.norm(cols, axis=1, keepdims=True)
        safe = np.where(norms > 0, norms, 1.0)
        grad = np.where(norms > 0, cols / safe, 0.0)
    else:
        grad = np.empty_like(cols)
        for j in range(cols.shape[1]):
            grad[:, j] = reg_vector_gradient(spec, cols[:, j])

    grad = weight * grad
    return DenseMatrix(grad if orientation == "columns" else grad.T)


def vector_norms(spec: RegularizerSpec, M: np.ndarray, orientation: str) -> np.ndarray:
    """f(v) = sqrt(f^2(v)) for every column (or row) of M."""
    cols = _as_columns(np.asarray(M, dtype=np.float64), orientation)
    return np.array([np.sqrt(reg_vector_value(spec, cols[:, j])) for j in range(cols.shape[1])])
