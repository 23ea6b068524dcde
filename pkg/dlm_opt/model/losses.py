from typing import Optional, Tuple, Union

import numpy as np

from ..core import DenseMatrix, InvalidInputError, LossSpec, ObservedMatrix, UnsupportedKindError
from .prox import soft_threshold

Target = Union[DenseMatrix, ObservedMatrix, np.ndarray]


class LossCalculator:
    """Evaluates a matching loss and its gradient with respect to Z."""

    def __init__(self, spec: LossSpec, X: Target, averaged: bool = False):
        self.spec = spec
        self.averaged = averaged
        self.values, self.mask = self._split_target(X)

        if spec.kind == "cross_entropy_sigmoid":
            if np.any(self.values < 0) or np.any(self.values > 1):
                raise InvalidInputError("cross_entropy_sigmoid targets must lie in [0, 1]")

    def _split_target(self, X: Target) -> Tuple[np.ndarray, Optional[np.ndarray]]:
        if isinstance(X, ObservedMatrix):
            if self.spec.kind != "masked_half_squared":
                raise UnsupportedKindError(
                    f"{self.spec.kind} loss cannot use a partially observed matrix"
                )
            return X.values.data, X.mask
        if isinstance(X, DenseMatrix):
            return X.data, None
        arr = np.asarray(X, dtype=np.float64)
        if arr.ndim != 2:
            raise InvalidInputError(f"Expected a 2-D target, got shape {arr.shape}")
        return arr, None

    def _check(self, Z: np.ndarray) -> None:
        if Z.shape != self.values.shape:
            raise InvalidInputError(f"Shape mismatch: Z {Z.shape} vs X {self.values.shape}")

    @property
    def divisor(self) -> float:
        if not self.averaged:
            return 1.0
        if self.spec.kind == "masked_half_squared" and self.mask is not None:
            return float(self.mask.sum())
        return float(self.values.shape[1])

    @property
    def curvature(self) -> float:
        """Upper bound on the second derivative of the loss per entry of Z."""
        scale = 0.25 if self.spec.kind == "cross_entropy_sigmoid" else 1.0
        return scale / self.divisor

    def _observed(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.mask

    def value(self, Z: np.ndarray) -> float:
        self._check(Z)
        kind = self.spec.kind
        X = self.values

        if kind == "half_squared":
            total = 0.5 * np.sum((Z - X) ** 2)
        elif kind == "masked_half_squared":
            total = 0.5 * np.sum(((Z - X) * self._observed()) ** 2)
        elif kind == "cross_entropy_sigmoid":
            total = np.sum(np.logaddexp(0.0, Z) - X * Z)
        else:
            # Huber form of min over S of 1/2||Z + S - X||^2 + a_s||S||_1
            a_s = self.spec.alpha_s
            r = np.abs(X - Z)
            total = np.sum(np.where(r <= a_s, 0.5 * r**2, a_s * r - 0.5 * a_s**2))

        return float(total / self.divisor)

    def gradient(self, Z: np.ndarray) -> np.ndarray:
        self._check(Z)
        kind = self.spec.kind
        X = self.values

        if kind == "half_squared":
            grad = Z - X
        elif kind == "masked_half_squared":
            grad = (Z - X) * self._observed()
        elif kind == "cross_entropy_sigmoid":
            grad = 0.5 * (1.0 + np.tanh(0.5 * Z)) - X
        else:
            a_s = self.spec.alpha_s
            grad = np.clip(Z - X, -a_s, a_s)

        return grad / self.divisor


def _as_z(Z: Union[DenseMatrix, np.ndarray]) -> np.ndarray:
    if isinstance(Z, DenseMatrix):
        return Z.data
    return np.asarray(Z, dtype=np.float64)


def loss_value(
    spec: LossSpec, Z: Union[DenseMatrix, np.ndarray], X: Target, averaged: bool = False
) -> float:
    """
    Evaluate the matching loss L(Z; X).

    Args:
        spec (LossSpec): Loss kind
        Z: Reconstruction DH
        X: Data, an ObservedMatrix for the masked loss
        averaged (bool): Divide by T (or by the observed count for the masked loss)

    Returns:
        float: Loss value
    """
    return LossCalculator(spec, X, averaged).value(_as_z(Z))


def loss_gradient(
    spec: LossSpec, Z: Union[DenseMatrix, np.ndarray], X: Target, averaged: bool = False
) -> DenseMatrix:
    """Gradient of loss_value with respect to Z (zero at unobserved entries)."""
    return DenseMatrix(LossCalculator(spec, X, averaged).gradient(_as_z(Z)))


def robust_inner_solve(residual_target, alpha_s: float) -> np.ndarray:
    """
    Optimal noise column S for the robust half-squared loss.

    Args:
        residual_target: x - Dh
        alpha_s (float): l1 weight on S, must be > 0

    Returns:
        np.ndarray: soft_threshold(x - Dh, alpha_s)
    """
    if not alpha_s > 0:
        raise InvalidInputError(f"alpha_s must be > 0, got {alpha_s}")
    return soft_threshold(np.asarray(residual_target, dtype=np.float64), alpha_s)


def robust_noise(Z: Union[DenseMatrix, np.ndarray], X: Target, alpha_s: float) -> DenseMatrix:
    """Optimal noise matrix S = soft_threshold(X - Z, alpha_s) for the whole data set."""
    X_arr = X.data if isinstance(X, DenseMatrix) else np.asarray(X, dtype=np.float64)
    Z_arr = _as_z(Z)
    if Z_arr.shape != X_arr.shape:
        raise InvalidInputError(f"Shape mismatch: Z {Z_arr.shape} vs X {X_arr.shape}")
    return DenseMatrix(robust_inner_solve(X_arr - Z_arr, alpha_s))
