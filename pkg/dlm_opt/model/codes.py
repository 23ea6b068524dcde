import logging
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, Optional, Union

import numpy as np

from ..core import (
    DenseMatrix,
    InvalidInputError,
    LossSpec,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
)
from .losses import LossCalculator
from .prox import prox_sql1, soft_threshold
from .regularizers import reg_vector_gradient, reg_vector_value

logger = logging.getLogger(__name__)

CODE_MODES = ["prox", "subgradient"]


@dataclass
class InnerSolveConfig:
    """Tolerances for the per-sample code solve."""

    inner_tol: float = 1e-8
    inner_max_iters: int = 5000

    def validate(self) -> None:
        """Validate the configuration"""
        if not self.inner_tol > 0:
            raise InvalidInputError(f"inner_tol must be > 0, got {self.inner_tol}")
        if self.inner_max_iters < 1:
            raise InvalidInputError(f"inner_max_iters must be >= 1, got {self.inner_max_iters}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


# H-regularizers whose row form splits into independent per-sample terms
DECOUPLED_H_REGULARIZERS = [
    "squared_l2",
    "elastic_net_sq",
    "pseudo_huber_sq",
    "smoothed_elastic_net_sq",
]


def check_decoupled(reg: RegularizerSpec) -> None:
    """Raise UnsupportedKindError unless the H-regularizer factors across samples."""
    if reg.kind == "squared_l1" and reg.unsquared_l1:
        return
    if reg.kind == "squared_l1":
        raise UnsupportedKindError(
            "squared_l1 on H couples all samples of a row; use unsquared_l1=True "
            "for per-sample code solves"
        )
    if reg.kind not in DECOUPLED_H_REGULARIZERS:
        raise UnsupportedKindError(f"{reg.kind} on H does not decouple across samples")


class CodeSolver:
    """Minimises loss(Dh; x) + w * f(h) for a single sample."""

    def __init__(
        self,
        D: np.ndarray,
        spec: ProblemSpec,
        config: Optional[InnerSolveConfig] = None,
        mode: str = "prox",
    ):
        if mode not in CODE_MODES:
            raise InvalidInputError(f"Unsupported code solve mode: {mode}")
        check_decoupled(spec.reg_h)
        self.D = np.asarray(D, dtype=np.float64)
        if self.D.ndim != 2 or self.D.shape[1] != spec.k:
            raise InvalidInputError(f"D must have {spec.k} columns, got shape {self.D.shape}")
        self.spec = spec
        self.config = config or InnerSolveConfig()
        self.config.validate()
        self.mode = mode
        self.reg = spec.reg_h
        self.weight = spec.sample_weight_h()

    @property
    def _l2_share(self) -> float:
        if self.reg.kind in ("elastic_net_sq", "squared_l1"):
            return self.reg.l2_fraction
        return 1.0

    def _has_closed_form(self) -> bool:
        return self.reg.kind == "squared_l2" and self.spec.loss.kind in (
            "half_squared",
            "masked_half_squared",
        )

    def solve(self, x, mask: Optional[np.ndarray] = None, h0: Optional[np.ndarray] = None):
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.shape[0] != self.D.shape[0]:
            raise InvalidInputError(f"x has {x.shape[0]} entries, D has {self.D.shape[0]} rows")
        k = self.D.shape[1]

        D, x_obs = self.D, x
        if mask is not None:
            mask = np.asarray(mask, dtype=bool).ravel()
            if not mask.any():
                return np.zeros(k)
            if self.spec.loss.kind == "masked_half_squared":
                D, x_obs = self.D[mask], x[mask]
            else:
                raise UnsupportedKindError(f"{self.spec.loss.kind} loss cannot use a mask")

        if self._has_closed_form():
            return self._ridge(D, x_obs)

        loss_kind = self.spec.loss
        if loss_kind.kind == "masked_half_squared":
            # rows already restricted to the observed set
            loss_kind = LossSpec("half_squared")
        calculator = LossCalculator(loss_kind, x_obs[:, None], averaged=False)
        if self.mode == "subgradient" and self._nonsmooth_weight() > 0:
            return self._subgradient(D, calculator, h0)
        return self._proximal_gradient(D, calculator, h0)

    def _ridge(self, D: np.ndarray, x: np.ndarray) -> np.ndarray:
        if self.weight == 0:
            return np.linalg.lstsq(D, x, rcond=None)[0]
        A = D.T @ D + 2.0 * self.weight * np.eye(D.shape[1])
        try:
            return np.linalg.solve(A, D.T @ x)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(A, D.T @ x, rcond=None)[0]

    def _nonsmooth_weight(self) -> float:
        if self.reg.kind in ("elastic_net_sq", "squared_l1"):
            return self.weight * (1.0 - self._l2_share)
        return 0.0

    def _smooth_parts(self, D: np.ndarray, calculator: LossCalculator):
        """Smooth objective and gradient (loss plus every differentiable regularizer part)."""
        w = self.weight
        prox_kind = self.reg.kind in ("elastic_net_sq", "squared_l1")
        l2 = self._l2_share

        def f(h: np.ndarray) -> float:
            value = calculator.value((D @ h)[:, None])
            if prox_kind:
                return value + w * l2 * float(h @ h)
            return value + w * reg_vector_value(self.reg, h)

        def grad(h: np.ndarray) -> np.ndarray:
            g = D.T @ calculator.gradient((D @ h)[:, None])[:, 0]
            if prox_kind:
                return g + 2.0 * w * l2 * h
            return g + w * reg_vector_gradient(self.reg, h)

        return f, grad

    def _prox(self) -> Callable[[np.ndarray, float], np.ndarray]:
        tau = self._nonsmooth_weight()
        if tau == 0:
            return lambda u, step: u
        if self.reg.unsquared_l1:
            return lambda u, step: soft_threshold(u, tau * step)
        return lambda u, step: prox_sql1(u, tau * step).z

    def _nonsmooth_value(self, h: np.ndarray) -> float:
        tau = self._nonsmooth_weight()
        if tau == 0:
            return 0.0
        l1 = float(np.abs(h).sum())
        return tau * (l1 if self.reg.unsquared_l1 else l1**2)

    def _initial_lipschitz(self, D: np.ndarray, calculator: LossCalculator) -> float:
        return max(
            calculator.curvature * float(np.linalg.norm(D, 2)) ** 2
            + 2.0 * self.weight * self._l2_share,
            1e-12,
        )

    def _proximal_gradient(self, D, calculator, h0) -> np.ndarray:
        f, grad = self._smooth_parts(D, calculator)
        prox = self._prox()
        tol = self.config.inner_tol

        def total(h):
            return f(h) + self._nonsmooth_value(h)

        L = self._initial_lipschitz(D, calculator)
        h = np.zeros(D.shape[1]) if h0 is None else np.array(h0, dtype=np.float64)
        y, t = h.copy(), 1.0
        F_h = total(h)

        for _ in range(self.config.inner_max_iters):
            fy, gy = f(y), grad(y)
            while True:
                candidate = prox(y - gy / L, 1.0 / L)
                diff = candidate - y
                if f(candidate) <= fy + gy @ diff + 0.5 * L * (diff @ diff) + 1e-15 * abs(fy):
                    break
                L *= 2.0

            if L * np.max(np.abs(diff), initial=0.0) <= tol:
                return candidate

            F_candidate = total(candidate)
            if F_candidate > F_h:
                # restart momentum from the last accepted point
                y, t = h.copy(), 1.0
                continue

            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = candidate + ((t - 1.0) / t_next) * (candidate - h)
            h, F_h, t = candidate, F_candidate, t_next

        logger.debug("Code solve hit inner_max_iters=%d", self.config.inner_max_iters)
        return h

    def _subgradient(self, D, calculator, h0) -> np.ndarray:
        f, grad = self._smooth_parts(D, calculator)
        tau = self._nonsmooth_weight()
        L = self._initial_lipschitz(D, calculator) + 2.0 * tau * D.shape[1]

        h = np.zeros(D.shape[1]) if h0 is None else np.array(h0, dtype=np.float64)
        best, best_value = h.copy(), f(h) + self._nonsmooth_value(h)
        for i in range(self.config.inner_max_iters):
            l1 = float(np.abs(h).sum())
            scale = 1.0 if self.reg.unsquared_l1 else 2.0 * l1
            g = grad(h) + tau * scale * np.sign(h)
            if np.max(np.abs(g), initial=0.0) <= self.config.inner_tol:
                return h
            h = h - g / (L * np.sqrt(i + 1.0))
            value = f(h) + self._nonsmooth_value(h)
            if value < best_value:
                best, best_value = h.copy(), value
        return best


def solve_h_given_d(
    D: Union[DenseMatrix, np.ndarray],
    x,
    spec: ProblemSpec,
    config: Optional[InnerSolveConfig] = None,
    mode: str = "prox",
    mask: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Code for one sample: argmin_h loss(Dh; x) + a/(2 s^2) * f_r(h).

    Args:
        D: Dictionary with spec.k columns
        x: Sample vector
        spec (ProblemSpec): Problem definition; the H-regularizer must decouple across samples
        config (Optional[InnerSolveConfig]): inner_tol / inner_max_iters
        mode (str): "prox" (proximal gradient) or "subgradient"
        mask (Optional[np.ndarray]): Observed entries of x for the masked loss

    Returns:
        np.ndarray: The code vector h of length k
    """
    D_arr = D.data if isinstance(D, DenseMatrix) else D
    return CodeSolver(D_arr, spec, config, mode).solve(x, mask=mask)


def encode(
    D: Union[DenseMatrix, np.ndarray],
    X: Union[DenseMatrix, ObservedMatrix, np.ndarray],
    spec: ProblemSpec,
    config: Optional[InnerSolveConfig] = None,
    mode: str = "prox",
) -> DenseMatrix:
    """
    Encode every column of X against a fixed dictionary.

    Returns:
        DenseMatrix: H of shape k x T
    """
    D_arr = D.data if isinstance(D, DenseMatrix) else np.asarray(D, dtype=np.float64)
    mask = None
    if isinstance(X, ObservedMatrix):
        X_arr, mask = X.values.data, X.mask
    elif isinstance(X, DenseMatrix):
        X_arr = X.data
    else:
        X_arr = np.asarray(X, dtype=np.float64)

    solver = CodeSolver(D_arr, spec, config, mode)

    if mask is None and spec.loss.kind in ("half_squared", "masked_half_squared") and (
        spec.reg_h.kind == "squared_l2"
    ):
        # all columns share one ridge system
        if solver.weight == 0:
            return DenseMatrix(np.linalg.lstsq(D_arr, X_arr, rcond=None)[0])
        A = D_arr.T @ D_arr + 2.0 * solver.weight * np.eye(spec.k)
        return DenseMatrix(np.linalg.solve(A, D_arr.T @ X_arr))

    H = np.empty((spec.k, X_arr.shape[1]))
    for t in range(X_arr.shape[1]):
        H[:, t] = solver.solve(X_arr[:, t], mask=None if mask is None else mask[:, t])
    return DenseMatrix(H)
