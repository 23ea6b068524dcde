import logging
import time
from abc import abstractmethod
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..core import (
    DenseMatrix,
    InvalidInputError,
    ProblemSpec,
    TrialReport,
    UnsupportedKindError,
)
from ..model.codes import CodeSolver, check_decoupled
from ..model.losses import LossCalculator
from ..model.prox import prox_sql1, soft_threshold
from ..model.regularizers import reg_vector_gradient, reg_vector_value, reg_subgradient
from ..utils import as_array
from .base import BaseSolver, check_objective, initial_dictionary
from .batch import _reg_curvature, dictionary_objective
from .config import SCHEDULES, OnlineConfig, SgdConfig

logger = logging.getLogger(__name__)

Stream = Union[DenseMatrix, np.ndarray, Iterable]


def schedule_step_size(kind: str, eta0: float, t: int) -> float:
    """
    Decaying step size.

    Args:
        kind (str): "type1" (constant), "type2" (eta0/sqrt(t)) or "type3" (eta0/t)
        eta0 (float): Initial step size > 0
        t (int): Step index >= 1

    Returns:
        float: Step size at t
    """
    if kind not in SCHEDULES:
        raise InvalidInputError(f"Unsupported schedule: {kind}")
    if not eta0 > 0:
        raise InvalidInputError(f"eta0 must be > 0, got {eta0}")
    if t < 1:
        raise InvalidInputError(f"t must be >= 1, got {t}")
    if kind == "type1":
        return eta0
    if kind == "type2":
        return eta0 / np.sqrt(t)
    return eta0 / t


@dataclass
class SgdState:
    D: np.ndarray
    D_prev: np.ndarray
    grad_prev: np.ndarray
    eta: float
    decrease_count: int = 0
    t: int = 0

    def __post_init__(self):
        if not self.eta > 0:
            raise InvalidInputError(f"eta must be > 0, got {self.eta}")


@dataclass
class OnlineState:
    D: np.ndarray
    A: np.ndarray
    B: np.ndarray
    t: int = 0

    @classmethod
    def start(cls, D: np.ndarray) -> "OnlineState":
        d, k = D.shape
        return cls(D=np.array(D), A=np.zeros((k, k)), B=np.zeros((d, k)), t=0)


def accelerated_step(state: SgdState, grad_t, kind: str, eta0: float) -> float:
    """
    Keep the current step size while successive gradients agree.

    When tr(grad_t^T grad_prev) < 0 the decrease counter is bumped and the
    schedule value at the current step index is returned (never more than the
    current step size).
    """
    if float(np.sum(as_array(grad_t) * state.grad_prev)) >= 0:
        return state.eta
    state.decrease_count += 1
    return min(schedule_step_size(kind, eta0, max(state.t, 1)), state.eta)


def stack_stream(stream: Stream) -> np.ndarray:
    """
    Samples as the columns of a d x T matrix.

    A DenseMatrix or 2-D array is read column-wise, like X; any other iterable
    is a sequence of d-vectors.
    """
    if isinstance(stream, DenseMatrix):
        return stream.data
    if isinstance(stream, np.ndarray) and stream.ndim == 2:
        return np.asarray(stream, dtype=np.float64)
    columns = [np.asarray(x, dtype=np.float64).ravel() for x in stream]
    if not columns:
        raise InvalidInputError("The sample stream is empty")
    if len({c.shape[0] for c in columns}) != 1:
        raise InvalidInputError("All samples in the stream must have the same length")
    return np.column_stack(columns)


class IncrementalSolver(BaseSolver):
    """Shared epoch loop: reshuffle, process samples, record the full-data objective."""

    description = "incremental"

    def _initialize(self) -> None:
        check_decoupled(self.spec.reg_h)
        if self.spec.loss.kind == "masked_half_squared":
            raise UnsupportedKindError("Incremental solvers need fully observed samples")

    def _reg_d_weight(self, n_samples: int) -> float:
        # per-sample share of R_D
        w = self.spec.weight_d()
        return w if self.spec.averaged else w / n_samples

    @abstractmethod
    def _start(self, D: np.ndarray, X: np.ndarray) -> None:
        pass

    @abstractmethod
    def _process(self, x: np.ndarray) -> None:
        pass

    @abstractmethod
    def _dictionary(self) -> np.ndarray:
        pass

    def solve(
        self, X: Stream, init: Optional[Union[DenseMatrix, np.ndarray]] = None
    ) -> Tuple[DenseMatrix, TrialReport]:
        X = stack_stream(X)
        d, T = X.shape
        k = self.spec.k
        if init is None:
            cfg = self.config
            D0 = initial_dictionary(d, k, cfg.seed, cfg.init_mean, cfg.init_sd)
        else:
            D0 = np.array(as_array(init), dtype=np.float64)
            if D0.shape != (d, k):
                raise InvalidInputError(f"init must be {d} x {k}, got {D0.shape}")

        self._start(D0, X)
        eval_every = self.config.eval_every or T
        data = DenseMatrix(X)

        objective = check_objective(dictionary_objective(D0, data, self.spec, self.config), 0, None)
        trace: List[Tuple[int, float]] = [(0, objective)]
        self.step_sizes: List[float] = []
        self.inner_iterations: List[int] = []
        elapsed = 0.0
        t = 0

        epochs = tqdm(
            range(self.config.epochs), disable=not self.config.show_progress, desc=self.description
        )
        for epoch in epochs:
            order = np.random.default_rng([self.config.seed, epoch]).permutation(T)
            for j in order:
                t += 1
                start = time.perf_counter()
                self._process(X[:, j])
                elapsed += time.perf_counter() - start
                if t % eval_every == 0:
                    objective = check_objective(
                        dictionary_objective(self._dictionary(), data, self.spec, self.config),
                        t,
                        trace[-1][1],
                    )
                    trace.append((t, objective))

        if trace[-1][0] != t:
            objective = check_objective(
                dictionary_objective(self._dictionary(), data, self.spec, self.config),
                t,
                trace[-1][1],
            )
            trace.append((t, objective))

        previous = trace[-2][1] if len(trace) > 1 else trace[-1][1]
        converged = abs(previous - objective) <= 1e-6 * max(1.0, abs(objective))
        logger.info(
            "%s finished: objective=%.10g steps=%d (%.2fs in updates)",
            self.description,
            objective,
            t,
            elapsed,
        )
        report = TrialReport(
            final_objective=objective,
            objective_trace=trace,
            iterations=t,
            converged=converged,
            seed=self.config.seed,
            inner_iterations=self.inner_iterations,
            step_sizes=self.step_sizes,
            wall_clock=elapsed,
        )
        return DenseMatrix(self._dictionary()), report


class SgdSolver(IncrementalSolver):
    description = "SGD AM-DLM"

    def _start(self, D: np.ndarray, X: np.ndarray) -> None:
        cfg = self.config
        self.codes = CodeSolver(D, self.spec, cfg, mode="subgradient")
        self.state = SgdState(
            D=np.array(D),
            D_prev=np.array(D),
            grad_prev=np.zeros_like(D),
            eta=schedule_step_size(cfg.schedule, cfg.eta0, 1),
        )
        self.reg_weight = self._reg_d_weight(X.shape[1])

    def _dictionary(self) -> np.ndarray:
        return self.state.D

    def _process(self, x: np.ndarray) -> None:
        cfg, state = self.config, self.state
        state.t += 1

        self.codes.D = state.D
        h = self.codes.solve(x)
        z = state.D @ h
        loss_grad = LossCalculator(self.spec.loss, x[:, None]).gradient(z[:, None])
        grad = loss_grad @ h[None, :] + reg_subgradient(
            self.spec.reg_d, state.D, "columns", self.reg_weight
        ).data

        if cfg.accelerate:
            eta = accelerated_step(state, grad, cfg.schedule, cfg.eta0)
        else:
            eta = schedule_step_size(cfg.schedule, cfg.eta0, state.t)

        D_new = state.D - eta * grad + cfg.momentum * (state.D - state.D_prev)
        state.D_prev, state.D = state.D, D_new
        state.grad_prev = grad
        state.eta = eta
        self.step_sizes.append(eta)


class OnlineSolver(IncrementalSolver):
    description = "Online AM-DLM"

    def _initialize(self) -> None:
        super()._initialize()
        if self.spec.loss.kind != "half_squared":
            raise UnsupportedKindError(
                f"Online AM-DLM needs the half-squared loss, got {self.spec.loss.kind}"
            )
        if self.spec.reg_d.kind in ("coupled_rows_l1_sq", "coupled_rows_l2"):
            raise UnsupportedKindError(f"{self.spec.reg_d.kind} on D does not split over columns")

    def _start(self, D: np.ndarray, X: np.ndarray) -> None:
        self.codes = CodeSolver(D, self.spec, self.config)
        self.state = OnlineState.start(D)
        self.reg_weight = self._reg_d_weight(X.shape[1])

    def _dictionary(self) -> np.ndarray:
        return self.state.D

    def _process(self, x: np.ndarray) -> None:
        state = self.state
        state.t += 1

        self.codes.D = state.D
        h = self.codes.solve(x)
        beta = max(1.0 / state.t, self.config.beta_floor)
        state.A = (1.0 - beta) * state.A + beta * np.outer(h, h)
        state.B = (1.0 - beta) * state.B + beta * np.outer(x, h)
        self.step_sizes.append(beta)

        state.D, sweeps = self._update_dictionary(state.D, state.A, state.B)
        self.inner_iterations.append(sweeps)

    def _column_surrogate(self, d_j, j, D, A, B) -> float:
        rest = D @ A[:, j] - A[j, j] * D[:, j]
        return (
            0.5 * A[j, j] * float(d_j @ d_j)
            + float(d_j @ (rest - B[:, j]))
            + self.reg_weight * reg_vector_value(self.spec.reg_d, d_j)
        )

    def _column_update(self, j: int, D: np.ndarray, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        reg, w = self.spec.reg_d, self.reg_weight
        d_j = D[:, j]
        grad = D @ A[:, j] - B[:, j]

        if reg.kind == "squared_l2":
            denom = A[j, j] + 2.0 * w
            if denom <= 0:
                return d_j
            # exact column minimiser
            return d_j - (grad + 2.0 * w * d_j) / denom

        nu = reg.l2_fraction
        if reg.kind in ("squared_l1", "elastic_net_sq", "non_norm_elastic_net"):
            l = A[j, j] + 2.0 * w * nu
            if l <= 0:
                return d_j
            u = d_j - (grad + 2.0 * w * nu * d_j) / l
            if reg.kind == "non_norm_elastic_net":
                return soft_threshold(u, w * (1.0 - nu) * reg.diagonal_weights(u.shape[0]) / l)
            if reg.unsquared_l1:
                return soft_threshold(u, w * (1.0 - nu) / l)
            return prox_sql1(u, w * (1.0 - nu) / l).z

        # smooth kinds and partitioned_max: (sub)gradient step, backtracked on the surrogate
        l = A[j, j] + _reg_curvature(reg, d_j[:, None], w)
        if l <= 0:
            return d_j
        current = self._column_surrogate(d_j, j, D, A, B)
        step_grad = grad + w * reg_vector_gradient(reg, d_j)
        for _ in range(40):
            candidate = d_j - step_grad / l
            if self._column_surrogate(candidate, j, D, A, B) <= current + 1e-15 * abs(current):
                return candidate
            l *= 2.0
        return d_j

    def _update_dictionary(
        self, D: np.ndarray, A: np.ndarray, B: np.ndarray
    ) -> Tuple[np.ndarray, int]:
        """Block-coordinate descent over columns from a warm start."""
        D = np.array(D)
        for sweep in range(1, self.config.max_sweeps + 1):
            previous = D.copy()
            for j in range(D.shape[1]):
                D[:, j] = self._column_update(j, D, A, B)
            change = np.linalg.norm(D - previous) / max(np.linalg.norm(previous), 1e-12)
            if change < self.config.tol:
                return D, sweep
        return D, self.config.max_sweeps


def sgd_am_dlm(
    stream: Stream,
    spec: ProblemSpec,
    config: Optional[SgdConfig] = None,
    init: Optional[Union[DenseMatrix, np.ndarray]] = None,
) -> Tuple[DenseMatrix, TrialReport]:
    """
    Stochastic-gradient AM-DLM over reshuffled passes of the data.

    Per sample: h by a subgradient code solve, then
    D <- D - eta_t (grad l_t + grad R_D) + momentum (D_{t-1} - D_{t-2}).

    Args:
        stream: Samples (DenseMatrix/2-D array read column-wise, or an iterable of vectors)
        spec (ProblemSpec): Problem definition; the H-regularizer must decouple
        config (Optional[SgdConfig]): Schedule, eta0, momentum, acceleration, epochs
        init: Optional starting dictionary

    Returns:
        Tuple[DenseMatrix, TrialReport]: Final dictionary and run record
    """
    return SgdSolver(spec, config or SgdConfig()).solve(stream, init)


def online_am_dlm(
    stream: Stream,
    spec: ProblemSpec,
    config: Optional[OnlineConfig] = None,
    init: Optional[Union[DenseMatrix, np.ndarray]] = None,
) -> Tuple[DenseMatrix, TrialReport]:
    """
    Online AM-DLM with sufficient statistics A = avg(h h^T), B = avg(x h^T).

    The dictionary minimises 1/2 tr(D^T D A) - tr(D^T B) + R_D(D) by column
    block-coordinate descent from the previous D, stopping when the relative
    change of D is below config.tol or after config.max_sweeps sweeps.
    """
    return OnlineSolver(spec, config or OnlineConfig()).solve(stream, init)
