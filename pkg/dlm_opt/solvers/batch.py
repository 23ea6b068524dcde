import logging
import time
from typing import Dict, NamedTuple, Optional, Tuple, Union

import numpy as np
from tqdm import tqdm

from ..core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    NumericalError,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    TrialReport,
    UnsupportedKindError,
)
from ..model.codes import InnerSolveConfig, encode
from ..model.losses import LossCalculator, loss_value
from ..model.prox import group_soft_threshold, prox_sql1, soft_threshold
from ..model.regularizers import reg_matrix_value, reg_subgradient
from ..utils import spectral_norm
from .base import BaseSolver, DataMatrix, check_objective, initial_factorization
from .config import SolverConfig

logger = logging.getLogger(__name__)

LIPSCHITZ_FLOOR = 1e-12

# Step families, one per regularizer structure
STEP_FAMILIES = ["gradient", "soft", "sql1", "coupled"]


class LipschitzBound(NamedTuple):
    value: float
    floored: bool


def as_data(X: DataMatrix) -> Union[DenseMatrix, ObservedMatrix]:
    if isinstance(X, (DenseMatrix, ObservedMatrix)):
        return X
    return DenseMatrix(X)


def _check_shapes(fact: Factorization, X: Union[DenseMatrix, ObservedMatrix]) -> None:
    if fact.D.rows != X.rows or fact.H.cols != X.cols:
        raise InvalidInputError(
            f"Factorization ({fact.D.rows} x {fact.k}) * ({fact.k} x {fact.H.cols}) "
            f"does not conform to data {X.shape}"
        )


def objective_value(fact: Factorization, X: DataMatrix, spec: ProblemSpec) -> float:
    """
    Full objective loss(DH) + R_D(D) + R_H(H).

    Args:
        fact (Factorization): Current (D, H)
        X: Data (ObservedMatrix for the masked loss)
        spec (ProblemSpec): Problem definition

    Returns:
        float: Objective value with D weight a/2 and H weight a/(2 s^2 c)
    """
    X = as_data(X)
    _check_shapes(fact, X)
    D, H = fact.D.data, fact.H.data
    return (
        loss_value(spec.loss, D @ H, X, spec.averaged)
        + reg_matrix_value(spec.reg_d, D, "columns", spec.weight_d())
        + reg_matrix_value(spec.reg_h, H, "rows", spec.weight_h(X.cols))
    )


def dictionary_objective(
    D: Union[DenseMatrix, np.ndarray],
    X: DataMatrix,
    spec: ProblemSpec,
    config: Optional[InnerSolveConfig] = None,
) -> float:
    """Objective of a dictionary with H re-solved over the full data set."""
    X = as_data(X)
    D = D if isinstance(D, DenseMatrix) else DenseMatrix(D)
    H = encode(D, X, spec, config)
    return objective_value(Factorization(D, H), X, spec)


def lipschitz_bound(
    spec: ProblemSpec,
    fixed: Union[DenseMatrix, np.ndarray],
    which: str,
    column_index: Optional[int] = None,
    n_samples: Optional[int] = None,
    mode: str = "analytic",
    loss_divisor: Optional[float] = None,
) -> LipschitzBound:
    """
    Step-size constant for updating D (fixed = H) or H (fixed = D).

    Without ``column_index`` this is the loss part sigma_max(fixed)^2 / c. With
    it, the per-column elastic-net bound 2(||v||_1^2 / c + 2 nu w) where v is
    the paired row of H (or column of D) and w the regularizer weight.

    Args:
        spec (ProblemSpec): Problem definition
        fixed: The factor held fixed
        which (str): "D" or "H", the variable being updated
        column_index (Optional[int]): Column of D (row of H) for the per-column bound
        n_samples (Optional[int]): T; read from H when updating D
        mode (str): "analytic" or "power-iteration"
        loss_divisor (Optional[float]): Override of c (observed count for the masked loss)

    Returns:
        LipschitzBound: value, and whether the 1e-12 floor was applied
    """
    if which not in ("D", "H"):
        raise InvalidInputError(f"which must be 'D' or 'H', got {which}")
    F = fixed.data if isinstance(fixed, DenseMatrix) else np.asarray(fixed, dtype=np.float64)

    if n_samples is None:
        if which == "D":
            n_samples = F.shape[1]
        elif spec.averaged:
            raise InvalidInputError("n_samples is required for the H bound of an averaged problem")
        else:
            n_samples = 1
    if loss_divisor is None:
        loss_divisor = float(n_samples) if spec.averaged else 1.0
    curvature = (0.25 if spec.loss.kind == "cross_entropy_sigmoid" else 1.0) / loss_divisor

    if column_index is None:
        value = curvature * spectral_norm(F, mode) ** 2
    else:
        vec = F[column_index, :] if which == "D" else F[:, column_index]
        reg = spec.reg_d if which == "D" else spec.reg_h
        weight = spec.weight_d() if which == "D" else spec.weight_h(n_samples)
        value = 2.0 * (curvature * float(np.abs(vec).sum()) ** 2 + reg.l2_fraction * 2.0 * weight)

    if value < LIPSCHITZ_FLOOR:
        logger.warning(
            "Lipschitz bound for %s is %.3g; using floor %g", which, value, LIPSCHITZ_FLOOR
        )
        return LipschitzBound(LIPSCHITZ_FLOOR, True)
    return LipschitzBound(float(value), False)


def _effectively_smooth(reg: RegularizerSpec, weight: float) -> bool:
    if weight == 0 or reg.is_smooth:
        return True
    return reg.kind in ("elastic_net_sq", "non_norm_elastic_net") and reg.nu == 1.0


def auto_family(reg: RegularizerSpec, weight: float, subgradient: bool = False) -> str:
    """Step family used by am_dlm_solve for one variable."""
    if subgradient or _effectively_smooth(reg, weight):
        return "gradient"
    if reg.kind in ("squared_l1", "elastic_net_sq"):
        return "soft" if reg.unsquared_l1 else "sql1"
    if reg.kind == "non_norm_elastic_net":
        return "soft"
    if reg.kind in ("coupled_rows_l1_sq", "coupled_rows_l2"):
        return "coupled"
    # partitioned_max and any other non-smooth kind fall back to subgradients
    return "gradient"


def _reg_curvature(reg: RegularizerSpec, V: np.ndarray, weight: float) -> float:
    """Curvature estimate of the smooth regularizer part; backtracking covers the rest."""
    if weight == 0:
        return 0.0
    dim = V.shape[0]
    kind = reg.kind
    if kind == "weighted_squared_l2":
        return 2.0 * weight * float(np.linalg.norm(reg.lambda_matrix(dim), 2)) ** 2
    if kind in ("pseudo_huber_sq", "smoothed_elastic_net_sq"):
        p = np.sum(np.sqrt(reg.mu**2 + V**2) - reg.mu, axis=0).max(initial=0.0)
        ph = 2.0 * weight * (dim + p / reg.mu)
        if kind == "pseudo_huber_sq":
            return ph
        return 2.0 * weight * reg.nu + (1.0 - reg.nu) * ph
    if kind == "partitioned_max":
        return 2.0 * weight * (1.0 if reg.inner == "l2" else dim)
    if kind in ("squared_l1", "elastic_net_sq") and not reg.unsquared_l1:
        return 2.0 * weight * (reg.l2_fraction + (1.0 - reg.l2_fraction) * dim)
    if kind == "coupled_rows_l1_sq":
        return 2.0 * weight * V.shape[1]
    if kind == "coupled_rows_l2":
        return 2.0 * weight
    return 2.0 * weight * (reg.l2_fraction if kind != "squared_l2" else 1.0)


class AlternatingStep:
    """One Gauss-Seidel pass (D then H) of the inexact alternating minimisation."""

    def __init__(self, X: DataMatrix, spec: ProblemSpec, config: SolverConfig):
        self.X = as_data(X)
        self.spec = spec
        self.config = config
        self.loss = LossCalculator(spec.loss, self.X, spec.averaged)
        self.n_samples = self.X.cols
        self.regs = {"D": spec.reg_d, "H": spec.reg_h}
        self.weights = {"D": spec.weight_d(), "H": spec.weight_h(self.n_samples)}
        self.overrides = {"D": config.step_D, "H": config.step_H}

    def objective(self, D: np.ndarray, H: np.ndarray) -> float:
        return (
            self.loss.value(D @ H)
            + reg_matrix_value(self.spec.reg_d, D, "columns", self.weights["D"])
            + reg_matrix_value(self.spec.reg_h, H, "rows", self.weights["H"])
        )

    def step(
        self, D: np.ndarray, H: np.ndarray, families: Dict[str, str], obj: float
    ) -> Tuple[np.ndarray, np.ndarray, float]:
        D, obj = self._update("D", D, H, families["D"], obj)
        H, obj = self._update("H", D, H, families["H"], obj)
        return D, H, obj

    def _update(self, which, D, H, family, obj):
        if not self.config.exact:
            return self._safeguarded(which, D, H, family, obj)

        current = D if which == "D" else H
        for _ in range(self.config.inner_max_iters):
            if which == "D":
                new, new_obj = self._safeguarded("D", current, H, family, obj)
            else:
                new, new_obj = self._safeguarded("H", D, current, family, obj)
            done = obj - new_obj <= self.config.inner_tol
            current, obj = new, new_obj
            if done:
                break
        return current, obj

    def _safeguarded(self, which, D, H, family, obj):
        """Candidate update; l is doubled until the objective does not increase."""
        V = D if which == "D" else H.T
        slack = 1e-13 * max(1.0, abs(obj))
        scale = 1.0
        new_obj = np.nan
        for _ in range(self.config.max_backtracks + 1):
            V_new = self._candidate(which, family, V, D, H, scale)
            D_new, H_new = (V_new, H) if which == "D" else (D, V_new.T)
            new_obj = self.objective(D_new, H_new)
            if np.isfinite(new_obj) and new_obj <= obj + slack:
                return (D_new if which == "D" else H_new), new_obj
            scale *= 2.0

        if not np.isfinite(new_obj):
            raise NumericalError(
                f"{which} update produced a non-finite objective",
                diagnostic={"variable": which, "family": family, "last_finite_objective": obj},
            )
        logger.warning("%s update rejected after %d backtracks", which, self.config.max_backtracks)
        return (D if which == "D" else H), obj

    def _loss_grad(self, which, V, D, H) -> np.ndarray:
        if which == "D":
            return self.loss.gradient(V @ H) @ H.T
        return self.loss.gradient(D @ V.T).T @ D

    def _reg_grad(self, which, V) -> np.ndarray:
        if which == "D":
            return reg_subgradient(self.regs["D"], V, "columns", self.weights["D"]).data
        return reg_subgradient(self.regs["H"], V.T, "rows", self.weights["H"]).data.T

    def _full_bound(self, which, D, H) -> float:
        override = self.overrides[which]
        if override is not None:
            return 1.0 / override
        fixed = H if which == "D" else D
        return lipschitz_bound(
            self.spec,
            fixed,
            which,
            n_samples=self.n_samples,
            mode=self.config.lipschitz_mode,
            loss_divisor=self.loss.divisor,
        ).value

    def _candidate(self, which, family, V, D, H, scale) -> np.ndarray:
        reg, w = self.regs[which], self.weights[which]

        if family == "gradient":
            l = scale * (self._full_bound(which, D, H) + _reg_curvature(reg, V, w))
            return V - (self._loss_grad(which, V, D, H) + self._reg_grad(which, V)) / l

        nu = reg.l2_fraction
        V_new = np.array(V, dtype=np.float64)

        if family == "soft":
            thresholds = w * (1.0 - nu) * np.ones(V.shape[0])
            if reg.kind == "non_norm_elastic_net":
                thresholds = thresholds * reg.diagonal_weights(V.shape[0])
            l = scale * (self._full_bound(which, D, H) + 2.0 * w * nu)
            for i in range(V.shape[1]):
                # full gradient refresh after every column
                g = self._loss_grad(which, V_new, D, H)[:, i]
                u = V_new[:, i] - (g + 2.0 * w * nu * V_new[:, i]) / l
                V_new[:, i] = soft_threshold(u, thresholds / l)
            return V_new

        if family == "sql1":
            fixed = H if which == "D" else D
            override = self.overrides[which]
            for i in range(V.shape[1]):
                for _ in range(self.config.inner_prox_iters):
                    if override is not None:
                        l = scale / override
                    else:
                        l = scale * lipschitz_bound(
                            self.spec,
                            fixed,
                            which,
                            column_index=i,
                            n_samples=self.n_samples,
                            loss_divisor=self.loss.divisor,
                        ).value
                    g = self._loss_grad(which, V_new, D, H)[:, i]
                    u = V_new[:, i] - (g + 2.0 * w * nu * V_new[:, i]) / l
                    V_new[:, i] = prox_sql1(u, (1.0 - nu) * w / l).z
            return V_new

        if family == "coupled":
            l = scale * self._full_bound(which, D, H)
            U = V - self._loss_grad(which, V, D, H) / l
            for r in range(U.shape[0]):
                if reg.kind == "coupled_rows_l2":
                    U[r] = group_soft_threshold(U[r], w / l)
                else:
                    U[r] = prox_sql1(U[r], w / l).z
            return U

        raise UnsupportedKindError(f"Unknown step family: {family}")


def _families_for(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec, config: SolverConfig, allowed: str
) -> Dict[str, str]:
    T = as_data(X).cols
    families = {}
    for which, reg, weight in (
        ("D", spec.reg_d, spec.weight_d()),
        ("H", spec.reg_h, spec.weight_h(T)),
    ):
        if config.subgradient or _effectively_smooth(reg, weight):
            families[which] = "gradient"
            continue
        family = auto_family(reg, weight)
        if family != allowed:
            raise UnsupportedKindError(
                f"{reg.kind} on {which} cannot take a '{allowed}' step"
                + (" (enable subgradient mode)" if allowed == "gradient" else "")
            )
        families[which] = family
    return families


def _run_step(fact, X, spec, config, allowed) -> Factorization:
    config = config or SolverConfig()
    config.validate()
    X = as_data(X)
    _check_shapes(fact, X)
    families = _families_for(fact, X, spec, config, allowed)
    stepper = AlternatingStep(X, spec, config)
    D, H = fact.D.data, fact.H.data
    D, H, _ = stepper.step(D, H, families, stepper.objective(D, H))
    return Factorization(DenseMatrix(D), DenseMatrix(H))


def step_smooth(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec, config: Optional[SolverConfig] = None
) -> Factorization:
    """
    Gradient step on D, then on H with the new D.

    Both regularizers must be smooth unless ``config.subgradient`` is set.
    """
    return _run_step(fact, X, spec, config, "gradient")


def step_prox_l1(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec, config: Optional[SolverConfig] = None
) -> Factorization:
    """
    Proximal-gradient sweep for plain l1 terms (unsquared mode, non-norm elastic net).

    Columns of D (rows of H) are updated in turn with the gradient recomputed
    after each one; variables with smooth regularizers take a gradient step.
    """
    return _run_step(fact, X, spec, config, "soft")


def step_prox_elastic(
    fact: Factorization, X: DataMatrix, spec: ProblemSpec, config: Optional[SolverConfig] = None
) -> Factorization:
    """
    Per-column prox step for the squared-l1 / elastic-net regularizers.

    Each column takes a gradient step on the loss and the nu*||v||^2 part with
    the per-column bound, then the lambda*||v||_1^2 prox with
    lambda = (1 - nu) * w / l.
    """
    return _run_step(fact, X, spec, config, "sql1")


class BatchSolver(BaseSolver):
    def _initialize(self) -> None:
        self.families = {
            "D": auto_family(self.spec.reg_d, self.spec.weight_d(), self.config.subgradient),
            "H": auto_family(self.spec.reg_h, self.spec.sample_weight_h(), self.config.subgradient),
        }

    def solve(
        self, X: DataMatrix, init: Optional[Factorization] = None
    ) -> Tuple[Factorization, TrialReport]:
        X = as_data(X)
        d, T = X.shape
        k = self.spec.k
        if init is None:
            init = initial_factorization(
                d, T, k, self.config.seed, self.config.init_mean, self.config.init_sd
            )
        elif init.k != k:
            raise InvalidInputError(f"init has inner dimension {init.k}, spec has k={k}")
        _check_shapes(init, X)

        stepper = AlternatingStep(X, self.spec, self.config)
        D, H = init.D.data, init.H.data
        obj = check_objective(stepper.objective(D, H), 0, None)
        trace = [(0, obj)]
        converged = False
        iteration = 0

        start = time.perf_counter()
        iterator = tqdm(
            range(1, self.config.max_iters + 1),
            disable=not self.config.show_progress,
            desc="AM-DLM",
        )
        for iteration in iterator:
            D, H, new_obj = stepper.step(D, H, self.families, obj)
            check_objective(new_obj, iteration, obj)
            trace.append((iteration, new_obj))
            change = abs(new_obj - obj)
            obj = new_obj
            if change < self.config.tol:
                converged = True
                break

        elapsed = time.perf_counter() - start
        logger.info(
            "AM-DLM finished: objective=%.10g iterations=%d converged=%s (%.2fs)",
            obj,
            iteration,
            converged,
            elapsed,
        )
        report = TrialReport(
            final_objective=obj,
            objective_trace=trace,
            iterations=iteration,
            converged=converged,
            seed=self.config.seed,
            wall_clock=elapsed,
        )
        return Factorization(DenseMatrix(D), DenseMatrix(H)), report


def am_dlm_solve(
    X: DataMatrix,
    spec: ProblemSpec,
    config: Optional[SolverConfig] = None,
    init: Optional[Factorization] = None,
) -> Tuple[Factorization, TrialReport]:
    """
    Batch alternating minimisation: one step on D, then one on H, until the
    absolute objective change drops below config.tol.

    Args:
        X: Data matrix (ObservedMatrix for completion)
        spec (ProblemSpec): Problem definition
        config (Optional[SolverConfig]): Solver settings
        init (Optional[Factorization]): Starting point; Gaussian draw from config.seed if absent

    Returns:
        Tuple[Factorization, TrialReport]: Final factors and the run record
    """
    solver = BatchSolver(spec, config or SolverConfig())
    return solver.solve(X, init)
