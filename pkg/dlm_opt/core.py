from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm


class DLMError(Exception):
    """Base class for all errors raised by dlm_opt."""


class InvalidInputError(DLMError, ValueError):
    """Raised when shapes, values or parameters are outside an operation's domain."""


class UnsupportedKindError(DLMError, ValueError):
    """Raised when an operation cannot handle the requested loss or regularizer kind."""


class NumericalError(DLMError, ArithmeticError):
    """Raised when a solve breaks down numerically (NaN objective, rank-deficient init, ...)."""

    def __init__(self, message: str, diagnostic: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class MatrixFormatError(InvalidInputError):
    """Raised when a matrix CSV is ragged or holds a cell that is not a number."""

    def __init__(self, message: str, row: Optional[int] = None, col: Optional[int] = None):
        location = ""
        if row is not None:
            location = f" (row {row}" + (f", col {col})" if col is not None else ")")
        super().__init__(message + location)
        self.row = row
        self.col = col


# Define available loss kinds
AVAILABLE_LOSSES = [
    "half_squared",
    "cross_entropy_sigmoid",
    "masked_half_squared",
    "robust_half_squared",
]

# Losses whose curvature in Z is bounded by 1 (per entry, before averaging)
LEAST_SQUARES_LOSSES = ["half_squared", "masked_half_squared", "robust_half_squared"]

# Define available regularizer kinds
AVAILABLE_REGULARIZERS = [
    "squared_l2",
    "squared_l1",
    "elastic_net_sq",
    "pseudo_huber_sq",
    "smoothed_elastic_net_sq",
    "weighted_squared_l2",
    "non_norm_elastic_net",
    "coupled_rows_l1_sq",
    "coupled_rows_l2",
    "partitioned_max",
]

# Kinds evaluated as a sum of per-vector terms
SEPARABLE_REGULARIZERS = [
    "squared_l2",
    "squared_l1",
    "elastic_net_sq",
    "pseudo_huber_sq",
    "smoothed_elastic_net_sq",
    "weighted_squared_l2",
    "non_norm_elastic_net",
]

# Kinds that fall outside the induced class (baselines)
NON_INDUCED_REGULARIZERS = ["non_norm_elastic_net", "coupled_rows_l1_sq", "coupled_rows_l2"]

# Differentiable everywhere
SMOOTH_REGULARIZERS = [
    "squared_l2",
    "pseudo_huber_sq",
    "smoothed_elastic_net_sq",
    "weighted_squared_l2",
]

# f_c = sqrt(value) is a norm
NORM_REGULARIZERS = [
    "squared_l2",
    "squared_l1",
    "elastic_net_sq",
    "weighted_squared_l2",
    "partitioned_max",
]


def _frozen_array(values: Any, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DenseMatrix:
    """Rectangular, finite, read-only real matrix stored row-major."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidInputError(
                f"DenseMatrix needs a non-empty 2-D array, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("DenseMatrix entries must be finite (no NaN/Inf)")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "DenseMatrix":
        return cls(np.array(rows, dtype=np.float64))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "DenseMatrix":
        return cls(np.zeros((rows, cols)))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.data.shape

    def to_list(self) -> List[List[float]]:
        return self.data.tolist()


@dataclass(frozen=True, eq=False)
class ObservedMatrix:
    """Matrix values plus a boolean mask; True marks an observed entry."""

    values: DenseMatrix
    mask: np.ndarray

    def __post_init__(self):
        if not isinstance(self.values, DenseMatrix):
            object.__setattr__(self, "values", DenseMatrix(self.values))
        mask = np.array(self.mask, dtype=bool)
        if mask.shape != self.values.shape:
            raise InvalidInputError(
                f"Mask shape {mask.shape} does not match values shape {self.values.shape}"
            )
        if not mask.any():
            raise InvalidInputError("ObservedMatrix needs at least one observed entry")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def rows(self) -> int:
        return self.values.rows

    @property
    def cols(self) -> int:
        return self.values.cols

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def n_observed(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class Factorization:
    """A (D, H) pair with D of shape d x k and H of shape k x T."""

    D: DenseMatrix
    H: DenseMatrix

    def __post_init__(self):
        if not isinstance(self.D, DenseMatrix):
            object.__setattr__(self, "D", DenseMatrix(self.D))
        if not isinstance(self.H, DenseMatrix):
            object.__setattr__(self, "H", DenseMatrix(self.H))
        if self.D.cols != self.H.rows:
            raise InvalidInputError(
                f"Inner dimensions disagree: D has {self.D.cols} columns, H has {self.H.rows} rows"
            )

    @property
    def k(self) -> int:
        return self.D.cols

    @property
    def Z(self) -> np.ndarray:
        return self.D.data @ self.H.data


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    """A factor regularizer: per-column f_c^2 on D or per-row f_r^2 on H, or a baseline.

    Use the classmethod constructors rather than spelling out ``kind`` by hand.
    ``weights`` holds Lambda: a diagonal (1-D) or an invertible matrix (2-D,
    weighted_squared_l2 only).
    """

    kind: str
    nu: float = 1.0
    mu: float = 1.0
    weights: Optional[np.ndarray] = None
    split: Optional[int] = None
    inner: str = "l2"
    unsquared_l1: bool = False

    def __post_init__(self):
        if self.weights is not None:
            object.__setattr__(self, "weights", _frozen_array(self.weights))
        self.validate()

    def validate(self) -> None:
        """Validate the regularizer parameters"""
        if self.kind not in AVAILABLE_REGULARIZERS:
            raise UnsupportedKindError(f"Unsupported regularizer kind: {self.kind}")

        if not 0.0 <= self.nu <= 1.0:
            raise InvalidInputError(f"nu must lie in [0, 1], got {self.nu}")

        if self.kind in ("pseudo_huber_sq", "smoothed_elastic_net_sq") and not self.mu > 0:
            raise InvalidInputError(f"mu must be positive, got {self.mu}")

        if self.unsquared_l1 and self.kind not in ("squared_l1", "elastic_net_sq"):
            raise InvalidInputError("unsquared_l1 applies only to squared_l1 or elastic_net_sq")

        if self.kind == "weighted_squared_l2":
            if self.weights is None:
                raise InvalidInputError("weighted_squared_l2 needs a weight matrix")
            lam = self.lambda_matrix(self.weights.shape[0])
            if lam.shape[0] != lam.shape[1] or np.linalg.matrix_rank(lam) < lam.shape[0]:
                raise InvalidInputError("weighted_squared_l2 needs an invertible square Lambda")

        if self.kind == "non_norm_elastic_net" and self.weights is not None:
            if self.weights.ndim != 1 or np.any(self.weights <= 0):
                raise InvalidInputError("non_norm_elastic_net needs a positive diagonal Lambda")

        if self.kind == "partitioned_max":
            if self.split is None or self.split < 1:
                raise InvalidInputError("partitioned_max needs a split row index >= 1")
            if self.inner not in ("l2", "l1"):
                raise UnsupportedKindError(f"Unsupported inner norm: {self.inner}")

    @classmethod
    def squared_l2(cls) -> "RegularizerSpec":
        return cls("squared_l2")

    @classmethod
    def squared_l1(cls, unsquared_l1: bool = False) -> "RegularizerSpec":
        return cls("squared_l1", nu=0.0, unsquared_l1=unsquared_l1)

    @classmethod
    def elastic_net(cls, nu: float, unsquared_l1: bool = False) -> "RegularizerSpec":
        return cls("elastic_net_sq", nu=nu, unsquared_l1=unsquared_l1)

    @classmethod
    def pseudo_huber(cls, mu: float) -> "RegularizerSpec":
        return cls("pseudo_huber_sq", nu=0.0, mu=mu)

    @classmethod
    def smoothed_elastic_net(cls, nu: float, mu: float) -> "RegularizerSpec":
        return cls("smoothed_elastic_net_sq", nu=nu, mu=mu)

    @classmethod
    def weighted_squared_l2(cls, weights: Any) -> "RegularizerSpec":
        return cls("weighted_squared_l2", weights=weights)

    @classmethod
    def non_norm_elastic_net(cls, nu: float, weights: Any = None) -> "RegularizerSpec":
        return cls("non_norm_elastic_net", nu=nu, weights=weights)

    @classmethod
    def coupled_rows_l1_sq(cls) -> "RegularizerSpec":
        return cls("coupled_rows_l1_sq")

    @classmethod
    def coupled_rows_l2(cls) -> "RegularizerSpec":
        return cls("coupled_rows_l2")

    @classmethod
    def partitioned_max(cls, split: int, inner: str = "l2") -> "RegularizerSpec":
        return cls("partitioned_max", split=split, inner=inner)

    @property
    def is_separable(self) -> bool:
        return self.kind in SEPARABLE_REGULARIZERS

    @property
    def is_smooth(self) -> bool:
        if self.kind == "elastic_net_sq" and self.nu == 1.0:
            return True
        return self.kind in SMOOTH_REGULARIZERS

    @property
    def is_induced(self) -> bool:
        return self.kind not in NON_INDUCED_REGULARIZERS and not self.unsquared_l1

    @property
    def is_norm(self) -> bool:
        return self.kind in NORM_REGULARIZERS and not self.unsquared_l1

    @property
    def l2_fraction(self) -> float:
        """Weight of the ||v||_2^2 component (nu for the elastic-net kinds)."""
        if self.kind == "squared_l2":
            return 1.0
        if self.kind in ("elastic_net_sq", "smoothed_elastic_net_sq", "non_norm_elastic_net"):
            return self.nu
        return 0.0

    def lambda_matrix(self, dim: int) -> np.ndarray:
        """Lambda as a dense dim x dim matrix (identity when no weights are set)."""
        if self.weights is None:
            return np.eye(dim)
        if self.weights.ndim == 1:
            return np.diag(self.weights)
        return np.array(self.weights)

    def diagonal_weights(self, dim: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(dim)
        if self.weights.shape[0] != dim:
            raise InvalidInputError(
                f"Lambda has {self.weights.shape[0]} entries but the vector has {dim}"
            )
        return np.array(self.weights)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.kind in ("elastic_net_sq", "smoothed_elastic_net_sq", "non_norm_elastic_net"):
            out["nu"] = self.nu
        if self.kind in ("pseudo_huber_sq", "smoothed_elastic_net_sq"):
            out["mu"] = self.mu
        if self.weights is not None:
            out["weights"] = self.weights.tolist()
        if self.kind == "partitioned_max":
            out["split"] = self.split
            out["inner"] = self.inner
        if self.unsquared_l1:
            out["unsquared_l1"] = True
        return out

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "RegularizerSpec":
        return cls(**raw)


@dataclass(frozen=True)
class LossSpec:
    kind: str = "half_squared"
    alpha_s: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        """Validate the loss parameters"""
        if self.kind not in AVAILABLE_LOSSES:
            raise UnsupportedKindError(f"Unsupported loss kind: {self.kind}")
        if self.kind == "robust_half_squared":
            if self.alpha_s is None or not self.alpha_s > 0:
                raise InvalidInputError("robust_half_squared needs alpha_s > 0")

    @property
    def is_least_squares(self) -> bool:
        return self.kind in LEAST_SQUARES_LOSSES

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"kind": self.kind}
        if self.alpha_s is not None:
            out["alpha_s"] = self.alpha_s
        return out


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A complete objective: loss(DH) + (a/2) sum f_c^2(D_:i) + a/(2 s^2 c) sum f_r^2(H_i:).

    c is the number of samples T when ``averaged`` is set, else 1. The loss is
    divided by the same c (or by the observed count for the masked loss).
    """

    loss: LossSpec
    reg_d: RegularizerSpec
    reg_h: RegularizerSpec
    alpha: float
    k: int
    s: float = 1.0
    averaged: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.alpha >= 0:
            raise InvalidInputError(f"alpha must be >= 0, got {self.alpha}")
        if not self.s > 0:
            raise InvalidInputError(f"s must be > 0, got {self.s}")
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k}")

    def weight_d(self) -> float:
        return self.alpha / 2.0

    def weight_h(self, n_samples: int) -> float:
        divisor = n_samples if self.averaged else 1
        return self.alpha / (2.0 * self.s**2 * divisor)

    def sample_weight_h(self) -> float:
        """Regularizer weight on a single code vector h (per-sample objective)."""
        return self.alpha / (2.0 * self.s**2)

    def replace(self, **changes: Any) -> "ProblemSpec":
        fields = dict(
            loss=self.loss,
            reg_d=self.reg_d,
            reg_h=self.reg_h,
            alpha=self.alpha,
            k=self.k,
            s=self.s,
            averaged=self.averaged,
        )
        fields.update(changes)
        return ProblemSpec(**fields)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "loss": self.loss.to_dict(),
            "reg_d": self.reg_d.to_dict(),
            "reg_h": self.reg_h.to_dict(),
            "alpha": self.alpha,
            "k": self.k,
            "s": self.s,
            "averaged": self.averaged,
        }


@dataclass
class TrialReport:
    """Per-run record; wall-clock time is excluded from equality."""

    final_objective: float
    objective_trace: List[Tuple[int, float]]
    iterations: int
    converged: bool
    seed: int
    certificate: Optional[Any] = None
    inner_iterations: List[int] = field(default_factory=list)
    step_sizes: List[float] = field(default_factory=list)
    wall_clock: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.iterations > 0 and not self.objective_trace:
            raise InvalidInputError("objective_trace must be non-empty when iterations > 0")

    def to_dict(self) -> Dict[str, Any]:
        certificate = self.certificate
        if certificate is not None and hasattr(certificate, "to_dict"):
            certificate = certificate.to_dict()
        return {
            "final_objective": self.final_objective,
            "objective_trace": [[int(i), float(v)] for i, v in self.objective_trace],
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "certificate": certificate,
            "inner_iterations": list(self.inner_iterations),
            "step_sizes": [float(v) for v in self.step_sizes],
            "wall_clock": self.wall_clock,
        }


MatrixLike = Union[DenseMatrix, np.ndarray]


def _as_array(M: Union[MatrixLike, ObservedMatrix]) -> np.ndarray:
    if isinstance(M, DenseMatrix):
        return M.data
    if isinstance(M, ObservedMatrix):
        return M.values.data
    return np.asarray(M, dtype=np.float64)


def relative_objective_difference(objs: Sequence[float]) -> float:
    """
    Largest pairwise gap between objective values, relative to their mean.

    Args:
        objs: Final objective values of several runs

    Returns:
        max over pairs of |obj_a - obj_b| divided by mean(objs)
    """
    values = np.asarray(list(objs), dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError("relative_objective_difference needs at least one objective")
    if not np.all(np.isfinite(values)):
        raise InvalidInputError("Objective values must be finite")
    mean = values.mean()
    if mean == 0:
        raise InvalidInputError("Mean objective is zero; the relative difference is undefined")
    return float((values.max() - values.min()) / abs(mean))


def thresholded_solution_difference(Z1: MatrixLike, Z2: MatrixLike, tau: float = 0.05) -> float:
    """
    Fraction of entries where two solutions differ by more than a threshold.

    Args:
        Z1: First solution matrix
        Z2: Second solution matrix
        tau: Absolute threshold (default 0.05)

    Returns:
        float: Fraction in [0, 1] of entries with |Z1_ij - Z2_ij| > tau
    """
    a = _as_array(Z1)
    b = _as_array(Z2)
    if a.shape != b.shape:
        raise InvalidInputError(f"Shape mismatch: {a.shape} vs {b.shape}")
    if tau < 0:
        raise InvalidInputError(f"tau must be >= 0, got {tau}")
    return float(np.mean(np.abs(a - b) > tau))


# Define available solution comparison metrics
AVAILABLE_COMPARISON_METRICS = [
    "relative_objective_difference",
    "thresholded_solution_difference",
]

# Metrics that need the solution matrices, not only objective values
SOLUTION_REQUIRED_METRICS = ["thresholded_solution_difference"]


def compare_solutions(
    objectives: Sequence[float],
    solutions: Optional[Sequence[MatrixLike]] = None,
    metrics: Optional[List[str]] = None,
    threshold: float = 0.05,
    show_progress: bool = False,
) -> Dict[str, float]:
    """
    Compare the solutions returned by several runs of the same problem.

    Args:
        objectives: Final objective of each run
        solutions: Solution matrices Z = DH of each run, in the same order
        metrics: List of metrics to calculate. Defaults to all available metrics.
        threshold: Entry threshold for thresholded_solution_difference
        show_progress: Whether to show progress bar (default: False)

    Returns:
        Dictionary with ``<metric>_min`` and ``<metric>_max`` over all pairs of runs
    """
    # Default to all metrics if none specified
    if metrics is None:
        metrics = list(AVAILABLE_COMPARISON_METRICS)

    # Validate metrics
    invalid_metrics = set(metrics) - set(AVAILABLE_COMPARISON_METRICS)
    if invalid_metrics:
        raise ValueError(f"Invalid metrics: {invalid_metrics}")

    solution_metrics = set(metrics) & set(SOLUTION_REQUIRED_METRICS)
    if solution_metrics and solutions is None:
        raise ValueError(f"Solution matrices required for metrics: {solution_metrics}")
    if solutions is not None and len(solutions) != len(objectives):
        raise InvalidInputError("objectives and solutions must have the same length")

    results: Dict[str, float] = {}
    pairs = list(combinations(range(len(objectives)), 2))

    metric_iterator = tqdm(metrics, disable=not show_progress, desc="Comparing solutions")
    for metric in metric_iterator:
        if metric == "relative_objective_difference":
            results[f"{metric}_max"] = relative_objective_difference(objectives)
            mean = abs(float(np.mean(objectives)))
            gaps = [abs(objectives[a] - objectives[b]) / mean for a, b in pairs]
            results[f"{metric}_min"] = float(min(gaps)) if gaps else 0.0

        elif metric == "thresholded_solution_difference":
            diffs = [
                thresholded_solution_difference(solutions[a], solutions[b], threshold)
                for a, b in pairs
            ]
            results[f"{metric}_min"] = float(min(diffs)) if diffs else 0.0
            results[f"{metric}_max"] = float(max(diffs)) if diffs else 0.0

    return results
