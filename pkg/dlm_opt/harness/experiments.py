import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from ..core import (
    DenseMatrix,
    InvalidInputError,
    LossSpec,
    NumericalError,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
    compare_solutions,
)
from ..solvers import (
    OnlineConfig,
    SgdConfig,
    SolverConfig,
    am_dlm_solve,
    dictionary_objective,
    online_am_dlm,
    sgd_am_dlm,
)
from ..solvers.config import SCHEDULES
from ..utils import derive_seed, make_rng, run_ordered
from .data import format_float, gen_gaussian, read_matrix_csv

logger = logging.getLogger(__name__)

# Define available experiment kinds
AVAILABLE_EXPERIMENTS = ["multi_init", "k_sweep", "incremental_compare", "solve", "certify"]

# Define available problem presets
AVAILABLE_PRESETS = [
    "subspace",
    "sparse",
    "elastic_net",
    "non_norm_elastic_net",
    "coupled_l1",
    "coupled_l2",
    "completion",
    "robust",
    "supervised",
    "logistic",
]

# Presets that read the nu_d / nu_h grids
NU_PRESETS = ["elastic_net", "non_norm_elastic_net", "logistic"]

INCREMENTAL_METHODS = [
    "batch",
    "online",
    "sgd_type1",
    "sgd_type2",
    "sgd_type3",
    "accelerated",
    "momentum",
]

# An incremental method "hits" once its objective is within this fraction of batch
HIT_FRACTION = 0.05

LARGE_D = 50

DataMatrix = Union[DenseMatrix, ObservedMatrix]


def preset_spec(
    name: str,
    alpha: float,
    k: int,
    d: int,
    nu_d: float = 0.5,
    nu_h: float = 0.5,
    averaged: bool = False,
    s: float = 1.0,
    alpha_s: float = 1.0,
    split: Optional[int] = None,
    unsquared_l1: bool = False,
) -> ProblemSpec:
    """
    Build the ProblemSpec behind a named preset.

    Args:
        name (str): One of AVAILABLE_PRESETS
        alpha (float): Regularization weight
        k (int): Inner dimension
        d (int): Rows of the data (sets Lambda and the default split)
        nu_d, nu_h (float): l2 fractions for the elastic-net presets
        averaged (bool): Divide the loss and H-regularizer by T
        s (float): Sample scale on the H-regularizer
        alpha_s (float): Noise weight of the robust preset
        split (Optional[int]): First label row for the supervised preset, d // 2 if None
        unsquared_l1 (bool): Use the unsquared l1 form on H for sparse, elastic net and logistic

    Returns:
        ProblemSpec: The preset objective
    """
    if name not in AVAILABLE_PRESETS:
        raise UnsupportedKindError(f"Unknown preset: {name}")

    loss = LossSpec()
    l2 = RegularizerSpec.squared_l2()
    reg_d, reg_h = l2, l2
    if name == "sparse":
        reg_d = RegularizerSpec.squared_l1()
        reg_h = RegularizerSpec.squared_l1(unsquared_l1)
    elif name == "elastic_net":
        reg_d = RegularizerSpec.elastic_net(nu_d)
        reg_h = RegularizerSpec.elastic_net(nu_h, unsquared_l1)
    elif name == "non_norm_elastic_net":
        reg_d = RegularizerSpec.non_norm_elastic_net(nu_d, weights=np.arange(1.0, d + 1.0))
        reg_h = RegularizerSpec.elastic_net(nu_h)
    elif name == "coupled_l1":
        reg_d = RegularizerSpec.coupled_rows_l1_sq()
    elif name == "coupled_l2":
        reg_d = RegularizerSpec.coupled_rows_l2()
    elif name == "completion":
        loss = LossSpec("masked_half_squared")
    elif name == "robust":
        loss = LossSpec("robust_half_squared", alpha_s=alpha_s)
    elif name == "supervised":
        if d < 2:
            raise InvalidInputError("The supervised preset needs at least two data rows")
        reg_d = RegularizerSpec.partitioned_max(split if split is not None else d // 2)
    elif name == "logistic":
        loss = LossSpec("cross_entropy_sigmoid")
        reg_d = RegularizerSpec.elastic_net(nu_d)
        reg_h = RegularizerSpec.elastic_net(nu_h, unsquared_l1)

    return ProblemSpec(loss, reg_d, reg_h, alpha=alpha, k=k, s=s, averaged=averaged)


@dataclass
class ExperimentConfig:
    kind: str = "multi_init"
    specs: List[str] = field(default_factory=lambda: ["subspace"])
    alphas: List[float] = field(default_factory=lambda: [0.005, 0.05, 0.5])
    ds: List[int] = field(default_factory=lambda: [5, 10])
    ks: List[int] = field(default_factory=lambda: [3, 5])
    nus_d: List[float] = field(default_factory=lambda: [0.5])
    nus_h: List[float] = field(default_factory=lambda: [0.5])
    T: int = 100
    include_large: bool = False  # adds d = 50 to the grid
    n_inits: int = 10
    init_means: Optional[List[float]] = None  # None means 0, 5, 10, ...
    init_sd: float = 1.0
    vary_init_seed: bool = True
    repetitions: int = 1
    seed: int = 0
    data_path: Optional[str] = None
    data_mean: float = 0.0
    data_sd: float = 1.0
    observed_fraction: float = 0.8
    averaged: bool = False
    s: float = 1.0
    alpha_s: float = 1.0
    split: Optional[int] = None
    unsquared_l1: bool = False
    max_iters: int = 20000
    tol: float = 1e-8
    threshold: float = 0.05
    epochs: int = 50
    eta0: float = 0.5
    accelerate_schedule: str = "type2"
    momentum: float = 0.01
    workers: Optional[int] = None
    out: Optional[str] = None
    show_progress: bool = False

    def __post_init__(self):
        self.alphas = [float(a) for a in self.alphas]
        self.nus_d = [float(v) for v in self.nus_d]
        self.nus_h = [float(v) for v in self.nus_h]
        if self.init_means is not None:
            self.init_means = [float(m) for m in self.init_means]

    def validate(self) -> None:
        """Validate the configuration"""
        if self.kind not in AVAILABLE_EXPERIMENTS:
            raise InvalidInputError(f"Unsupported experiment kind: {self.kind}")
        unknown = set(self.specs) - set(AVAILABLE_PRESETS)
        if unknown:
            raise InvalidInputError(f"Unknown presets: {unknown}")

        for name in ("specs", "alphas", "ds", "ks", "nus_d", "nus_h"):
            if not getattr(self, name):
                raise InvalidInputError(f"{name} must be non-empty")
        if any(a < 0 for a in self.alphas):
            raise InvalidInputError("alphas must be >= 0")
        if any(d < 1 for d in self.ds) or any(k < 1 for k in self.ks):
            raise InvalidInputError("ds and ks must be >= 1")
        if any(not 0.0 <= v <= 1.0 for v in self.nus_d + self.nus_h):
            raise InvalidInputError("nu values must lie in [0, 1]")
        if self.T < 1:
            raise InvalidInputError(f"T must be >= 1, got {self.T}")

        if self.kind in ("multi_init", "k_sweep") and self.n_inits < 2:
            raise InvalidInputError(f"{self.kind} needs n_inits >= 2, got {self.n_inits}")
        if self.n_inits < 1:
            raise InvalidInputError(f"n_inits must be >= 1, got {self.n_inits}")
        if self.init_means is not None and len(self.init_means) != self.n_inits:
            raise InvalidInputError(
                f"init_means has {len(self.init_means)} entries but n_inits is {self.n_inits}"
            )
        if self.kind == "k_sweep" and self.data_path is None and max(self.ks) > self.T:
            raise InvalidInputError(f"k grid must lie in [1, T={self.T}]")

        if not self.init_sd > 0 or not self.data_sd > 0:
            raise InvalidInputError("init_sd and data_sd must be > 0")
        if self.repetitions < 1:
            raise InvalidInputError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be non-negative, got {self.seed}")
        if not 0.0 < self.observed_fraction <= 1.0:
            raise InvalidInputError("observed_fraction must lie in (0, 1]")
        if not self.s > 0 or not self.alpha_s > 0:
            raise InvalidInputError("s and alpha_s must be > 0")
        if self.max_iters < 1 or not self.tol > 0:
            raise InvalidInputError("max_iters must be >= 1 and tol > 0")
        if self.threshold < 0:
            raise InvalidInputError(f"threshold must be >= 0, got {self.threshold}")
        if self.epochs < 1 or not self.eta0 > 0:
            raise InvalidInputError("epochs must be >= 1 and eta0 > 0")
        if self.accelerate_schedule not in SCHEDULES:
            raise InvalidInputError(f"Unsupported schedule: {self.accelerate_schedule}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError(f"workers must be >= 1, got {self.workers}")

    def resolved_init_means(self) -> List[float]:
        if self.init_means is not None:
            return list(self.init_means)
        return [5.0 * i for i in range(self.n_inits)]

    def grid_ds(self) -> List[int]:
        ds = list(self.ds)
        if self.include_large and LARGE_D not in ds:
            ds.append(LARGE_D)
        return ds

    def nu_grid(self, name: str) -> List[Tuple[Optional[float], Optional[float]]]:
        if name not in NU_PRESETS:
            return [(None, None)]
        return [(nu_d, nu_h) for nu_d in self.nus_d for nu_h in self.nus_h]

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["init_means"] = self.resolved_init_means()
        return out

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InvalidInputError(f"Unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def for_kind(cls, kind: str, **overrides: Any) -> "ExperimentConfig":
        """Defaults for each protocol, overridden by keyword arguments."""
        defaults: Dict[str, Any] = {"kind": kind}
        if kind == "k_sweep":
            defaults.update(
                specs=["elastic_net"],
                alphas=[0.05],
                ds=[50],
                ks=[5, 10, 25, 50, 100],
                nus_h=[0.0, 0.5, 1.0],
            )
        elif kind == "incremental_compare":
            defaults.update(
                specs=["subspace"], alphas=[0.05], ds=[50], ks=[50], averaged=True, n_inits=1
            )
        elif kind in ("solve", "certify"):
            defaults.update(alphas=[0.5], ds=[10], ks=[10], n_inits=1)
        defaults.update(overrides)
        return cls(**defaults)


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_float(value)
    return str(value)


@dataclass
class CellRecord:
    """One row of a report: cell parameters, measured values and the per-trial objectives."""

    spec: str
    params: Dict[str, Any]
    values: Dict[str, Any] = field(default_factory=dict)
    objectives: List[float] = field(default_factory=list)
    status: str = "ok"
    wall_clock: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def to_row(self) -> Dict[str, str]:
        row: Dict[str, Any] = {"spec": self.spec}
        row.update(self.params)
        row.update(self.values)
        row["objectives"] = ";".join(format_float(v) for v in self.objectives)
        row["status"] = self.status
        return {key: _format_value(value) for key, value in row.items()}


def _write_rows(rows: List[Dict[str, str]], path: Union[str, Path]) -> None:
    header: List[str] = []
    for row in rows:
        header.extend(key for key in row if key not in header)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=header, lineterminator="\n", restval="")
        writer.writeheader()
        writer.writerows(rows)


@dataclass
class ExperimentReport:
    kind: str
    records: List[CellRecord]
    traces: List[Dict[str, Any]] = field(default_factory=list)
    wall_clock: float = field(default=0.0, compare=False)

    def __post_init__(self):
        for record in self.records:
            for key, low in record.values.items():
                if not key.endswith("_min") or low is None:
                    continue
                high = record.values.get(key[: -len("_min")] + "_max")
                if high is not None and low > high:
                    raise InvalidInputError(f"{key} exceeds its maximum in cell {record.params}")

    @property
    def failures(self) -> List[CellRecord]:
        return [r for r in self.records if not r.ok]

    def rows(self) -> List[Dict[str, str]]:
        return [record.to_row() for record in self.records]

    def summary_rows(self) -> List[Dict[str, str]]:
        """
        Grid-wide minimum and maximum of every *_min / *_max column per spec,
        with the (alpha, d, k) of the cell that produced it.
        """
        rows = []
        for spec in dict.fromkeys(r.spec for r in self.records):
            cells = [r for r in self.records if r.spec == spec and r.ok]
            metrics = dict.fromkeys(
                key[: -len("_min")] for r in cells for key in r.values if key.endswith("_min")
            )
            for metric in metrics:
                lows = [r for r in cells if r.values.get(f"{metric}_min") is not None]
                highs = [r for r in cells if r.values.get(f"{metric}_max") is not None]
                if not lows or not highs:
                    continue
                low = min(lows, key=lambda r: r.values[f"{metric}_min"])
                high = max(highs, key=lambda r: r.values[f"{metric}_max"])
                rows.append(
                    {
                        "spec": spec,
                        "metric": metric,
                        "min": _format_value(low.values[f"{metric}_min"]),
                        "min_at": _cell_label(low.params),
                        "max": _format_value(high.values[f"{metric}_max"]),
                        "max_at": _cell_label(high.params),
                    }
                )
        return rows

    def to_csv(self, path: Union[str, Path]) -> None:
        _write_rows(self.rows(), path)

    def summary_to_csv(self, path: Union[str, Path]) -> None:
        _write_rows(self.summary_rows(), path)

    def traces_to_csv(self, path: Union[str, Path]) -> None:
        _write_rows([{k: _format_value(v) for k, v in t.items()} for t in self.traces], path)

    def timings(self) -> Dict[str, Any]:
        return {
            "total_seconds": self.wall_clock,
            "cells": [
                {"spec": r.spec, **r.params, "seconds": r.wall_clock} for r in self.records
            ],
        }


def _cell_label(params: Dict[str, Any]) -> str:
    return "({}, {}, {})".format(
        _format_value(params.get("alpha")), params.get("d"), params.get("k")
    )


class DataSource:
    """Synthetic Gaussian data per (d, repetition), or one CSV matrix for every cell."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._file = read_matrix_csv(cfg.data_path) if cfg.data_path else None

    def dims(self) -> List[int]:
        if self._file is not None:
            return [self._file.rows]
        return self.cfg.grid_ds()

    def matrix(self, d: int, repetition: int = 0) -> DataMatrix:
        if self._file is not None:
            return self._file
        cfg = self.cfg
        seed = derive_seed(cfg.seed, d, cfg.T, repetition)
        return gen_gaussian(d, cfg.T, cfg.data_mean, cfg.data_sd, seed)

    def for_spec(self, X: DataMatrix, spec: ProblemSpec, repetition: int = 0) -> DataMatrix:
        """
        Adapt a data matrix to the loss of spec.

        The masked loss gets a random observation mask on fully observed data.
        The logistic loss gets entries squashed through the sigmoid unless they
        already lie in [0, 1].
        """
        if spec.loss.kind == "cross_entropy_sigmoid" and isinstance(X, DenseMatrix):
            if np.all((X.data >= 0.0) & (X.data <= 1.0)):
                return X
            return DenseMatrix(expit(X.data))
        if spec.loss.kind != "masked_half_squared" or isinstance(X, ObservedMatrix):
            return X
        rng = make_rng(self.cfg.seed, X.rows, X.cols, repetition, 1)
        mask = rng.random(X.shape) < self.cfg.observed_fraction
        mask[0, 0] = True
        return ObservedMatrix(X, mask)


def _spec_for(cfg: ExperimentConfig, name: str, alpha: float, k: int, d: int, nus) -> ProblemSpec:
    nu_d, nu_h = nus
    return preset_spec(
        name,
        alpha,
        k,
        d,
        nu_d=0.5 if nu_d is None else nu_d,
        nu_h=0.5 if nu_h is None else nu_h,
        averaged=cfg.averaged,
        s=cfg.s,
        alpha_s=cfg.alpha_s,
        split=cfg.split,
        unsquared_l1=cfg.unsquared_l1,
    )


def _cell_params(alpha: float, X: DataMatrix, k: int, nus) -> Dict[str, Any]:
    return {"alpha": alpha, "d": X.rows, "k": k, "T": X.cols, "nu_d": nus[0], "nu_h": nus[1]}


@dataclass
class _Cell:
    name: str
    params: Dict[str, Any]
    X: DataMatrix
    spec: ProblemSpec


@dataclass
class _TrialOutcome:
    objective: float
    Z: Optional[np.ndarray]
    iterations: int
    converged: bool
    wall_clock: float
    error: Optional[str] = None


def _solve_trial(X: DataMatrix, spec: ProblemSpec, config: SolverConfig) -> _TrialOutcome:
    try:
        fact, report = am_dlm_solve(X, spec, config)
    except NumericalError as exc:
        logger.warning("Trial with seed %d failed: %s", config.seed, exc)
        return _TrialOutcome(float("nan"), None, 0, False, 0.0, str(exc))
    return _TrialOutcome(
        report.final_objective, fact.Z, report.iterations, report.converged, report.wall_clock
    )


def _init_seed(cfg: ExperimentConfig, params: Dict[str, Any], *keys: int) -> int:
    return derive_seed(cfg.seed, params["alpha"], params["d"], params["k"], *keys)


def _trial_config(cfg: ExperimentConfig, seed: int, mean: float) -> SolverConfig:
    return SolverConfig(
        seed=seed,
        init_mean=mean,
        init_sd=cfg.init_sd,
        max_iters=cfg.max_iters,
        tol=cfg.tol,
    )


def _failure(outcomes: Sequence[_TrialOutcome]) -> Optional[str]:
    for outcome in outcomes:
        if outcome.error is not None:
            return f"failed: {outcome.error}"
    return None


def multi_init_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """
    Run every grid cell from n_inits starting points and compare the solutions.

    Each cell is (spec, nu_d, nu_h, alpha, d, k). Trial i starts from a
    Gaussian draw with mean init_means[i] and sd init_sd; its seed depends only
    on (seed, alpha, d, k, i), or on (seed, alpha, d, k) when vary_init_seed is
    off. A solver failure marks the cell as failed and the grid carries on.

    Args:
        cfg (ExperimentConfig): Grid and solver settings

    Returns:
        ExperimentReport: One record per cell with min/max relative objective
        and thresholded solution differences
    """
    cfg.validate()
    start = time.perf_counter()
    source = DataSource(cfg)
    means = cfg.resolved_init_means()

    cells: List[_Cell] = []
    for name in cfg.specs:
        for nus in cfg.nu_grid(name):
            for alpha in cfg.alphas:
                for d in source.dims():
                    base = source.matrix(d)
                    for k in cfg.ks:
                        spec = _spec_for(cfg, name, alpha, k, base.rows, nus)
                        X = source.for_spec(base, spec)
                        cells.append(_Cell(name, _cell_params(alpha, X, k, nus), X, spec))

    tasks = [(c, trial) for c in range(len(cells)) for trial in range(cfg.n_inits)]

    def run(task: Tuple[int, int]) -> _TrialOutcome:
        c, trial = task
        cell = cells[c]
        seed = _init_seed(cfg, cell.params, trial if cfg.vary_init_seed else 0)
        return _solve_trial(cell.X, cell.spec, _trial_config(cfg, seed, means[trial]))

    outcomes = run_ordered(run, tasks, cfg.workers, cfg.show_progress, desc="multi-init")

    records = []
    for c, cell in enumerate(cells):
        trials = outcomes[c * cfg.n_inits : (c + 1) * cfg.n_inits]
        record = CellRecord(
            spec=cell.name,
            params=cell.params,
            objectives=[t.objective for t in trials],
            wall_clock=sum(t.wall_clock for t in trials),
        )
        failure = _failure(trials)
        if failure:
            record.status = failure
        else:
            metrics = compare_solutions(
                [t.objective for t in trials], [t.Z for t in trials], threshold=cfg.threshold
            )
            record.values = {
                "rel_obj_diff_min": metrics["relative_objective_difference_min"],
                "rel_obj_diff_max": metrics["relative_objective_difference_max"],
                "solution_diff_min": metrics["thresholded_solution_difference_min"],
                "solution_diff_max": metrics["thresholded_solution_difference_max"],
                "max_iterations": max(t.iterations for t in trials),
                "all_converged": all(t.converged for t in trials),
            }
        logger.info("multi-init %s %s: %s", cell.name, cell.params, record.status)
        records.append(record)

    return ExperimentReport("multi_init", records, wall_clock=time.perf_counter() - start)


def k_sweep_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """
    Objective spread and capacity gap as the inner dimension grows.

    For each (spec, nu_d, nu_h, alpha, d) and each k in the grid plus the
    reference k = T: the standard deviation of the final objectives over
    n_inits starts, and the relative gap (best_k - best_T) / best_T. Both are
    averaged over cfg.repetitions independent data draws.

    Returns:
        ExperimentReport: One record per (cell, k)
    """
    cfg.validate()
    start = time.perf_counter()
    source = DataSource(cfg)
    means = cfg.resolved_init_means()

    groups = []
    for name in cfg.specs:
        for nus in cfg.nu_grid(name):
            for alpha in cfg.alphas:
                for d in source.dims():
                    data = [source.matrix(d, r) for r in range(cfg.repetitions)]
                    T = data[0].cols
                    if max(cfg.ks) > T:
                        raise InvalidInputError(f"k grid must lie in [1, T={T}]")
                    ks = sorted(set(cfg.ks) | {T})
                    groups.append((name, nus, alpha, data, ks))

    tasks = []
    for g, (name, nus, alpha, data, ks) in enumerate(groups):
        for k in ks:
            for r, base in enumerate(data):
                spec = _spec_for(cfg, name, alpha, k, base.rows, nus)
                X = source.for_spec(base, spec, r)
                params = _cell_params(alpha, X, k, nus)
                for trial in range(cfg.n_inits):
                    seed = _init_seed(cfg, params, r, trial if cfg.vary_init_seed else 0)
                    tasks.append((g, k, r, X, spec, _trial_config(cfg, seed, means[trial])))

    outcomes = run_ordered(
        lambda task: _solve_trial(*task[3:]), tasks, cfg.workers, cfg.show_progress, desc="k-sweep"
    )
    by_key: Dict[Tuple[int, int, int], List[_TrialOutcome]] = {}
    for task, outcome in zip(tasks, outcomes):
        by_key.setdefault(task[:3], []).append(outcome)

    records = []
    for g, (name, nus, alpha, data, ks) in enumerate(groups):
        T = data[0].cols
        reference = [by_key[(g, T, r)] for r in range(len(data))]
        reference_failure = next(filter(None, (_failure(ts) for ts in reference)), None)
        for k in ks:
            runs = [by_key[(g, k, r)] for r in range(len(data))]
            record = CellRecord(
                spec=name,
                params=_cell_params(alpha, data[0], k, nus),
                objectives=[t.objective for ts in runs for t in ts],
                wall_clock=sum(t.wall_clock for ts in runs for t in ts),
            )
            failure = next(filter(None, (_failure(ts) for ts in runs)), None) or reference_failure
            if failure:
                record.status = failure
                records.append(record)
                continue
            stds, mean_objs, gaps = [], [], []
            for ts, ref in zip(runs, reference):
                objs = np.array([t.objective for t in ts])
                best_ref = min(t.objective for t in ref)
                stds.append(float(np.std(objs, ddof=1)))
                mean_objs.append(float(objs.mean()))
                gaps.append((float(objs.min()) - best_ref) / abs(best_ref))
            std = float(np.mean(stds))
            mean_obj = float(np.mean(mean_objs))
            record.values = {
                "std": std,
                "mean_objective": mean_obj,
                "relative_std": std / abs(mean_obj) if mean_obj else 0.0,
                "gap": float(np.mean(gaps)),
            }
            records.append(record)
        logger.info("k-sweep %s alpha=%s nus=%s done", name, alpha, nus)

    return ExperimentReport("k_sweep", records, wall_clock=time.perf_counter() - start)


def _hit_step(trace: Sequence[Tuple[int, float]], reference: float) -> Optional[int]:
    for step, value in trace:
        if (value - reference) <= HIT_FRACTION * abs(reference):
            return int(step)
    return None


def _method_config(cfg: ExperimentConfig, method: str, seed: int):
    common = dict(epochs=cfg.epochs, seed=seed, show_progress=False)
    if method == "online":
        return OnlineConfig(**common)
    if method.startswith("sgd_"):
        return SgdConfig(schedule=method[len("sgd_") :], eta0=cfg.eta0, **common)
    if method == "accelerated":
        return SgdConfig(
            schedule=cfg.accelerate_schedule, eta0=cfg.eta0, accelerate=True, **common
        )
    return SgdConfig(schedule="type2", eta0=cfg.eta0, momentum=cfg.momentum, **common)


def _run_method(method: str, X: DenseMatrix, spec: ProblemSpec, cfg: ExperimentConfig, seed: int):
    try:
        if method == "batch":
            fact, report = am_dlm_solve(
                X, spec, SolverConfig(seed=seed, max_iters=cfg.max_iters, tol=cfg.tol)
            )
            return dictionary_objective(fact.D, X, spec), report, None
        solver = online_am_dlm if method == "online" else sgd_am_dlm
        _, report = solver(X, spec, _method_config(cfg, method, seed))
        return report.final_objective, report, None
    except NumericalError as exc:
        logger.warning("%s failed: %s", method, exc)
        return float("nan"), None, str(exc)


def incremental_compare(cfg: ExperimentConfig) -> ExperimentReport:
    """
    Batch reference against online AM-DLM and the SGD variants on the same data.

    All methods share one seed per (alpha, d, k), so they start from the same
    dictionary and see the same reshuffles. The reference is the full-data
    dictionary objective of the batch solution. For every method the report
    records the first step within 5% of it, the final objective and the
    update wall-clock; the traces table holds every evaluated (step, objective).

    Returns:
        ExperimentReport: One record per (cell, method), plus plot-ready traces
    """
    cfg.validate()
    start = time.perf_counter()
    source = DataSource(cfg)

    cells = []
    for name in cfg.specs:
        for nus in cfg.nu_grid(name):
            for alpha in cfg.alphas:
                for d in source.dims():
                    X = source.matrix(d)
                    if isinstance(X, ObservedMatrix):
                        raise UnsupportedKindError("incremental_compare needs fully observed data")
                    for k in cfg.ks:
                        spec = _spec_for(cfg, name, alpha, k, X.rows, nus)
                        if spec.loss.kind != "half_squared":
                            raise UnsupportedKindError(
                                f"incremental_compare needs the half-squared loss, {name} uses "
                                f"{spec.loss.kind}"
                            )
                        cells.append(_Cell(name, _cell_params(alpha, X, k, nus), X, spec))

    tasks = [(c, method) for c in range(len(cells)) for method in INCREMENTAL_METHODS]

    def run(task):
        c, method = task
        cell = cells[c]
        return _run_method(method, cell.X, cell.spec, cfg, _init_seed(cfg, cell.params))

    outcomes = run_ordered(run, tasks, cfg.workers, cfg.show_progress, desc="incremental")

    records, traces = [], []
    n_methods = len(INCREMENTAL_METHODS)
    for c, cell in enumerate(cells):
        results = dict(zip(INCREMENTAL_METHODS, outcomes[c * n_methods : (c + 1) * n_methods]))
        reference, _, batch_error = results["batch"]
        T = cell.X.cols
        for method, (final, report, error) in results.items():
            record = CellRecord(spec=cell.name, params=dict(cell.params, method=method))
            if error or batch_error:
                record.status = f"failed: {error or batch_error}"
                records.append(record)
                continue
            hit = _hit_step(report.objective_trace, reference)
            record.objectives = [final]
            record.wall_clock = report.wall_clock
            record.values = {
                "reference_objective": reference,
                "relative_gap": (final - reference) / abs(reference),
                "hit_step": hit,
                "hit_epoch": None if hit is None or method == "batch" else hit / T,
                "steps": report.iterations,
            }
            if method == "accelerated":
                steps = np.asarray(report.step_sizes)
                record.values["step_sizes_nonincreasing"] = bool(np.all(np.diff(steps) <= 0))
            records.append(record)
            traces.extend(
                {"spec": cell.name, **cell.params, "method": method, "step": s, "objective": v}
                for s, v in report.objective_trace
            )

    return ExperimentReport(
        "incremental_compare", records, traces=traces, wall_clock=time.perf_counter() - start
    )
