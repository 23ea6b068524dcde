from dataclasses import dataclass
from typing import Optional

from ..core import InvalidInputError
from ..model.codes import InnerSolveConfig

LIPSCHITZ_MODES = ["analytic", "power-iteration"]
SCHEDULES = ["type1", "type2", "type3"]


@dataclass
class SolverConfig(InnerSolveConfig):
    max_iters: int = 50000
    tol: float = 1e-8
    step_D: Optional[float] = None  # overrides 1/lipschitz_bound
    step_H: Optional[float] = None
    lipschitz_mode: str = "analytic"
    inner_prox_iters: int = 1
    seed: int = 0
    init_mean: float = 0.0
    init_sd: Optional[float] = None  # None means 1/sqrt(k)
    exact: bool = False
    subgradient: bool = False
    max_backtracks: int = 40
    show_progress: bool = False

    def validate(self) -> None:
        """Validate the configuration"""
        super().validate()
        if self.max_iters < 1:
            raise InvalidInputError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tol > 0:
            raise InvalidInputError(f"tol must be > 0, got {self.tol}")
        for name in ("step_D", "step_H"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise InvalidInputError(f"{name} must be > 0, got {value}")
        if self.lipschitz_mode not in LIPSCHITZ_MODES:
            raise InvalidInputError(f"Unsupported lipschitz_mode: {self.lipschitz_mode}")
        if self.inner_prox_iters < 1:
            raise InvalidInputError("inner_prox_iters must be >= 1")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be non-negative, got {self.seed}")
        if self.init_sd is not None and not self.init_sd > 0:
            raise InvalidInputError(f"init_sd must be > 0, got {self.init_sd}")
        if self.max_backtracks < 0:
            raise InvalidInputError("max_backtracks must be >= 0")


@dataclass
class SgdConfig(InnerSolveConfig):
    schedule: str = "type2"
    eta0: float = 0.5
    momentum: float = 0.0
    accelerate: bool = False
    epochs: int = 30
    eval_every: Optional[int] = None  # None means once per epoch
    seed: int = 0
    init_mean: float = 0.0
    init_sd: Optional[float] = None
    show_progress: bool = False

    def validate(self) -> None:
        """Validate the configuration"""
        super().validate()
        if self.schedule not in SCHEDULES:
            raise InvalidInputError(f"Unsupported schedule: {self.schedule}")
        if not self.eta0 > 0:
            raise InvalidInputError(f"eta0 must be > 0, got {self.eta0}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidInputError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")
        if self.eval_every is not None and self.eval_every < 1:
            raise InvalidInputError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be non-negative, got {self.seed}")
        if self.init_sd is not None and not self.init_sd > 0:
            raise InvalidInputError(f"init_sd must be > 0, got {self.init_sd}")


@dataclass
class OnlineConfig(InnerSolveConfig):
    epochs: int = 30
    tol: float = 1e-6  # relative change of D in the surrogate solve
    max_sweeps: int = 100
    beta_floor: float = 0.01
    eval_every: Optional[int] = None
    seed: int = 0
    init_mean: float = 0.0
    init_sd: Optional[float] = None
    show_progress: bool = False

    def validate(self) -> None:
        """Validate the configuration"""
        super().validate()
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be >= 1, got {self.epochs}")
        if not self.tol > 0:
            raise InvalidInputError(f"tol must be > 0, got {self.tol}")
        if self.max_sweeps < 1:
            raise InvalidInputError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if not 0.0 < self.beta_floor <= 1.0:
            raise InvalidInputError(f"beta_floor must lie in (0, 1], got {self.beta_floor}")
        if self.eval_every is not None and self.eval_every < 1:
            raise InvalidInputError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.seed < 0:
            raise InvalidInputError(f"seed must be non-negative, got {self.seed}")
        if self.init_sd is not None and not self.init_sd > 0:
            raise InvalidInputError(f"init_sd must be > 0, got {self.init_sd}")
