from .config import OnlineConfig, SgdConfig, SolverConfig
from .batch import (
    LipschitzBound,
    am_dlm_solve,
    dictionary_objective,
    lipschitz_bound,
    objective_value,
    step_prox_elastic,
    step_prox_l1,
    step_smooth,
)
from .incremental import (
    OnlineState,
    SgdState,
    accelerated_step,
    online_am_dlm,
    schedule_step_size,
    sgd_am_dlm,
)

__all__ = [
    "SolverConfig",
    "SgdConfig",
    "OnlineConfig",
    "LipschitzBound",
    "objective_value",
    "dictionary_objective",
    "lipschitz_bound",
    "step_smooth",
    "step_prox_l1",
    "step_prox_elastic",
    "am_dlm_solve",
    "SgdState",
    "OnlineState",
    "schedule_step_size",
    "accelerated_step",
    "sgd_am_dlm",
    "online_am_dlm",
]
