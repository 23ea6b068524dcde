from .checks import ProxCheckResult, prox_check
from .data import MatrixFormatError, gen_gaussian, read_matrix_csv, write_matrix_csv
from .experiments import (
    AVAILABLE_EXPERIMENTS,
    AVAILABLE_PRESETS,
    CellRecord,
    ExperimentConfig,
    ExperimentReport,
    incremental_compare,
    k_sweep_experiment,
    multi_init_experiment,
    preset_spec,
)

__all__ = [
    "MatrixFormatError",
    "gen_gaussian",
    "read_matrix_csv",
    "write_matrix_csv",
    "AVAILABLE_EXPERIMENTS",
    "AVAILABLE_PRESETS",
    "ExperimentConfig",
    "ExperimentReport",
    "CellRecord",
    "preset_spec",
    "multi_init_experiment",
    "k_sweep_experiment",
    "incremental_compare",
    "ProxCheckResult",
    "prox_check",
]
