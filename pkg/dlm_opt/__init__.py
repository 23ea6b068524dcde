__version__ = "0.1.0"

# Read .env before anything looks at DLM_* variables
from .utils import load_environment

load_environment()

# Then import the rest
from .core import (
    AVAILABLE_LOSSES,
    AVAILABLE_REGULARIZERS,
    DenseMatrix,
    DLMError,
    Factorization,
    InvalidInputError,
    LossSpec,
    MatrixFormatError,
    NumericalError,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    TrialReport,
    UnsupportedKindError,
    compare_solutions,
    relative_objective_difference,
    thresholded_solution_difference,
)
from .solvers import (
    OnlineConfig,
    SgdConfig,
    SolverConfig,
    am_dlm_solve,
    objective_value,
    online_am_dlm,
    sgd_am_dlm,
)
from .certify import global_certificate, svd_shrinkage_optimum

__all__ = [
    "__version__",
    "AVAILABLE_LOSSES",
    "AVAILABLE_REGULARIZERS",
    "DenseMatrix",
    "ObservedMatrix",
    "Factorization",
    "RegularizerSpec",
    "LossSpec",
    "ProblemSpec",
    "TrialReport",
    "DLMError",
    "InvalidInputError",
    "UnsupportedKindError",
    "NumericalError",
    "MatrixFormatError",
    "relative_objective_difference",
    "thresholded_solution_difference",
    "compare_solutions",
    "SolverConfig",
    "SgdConfig",
    "OnlineConfig",
    "objective_value",
    "am_dlm_solve",
    "sgd_am_dlm",
    "online_am_dlm",
    "svd_shrinkage_optimum",
    "global_certificate",
]
