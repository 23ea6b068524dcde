from .optimality import (
    Certificate,
    effective_trace_weight,
    global_certificate,
    hessian_min_eigenvalue,
    stationarity_residual,
    svd_shrinkage_optimum,
)
from .induced import convexity_probe, induced_reg_estimate, irp_gap, segment_violation
from .transforms import (
    producted_stationarity_residual,
    rebalance_factors,
    scaled_problem,
    scaling_transport,
)

__all__ = [
    "Certificate",
    "effective_trace_weight",
    "svd_shrinkage_optimum",
    "stationarity_residual",
    "global_certificate",
    "hessian_min_eigenvalue",
    "induced_reg_estimate",
    "segment_violation",
    "convexity_probe",
    "irp_gap",
    "rebalance_factors",
    "producted_stationarity_residual",
    "scaled_problem",
    "scaling_transport",
]
