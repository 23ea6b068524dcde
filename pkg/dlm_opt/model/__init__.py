from .losses import loss_gradient, loss_value, robust_inner_solve, robust_noise
from .prox import ProxResult, group_soft_threshold, prox_sql1, prox_sql1_oracle, soft_threshold
from .regularizers import reg_matrix_value, reg_subgradient, reg_vector_gradient, reg_vector_value
from .codes import InnerSolveConfig, encode, solve_h_given_d

__all__ = [
    "loss_value",
    "loss_gradient",
    "robust_inner_solve",
    "robust_noise",
    "ProxResult",
    "soft_threshold",
    "prox_sql1",
    "prox_sql1_oracle",
    "group_soft_threshold",
    "reg_vector_value",
    "reg_vector_gradient",
    "reg_matrix_value",
    "reg_subgradient",
    "InnerSolveConfig",
    "solve_h_given_d",
    "encode",
]
