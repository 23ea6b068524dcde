import numpy as np

from dlm_opt import LossSpec, ProblemSpec, RegularizerSpec, SolverConfig, am_dlm_solve
from dlm_opt.certify import global_certificate, svd_shrinkage_optimum

l2 = RegularizerSpec.squared_l2()
spec = ProblemSpec(LossSpec(), reg_d=l2, reg_h=l2, alpha=0.5, k=2)

X = np.array([[2.0, 0.0], [0.0, 1.0]])

fact, report = am_dlm_solve(X, spec, SolverConfig(seed=0))
optimum = svd_shrinkage_optimum(X, spec)
certificate = global_certificate(fact, X, spec, tol=1e-4)

print("\nSolver Results:")
print(f"objective: {report.final_objective:.6f} (optimum {optimum.objective:.6f})")
print(f"iterations: {report.iterations}")
print(f"globally optimal: {certificate.globally_optimal}")
