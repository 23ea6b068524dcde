import numpy as np
import pytest

from dlm_opt.certify import (
    convexity_probe,
    induced_reg_estimate,
    irp_gap,
    segment_violation,
    svd_shrinkage_optimum,
)
from dlm_opt.core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    NumericalError,
    RegularizerSpec,
)

L2 = RegularizerSpec.squared_l2()


def test_scalar_product():
    # min d^2 + h^2 subject to d h = 3
    assert induced_reg_estimate(np.array([[3.0]]), L2, L2, k=1) == pytest.approx(6.0, rel=1e-4)


def test_zero_matrix():
    assert induced_reg_estimate(np.zeros((2, 3)), L2, L2, k=2) == 0.0


def test_squared_l2_pair_gives_twice_trace_norm(rng):
    Z = rng.standard_normal((3, 3))
    trace_norm = np.linalg.svd(Z, compute_uv=False).sum()
    estimate = induced_reg_estimate(Z, L2, L2, k=3, n_starts=2)
    assert estimate == pytest.approx(2.0 * trace_norm, rel=1e-3)


def test_rank_above_k_is_infeasible(rng):
    Z = rng.standard_normal((3, 3))
    with pytest.raises(NumericalError) as excinfo:
        induced_reg_estimate(Z, L2, L2, k=2, n_starts=1)
    assert excinfo.value.diagnostic["k"] == 2


@pytest.mark.parametrize(
    "kwargs",
    [{"k": 0}, {"k": 1, "n_starts": 0}, {"k": 1, "rho_schedule": [1.0, -1.0]}],
)
def test_invalid_arguments(kwargs):
    with pytest.raises(InvalidInputError):
        induced_reg_estimate(np.eye(1), L2, L2, **kwargs)


def test_irp_gap_vanishes_at_balanced_optimum(subspace_spec, shrinkage_data):
    spec = subspace_spec()
    fact = svd_shrinkage_optimum(shrinkage_data, spec).factorization
    assert irp_gap(fact, spec, n_starts=2) == pytest.approx(0.0, abs=1e-3)


def test_irp_gap_is_positive_for_unbalanced_factors(subspace_spec, shrinkage_data):
    spec = subspace_spec()
    fact = svd_shrinkage_optimum(shrinkage_data, spec).factorization
    unbalanced = Factorization(DenseMatrix(fact.D.data * 2.0), DenseMatrix(fact.H.data / 2.0))
    assert irp_gap(unbalanced, spec, n_starts=2) > 0.5


def test_non_norm_regularizer_breaks_convexity():
    reg_d = RegularizerSpec.non_norm_elastic_net(0.5, weights=[1.0])
    violation = segment_violation(np.zeros((1, 1)), np.ones((1, 1)), reg_d, L2, k=1, n_starts=2)
    assert violation > 0.05


def test_induced_pair_shows_no_violation():
    violation = segment_violation(
        np.array([[2.0, 0.0]]), np.array([[0.0, 1.0]]), L2, L2, k=1, n_starts=2
    )
    assert violation <= 1e-4


@pytest.mark.slow
def test_convexity_probe_squared_l2():
    assert convexity_probe(L2, L2, k=2, dims=(2, 3), n_segments=3, n_starts=2) <= 1e-4


def test_convexity_probe_needs_segments():
    with pytest.raises(InvalidInputError):
        convexity_probe(L2, L2, k=1, dims=(1, 1), n_segments=0)
