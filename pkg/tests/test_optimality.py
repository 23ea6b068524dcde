import numpy as np
import pytest

from dlm_opt.certify import (
    effective_trace_weight,
    global_certificate,
    hessian_min_eigenvalue,
    stationarity_residual,
    svd_shrinkage_optimum,
)
from dlm_opt.core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    LossSpec,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
)
from dlm_opt.solvers import SolverConfig, am_dlm_solve, objective_value


@pytest.fixture
def saddle():
    """Stationary point of the diag(2, 1) instance that keeps only the top direction."""
    root = np.diag([np.sqrt(1.5), 0.0])
    return Factorization(DenseMatrix(root), DenseMatrix(root))


class TestShrinkageOptimum:
    def test_known_instance(self, subspace_spec, shrinkage_data):
        optimum = svd_shrinkage_optimum(shrinkage_data, subspace_spec())
        np.testing.assert_allclose(optimum.Z, np.diag([1.5, 0.5]), atol=1e-12)
        assert optimum.objective == pytest.approx(1.25)

    def test_factorization_reaches_reported_objective(self, subspace_spec, rng):
        X = rng.standard_normal((4, 6))
        spec = subspace_spec(alpha=0.7, k=3, averaged=True, s=1.5)
        optimum = svd_shrinkage_optimum(X, spec)
        np.testing.assert_allclose(optimum.factorization.Z, optimum.Z, atol=1e-10)
        assert objective_value(optimum.factorization, X, spec) == pytest.approx(optimum.objective)

    def test_large_alpha_gives_zero(self, subspace_spec, shrinkage_data):
        optimum = svd_shrinkage_optimum(shrinkage_data, subspace_spec(alpha=10.0))
        assert not np.any(optimum.Z)
        assert optimum.objective == pytest.approx(2.5)

    def test_rank_is_capped_at_k(self, subspace_spec, shrinkage_data):
        optimum = svd_shrinkage_optimum(shrinkage_data, subspace_spec(k=1))
        np.testing.assert_allclose(optimum.Z, np.diag([1.5, 0.0]), atol=1e-12)

    def test_needs_subspace_problem(self, shrinkage_data):
        l2 = RegularizerSpec.squared_l2()
        spec = ProblemSpec(LossSpec(), RegularizerSpec.squared_l1(), l2, alpha=0.5, k=2)
        with pytest.raises(UnsupportedKindError):
            svd_shrinkage_optimum(shrinkage_data, spec)


def test_effective_trace_weight(subspace_spec):
    assert effective_trace_weight(subspace_spec(alpha=0.5), 9) == 0.5
    assert effective_trace_weight(subspace_spec(alpha=0.6, averaged=True, s=2.0), 9) == (
        pytest.approx(0.1)
    )


class TestCertificate:
    def test_global_optimum_is_certified(self, subspace_spec, shrinkage_data):
        spec = subspace_spec()
        fact = svd_shrinkage_optimum(shrinkage_data, spec).factorization
        cert = global_certificate(fact, shrinkage_data, spec)
        assert cert.globally_optimal
        assert cert.dual_sigma_max == pytest.approx(0.5)
        assert cert.alpha == 0.5
        assert cert.grad_D_norm < 1e-12
        assert cert.grad_H_norm < 1e-12
        assert cert.hessian_min_eig is None

    def test_saddle_is_stationary_but_not_optimal(self, subspace_spec, shrinkage_data, saddle):
        cert = global_certificate(saddle, shrinkage_data, subspace_spec(), with_hessian=True)
        assert cert.grad_D_norm < 1e-12
        assert cert.grad_H_norm < 1e-12
        assert cert.dual_sigma_max == pytest.approx(1.0)
        assert not cert.globally_optimal
        assert cert.hessian_min_eig < -0.1

    def test_non_stationary_point_fails(self, subspace_spec, shrinkage_data):
        fact = Factorization(DenseMatrix(np.eye(2)), DenseMatrix(np.eye(2)))
        cert = global_certificate(fact, shrinkage_data, subspace_spec())
        assert not cert.globally_optimal
        assert cert.grad_D_norm > 0.1

    def test_weighted_dictionary_regularizer(self, shrinkage_data):
        # Lambda = I reduces to the plain case
        spec = ProblemSpec(
            LossSpec(),
            RegularizerSpec.weighted_squared_l2([1.0, 1.0]),
            RegularizerSpec.squared_l2(),
            alpha=0.5,
            k=2,
        )
        root = np.diag([np.sqrt(1.5), np.sqrt(0.5)])
        fact = Factorization(DenseMatrix(root), DenseMatrix(root))
        assert global_certificate(fact, shrinkage_data, spec).globally_optimal

    def test_unsupported_regularizers(self, shrinkage_data, saddle):
        spec = ProblemSpec(
            LossSpec(),
            RegularizerSpec.squared_l2(),
            RegularizerSpec.elastic_net(0.5),
            alpha=0.5,
            k=2,
        )
        with pytest.raises(UnsupportedKindError):
            global_certificate(saddle, shrinkage_data, spec)

    def test_to_dict(self, subspace_spec, shrinkage_data, saddle):
        payload = global_certificate(saddle, shrinkage_data, subspace_spec()).to_dict()
        assert set(payload) == {
            "grad_D_norm",
            "grad_H_norm",
            "dual_sigma_max",
            "alpha",
            "globally_optimal",
            "hessian_min_eig",
        }


class TestHessian:
    def test_global_optimum_has_no_descent_direction(self, subspace_spec, shrinkage_data):
        spec = subspace_spec()
        fact = svd_shrinkage_optimum(shrinkage_data, spec).factorization
        assert hessian_min_eigenvalue(fact, shrinkage_data, spec) >= -1e-5

    def test_size_limit(self, subspace_spec):
        fact = Factorization(DenseMatrix.zeros(30, 10), DenseMatrix.zeros(10, 20))
        with pytest.raises(InvalidInputError):
            hessian_min_eigenvalue(fact, np.zeros((30, 20)), subspace_spec(k=10))


def test_stationarity_residual(subspace_spec):
    X = np.array([[30.0, 0.0], [0.0, 40.0]])
    fact = Factorization(DenseMatrix.zeros(2, 2), DenseMatrix.zeros(2, 2))
    # the gradient is zero at D = H = 0 for squared-l2 terms
    assert stationarity_residual(fact, X, subspace_spec()) == (0.0, 0.0)

    identity = Factorization(DenseMatrix(np.eye(2)), DenseMatrix(np.eye(2)))
    grad_D, grad_H = stationarity_residual(identity, X, subspace_spec())
    # divided by ||X||_F = 50
    assert grad_D == pytest.approx(np.hypot(28.5, 38.5) / 50.0)
    assert grad_H == pytest.approx(grad_D)


def _separated_instance(seed):
    """4 x 6 data whose singular values keep clear of each other and of the 0.5 threshold."""
    gen = np.random.default_rng(seed)
    U, _ = np.linalg.qr(gen.standard_normal((4, 4)))
    V, _ = np.linalg.qr(gen.standard_normal((6, 4)))
    sigma = [gen.uniform(2.5, 3.5), gen.uniform(1.6, 2.2), gen.uniform(1.0, 1.3)]
    sigma.append(gen.uniform(0.05, 0.25))
    return (U * sigma) @ V.T


@pytest.mark.parametrize("seed", range(20))
def test_solver_output_is_certified(subspace_spec, seed):
    X = _separated_instance(seed)
    spec = subspace_spec(alpha=0.5, k=4)
    fact, _ = am_dlm_solve(X, spec, SolverConfig(tol=1e-14, max_iters=20000, seed=seed))
    cert = global_certificate(fact, X, spec, tol=1e-4, sigma_tol=1e-3)
    assert cert.globally_optimal
    assert objective_value(fact, X, spec) == pytest.approx(
        svd_shrinkage_optimum(X, spec).objective, rel=1e-6
    )


@pytest.mark.parametrize("seed", range(20))
def test_noisy_dictionary_loses_the_certificate(subspace_spec, seed):
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((5, 8))
    spec = subspace_spec(alpha=0.5, k=5)
    fact = svd_shrinkage_optimum(X, spec).factorization
    assert global_certificate(fact, X, spec).globally_optimal

    # the D-gradient moves by E (H H^T + alpha I), so at least alpha ||E||
    noisy_D = fact.D.data + gen.normal(0.0, 0.1, size=fact.D.shape)
    noisy = Factorization(DenseMatrix(noisy_D), fact.H)
    cert = global_certificate(noisy, X, spec)
    assert not cert.globally_optimal
    assert max(cert.grad_D_norm, cert.grad_H_norm) > 1e-3
