import numpy as np
import pytest

from dlm_opt.certify import svd_shrinkage_optimum
from dlm_opt.core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    LossSpec,
    NumericalError,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
)
from dlm_opt.solvers import (
    SolverConfig,
    am_dlm_solve,
    lipschitz_bound,
    objective_value,
    step_prox_elastic,
    step_prox_l1,
    step_smooth,
)
from dlm_opt.solvers.batch import auto_family


def _spec(reg_d, reg_h, alpha=0.5, k=2, **kwargs):
    return ProblemSpec(LossSpec(), reg_d, reg_h, alpha=alpha, k=k, **kwargs)


def _random_problem(rng, d=4, T=6, k=3):
    X = DenseMatrix(rng.standard_normal((d, T)))
    fact = Factorization(
        DenseMatrix(rng.standard_normal((d, k))), DenseMatrix(rng.standard_normal((k, T)))
    )
    return X, fact


class TestObjective:
    def test_all_zero(self, subspace_spec):
        fact = Factorization(DenseMatrix.zeros(2, 2), DenseMatrix.zeros(2, 3))
        assert objective_value(fact, np.zeros((2, 3)), subspace_spec()) == 0.0

    def test_no_regularization_is_loss_only(self, subspace_spec, rng):
        X, fact = _random_problem(rng, k=2)
        expected = 0.5 * np.sum((fact.Z - X.data) ** 2)
        assert objective_value(fact, X, subspace_spec(alpha=0.0)) == pytest.approx(expected)

    def test_shrinkage_instance(self, subspace_spec, shrinkage_data):
        root = np.diag([np.sqrt(1.5), np.sqrt(0.5)])
        fact = Factorization(DenseMatrix(root), DenseMatrix(root))
        assert objective_value(fact, shrinkage_data, subspace_spec()) == pytest.approx(1.25)

    def test_averaged_weights(self, rng):
        X, fact = _random_problem(rng, k=2)
        l2 = RegularizerSpec.squared_l2()
        spec = _spec(l2, l2, alpha=0.3, averaged=True, s=2.0)
        T = X.cols
        expected = (
            0.5 * np.sum((fact.Z - X.data) ** 2) / T
            + 0.15 * np.sum(fact.D.data**2)
            + 0.3 / (2 * 4 * T) * np.sum(fact.H.data**2)
        )
        assert objective_value(fact, X, spec) == pytest.approx(expected)

    def test_shape_mismatch(self, subspace_spec):
        fact = Factorization(DenseMatrix.zeros(2, 2), DenseMatrix.zeros(2, 3))
        with pytest.raises(InvalidInputError):
            objective_value(fact, np.zeros((3, 3)), subspace_spec())


class TestLipschitz:
    def test_identity(self, subspace_spec):
        bound = lipschitz_bound(subspace_spec(), np.eye(2), "D")
        assert bound.value == pytest.approx(1.0)
        assert not bound.floored

    def test_per_column_elastic_net(self):
        spec = _spec(RegularizerSpec.elastic_net(0.5), RegularizerSpec.squared_l2(), alpha=1.0, k=1)
        H = np.array([[1.0, -2.0]])
        assert lipschitz_bound(spec, H, "D", column_index=0).value == pytest.approx(19.0)

    def test_zero_matrix_is_floored(self, subspace_spec):
        bound = lipschitz_bound(subspace_spec(), np.zeros((2, 2)), "D")
        assert bound.floored
        assert bound.value == 1e-12

    def test_averaged_h_bound_needs_samples(self, subspace_spec):
        with pytest.raises(InvalidInputError):
            lipschitz_bound(subspace_spec(averaged=True), np.eye(2), "H")

    def test_bad_variable(self, subspace_spec):
        with pytest.raises(InvalidInputError):
            lipschitz_bound(subspace_spec(), np.eye(2), "Z")

    @pytest.mark.parametrize("seed", range(50))
    def test_majorizes_the_loss(self, seed, subspace_spec):
        rng = np.random.default_rng(seed)
        X, fact = _random_problem(rng)
        spec = subspace_spec(alpha=0.0, k=3)
        D, H = fact.D.data, fact.H.data
        l = lipschitz_bound(spec, H, "D").value
        grad = (D @ H - X.data) @ H.T
        before = 0.5 * np.sum((D @ H - X.data) ** 2)
        after = 0.5 * np.sum(((D - grad / l) @ H - X.data) ** 2)
        assert after <= before + 1e-10


class TestFamilies:
    def test_auto_family(self):
        assert auto_family(RegularizerSpec.squared_l2(), 0.5) == "gradient"
        assert auto_family(RegularizerSpec.squared_l1(), 0.5) == "sql1"
        assert auto_family(RegularizerSpec.squared_l1(), 0.0) == "gradient"
        assert auto_family(RegularizerSpec.squared_l1(unsquared_l1=True), 0.5) == "soft"
        assert auto_family(RegularizerSpec.elastic_net(1.0), 0.5) == "gradient"
        assert auto_family(RegularizerSpec.coupled_rows_l2(), 0.5) == "coupled"
        assert auto_family(RegularizerSpec.partitioned_max(1), 0.5) == "gradient"
        assert auto_family(RegularizerSpec.squared_l1(), 0.5, subgradient=True) == "gradient"

    def test_step_smooth_rejects_non_smooth(self, rng):
        X, fact = _random_problem(rng, k=2)
        spec = _spec(RegularizerSpec.squared_l1(), RegularizerSpec.squared_l2())
        with pytest.raises(UnsupportedKindError):
            step_smooth(fact, X, spec)
        step_smooth(fact, X, spec, SolverConfig(subgradient=True))


class TestSteps:
    def test_exact_fit_is_a_fixed_point(self, subspace_spec, rng):
        _, fact = _random_problem(rng, k=2)
        X = DenseMatrix(fact.Z)
        out = step_smooth(fact, X, subspace_spec(alpha=0.0))
        np.testing.assert_allclose(out.D.data, fact.D.data, atol=1e-12)
        np.testing.assert_allclose(out.H.data, fact.H.data, atol=1e-12)

    def test_scalar_step_moves_toward_target(self, subspace_spec):
        fact = Factorization(DenseMatrix([[1.0]]), DenseMatrix([[1.0]]))
        out = step_smooth(fact, [[2.0]], subspace_spec(alpha=0.0, k=1), SolverConfig(step_D=0.5))
        assert 1.0 < out.D.data[0, 0] <= 2.0

    @pytest.mark.parametrize("seed", range(50))
    def test_smooth_step_decreases(self, seed, subspace_spec):
        rng = np.random.default_rng(seed)
        X, fact = _random_problem(rng)
        spec = subspace_spec(alpha=0.1, k=3)
        out = step_smooth(fact, X, spec)
        assert objective_value(out, X, spec) <= objective_value(fact, X, spec) + 1e-10

    @pytest.mark.parametrize("seed", range(50))
    def test_soft_step_decreases(self, seed):
        rng = np.random.default_rng(seed)
        X, fact = _random_problem(rng)
        l1 = RegularizerSpec.squared_l1(unsquared_l1=True)
        spec = _spec(RegularizerSpec.squared_l2(), l1, alpha=0.2, k=3)
        out = step_prox_l1(fact, X, spec)
        assert objective_value(out, X, spec) <= objective_value(fact, X, spec) + 1e-10

    def test_soft_step_zeroes_under_huge_weight(self, rng):
        X, fact = _random_problem(rng)
        l1 = RegularizerSpec.squared_l1(unsquared_l1=True)
        spec = _spec(RegularizerSpec.squared_l2(), l1, alpha=1e6, k=3)
        out = step_prox_l1(fact, X, spec)
        assert np.all(out.H.data == 0.0)

    @pytest.mark.parametrize("seed", range(50))
    def test_elastic_step_decreases(self, seed):
        rng = np.random.default_rng(seed)
        X, fact = _random_problem(rng)
        spec = _spec(
            RegularizerSpec.elastic_net(0.3), RegularizerSpec.elastic_net(0.6), alpha=0.2, k=3
        )
        out = step_prox_elastic(fact, X, spec)
        assert objective_value(out, X, spec) <= objective_value(fact, X, spec) + 1e-10

    def test_elastic_with_nu_one_matches_smooth_step(self, rng):
        X, fact = _random_problem(rng)
        en = RegularizerSpec.elastic_net(1.0)
        l2 = RegularizerSpec.squared_l2()
        a = step_prox_elastic(fact, X, _spec(en, en, alpha=0.2, k=3))
        b = step_smooth(fact, X, _spec(l2, l2, alpha=0.2, k=3))
        np.testing.assert_allclose(a.D.data, b.D.data, atol=1e-12)
        np.testing.assert_allclose(a.H.data, b.H.data, atol=1e-12)


class TestAmDlm:
    def test_shrinkage_optimum(self, subspace_spec, shrinkage_data):
        spec = subspace_spec(alpha=0.5, k=2)
        fact, report = am_dlm_solve(shrinkage_data, spec, SolverConfig(seed=3, tol=1e-12))
        assert report.final_objective == pytest.approx(1.25, abs=1e-4)
        np.testing.assert_allclose(fact.Z, np.diag([1.5, 0.5]), atol=1e-2)

    def test_trace_is_monotone(self, rng):
        X = DenseMatrix(rng.standard_normal((5, 20)))
        en = RegularizerSpec.elastic_net(0.5)
        spec = _spec(en, en, alpha=0.05, k=3)
        _, report = am_dlm_solve(X, spec, SolverConfig(seed=0, max_iters=500))
        values = [v for _, v in report.objective_trace]
        assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))
        assert report.final_objective == values[-1]
        assert report.iterations == len(values) - 1

    def test_same_seed_same_report(self, subspace_spec, rng):
        X = DenseMatrix(rng.standard_normal((4, 8)))
        config = SolverConfig(seed=11, max_iters=200)
        _, a = am_dlm_solve(X, subspace_spec(alpha=0.05, k=3), config)
        _, b = am_dlm_solve(X, subspace_spec(alpha=0.05, k=3), config)
        assert a == b

    def test_zero_data(self, subspace_spec):
        spec = subspace_spec(alpha=0.5, k=2)
        _, report = am_dlm_solve(np.zeros((3, 4)), spec, SolverConfig(seed=1))
        assert report.final_objective < 1e-6

    @pytest.mark.parametrize("seed", range(20))
    def test_reaches_svd_optimum(self, seed, subspace_spec):
        rng = np.random.default_rng(seed)
        d, T = 4, 6
        X = DenseMatrix(rng.standard_normal((d, T)))
        spec = subspace_spec(alpha=0.3, k=min(d, T))
        _, report = am_dlm_solve(X, spec, SolverConfig(seed=seed, tol=1e-12, max_iters=50000))
        optimum = svd_shrinkage_optimum(X, spec).objective
        assert report.final_objective == pytest.approx(optimum, rel=1e-3)
        assert report.final_objective >= optimum - 1e-9

    def test_coupled_and_supervised_kinds_run(self, rng):
        X = DenseMatrix(rng.standard_normal((4, 10)))
        l2 = RegularizerSpec.squared_l2()
        for reg_d in (
            RegularizerSpec.coupled_rows_l2(),
            RegularizerSpec.coupled_rows_l1_sq(),
            RegularizerSpec.partitioned_max(2),
        ):
            spec = _spec(reg_d, l2, alpha=0.1, k=2)
            _, report = am_dlm_solve(X, spec, SolverConfig(max_iters=300))
            values = [v for _, v in report.objective_trace]
            assert all(b <= a + 1e-10 for a, b in zip(values, values[1:]))

    def test_init_dimension_checked(self, subspace_spec):
        init = Factorization(DenseMatrix.zeros(2, 3), DenseMatrix.zeros(3, 2))
        with pytest.raises(InvalidInputError):
            am_dlm_solve(np.eye(2), subspace_spec(k=2), init=init)

    def test_non_finite_objective_raises(self):
        X = DenseMatrix(np.ones((2, 2)))
        l2 = RegularizerSpec.squared_l2()
        init = Factorization(DenseMatrix(np.ones((2, 2)) * 1e200), DenseMatrix(np.ones((2, 2))))
        with pytest.raises(NumericalError):
            am_dlm_solve(X, _spec(l2, l2, alpha=1.0), SolverConfig(max_iters=5), init=init)

    def test_invalid_config(self, subspace_spec):
        with pytest.raises(InvalidInputError):
            am_dlm_solve(np.eye(2), subspace_spec(), SolverConfig(tol=0.0))
