import numpy as np
import pytest

from dlm_opt.core import (
    DenseMatrix,
    Factorization,
    InvalidInputError,
    LossSpec,
    ObservedMatrix,
    ProblemSpec,
    RegularizerSpec,
    TrialReport,
    UnsupportedKindError,
    compare_solutions,
    relative_objective_difference,
    thresholded_solution_difference,
)


class TestDenseMatrix:
    def test_rejects_non_finite_entries(self):
        with pytest.raises(InvalidInputError):
            DenseMatrix(np.array([[1.0, np.nan]]))
        with pytest.raises(InvalidInputError):
            DenseMatrix(np.array([[np.inf]]))

    def test_rejects_empty_and_one_dimensional(self):
        with pytest.raises(InvalidInputError):
            DenseMatrix(np.zeros((0, 3)))
        with pytest.raises(InvalidInputError):
            DenseMatrix(np.array([1.0, 2.0]))

    def test_is_read_only_copy(self):
        source = np.array([[1.0, 2.0]])
        M = DenseMatrix(source)
        source[0, 0] = 99.0
        assert M.data[0, 0] == 1.0
        with pytest.raises(ValueError):
            M.data[0, 0] = 5.0

    def test_shape_helpers(self):
        M = DenseMatrix.from_rows([[1, 2, 3], [4, 5, 6]])
        assert M.shape == (2, 3)
        assert (M.rows, M.cols) == (2, 3)
        assert M.to_list() == [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]


class TestObservedMatrix:
    def test_mask_shape_must_match(self):
        with pytest.raises(InvalidInputError):
            ObservedMatrix(DenseMatrix.zeros(2, 2), np.ones((2, 3), dtype=bool))

    def test_needs_an_observed_entry(self):
        with pytest.raises(InvalidInputError):
            ObservedMatrix(DenseMatrix.zeros(2, 2), np.zeros((2, 2), dtype=bool))

    def test_counts_observed(self):
        X = ObservedMatrix(DenseMatrix.zeros(2, 2), np.array([[True, False], [True, True]]))
        assert X.n_observed == 3


def test_factorization_inner_dimensions_must_agree():
    with pytest.raises(InvalidInputError):
        Factorization(DenseMatrix.zeros(3, 2), DenseMatrix.zeros(3, 4))

    fact = Factorization(np.ones((3, 2)), np.ones((2, 4)))
    assert fact.k == 2
    np.testing.assert_allclose(fact.Z, 2.0 * np.ones((3, 4)))


class TestRegularizerSpec:
    def test_unknown_kind(self):
        with pytest.raises(UnsupportedKindError):
            RegularizerSpec("l3")

    def test_nu_range(self):
        with pytest.raises(InvalidInputError):
            RegularizerSpec.elastic_net(1.5)

    def test_pseudo_huber_needs_positive_mu(self):
        with pytest.raises(InvalidInputError):
            RegularizerSpec.pseudo_huber(0.0)

    def test_partitioned_max_needs_split(self):
        with pytest.raises(InvalidInputError):
            RegularizerSpec("partitioned_max")

    def test_weighted_l2_needs_invertible_lambda(self):
        with pytest.raises(InvalidInputError):
            RegularizerSpec.weighted_squared_l2([[1.0, 2.0], [2.0, 4.0]])
        spec = RegularizerSpec.weighted_squared_l2([1.0, 2.0])
        np.testing.assert_allclose(spec.lambda_matrix(2), np.diag([1.0, 2.0]))

    def test_unsquared_flag_only_on_l1_kinds(self):
        with pytest.raises(InvalidInputError):
            RegularizerSpec("squared_l2", unsquared_l1=True)

    def test_classification(self):
        assert RegularizerSpec.squared_l2().is_smooth
        assert RegularizerSpec.elastic_net(1.0).is_smooth
        assert not RegularizerSpec.squared_l1().is_smooth
        assert RegularizerSpec.squared_l1().is_induced
        assert not RegularizerSpec.squared_l1(unsquared_l1=True).is_induced
        assert not RegularizerSpec.coupled_rows_l2().is_induced
        assert not RegularizerSpec.non_norm_elastic_net(0.5).is_norm

    def test_dict_round_trip_keeps_parameters(self):
        spec = RegularizerSpec.smoothed_elastic_net(0.3, 0.1)
        again = RegularizerSpec.from_dict(spec.to_dict())
        assert (again.kind, again.nu, again.mu) == ("smoothed_elastic_net_sq", 0.3, 0.1)


class TestProblemSpec:
    def test_weights(self):
        l2 = RegularizerSpec.squared_l2()
        spec = ProblemSpec(LossSpec(), l2, l2, alpha=0.4, k=2, s=2.0, averaged=True)
        assert spec.weight_d() == pytest.approx(0.2)
        assert spec.weight_h(10) == pytest.approx(0.4 / (2 * 4 * 10))
        assert spec.sample_weight_h() == pytest.approx(0.4 / 8)

    def test_unaveraged_h_weight_ignores_samples(self):
        l2 = RegularizerSpec.squared_l2()
        spec = ProblemSpec(LossSpec(), l2, l2, alpha=0.4, k=2)
        assert spec.weight_h(10) == spec.weight_h(1)

    @pytest.mark.parametrize("changes", [{"alpha": -1.0}, {"s": 0.0}, {"k": 0}, {"k": 1.5}])
    def test_invalid(self, changes):
        l2 = RegularizerSpec.squared_l2()
        fields = dict(loss=LossSpec(), reg_d=l2, reg_h=l2, alpha=0.1, k=2)
        fields.update(changes)
        with pytest.raises(InvalidInputError):
            ProblemSpec(**fields)

    def test_robust_loss_needs_alpha_s(self):
        with pytest.raises(InvalidInputError):
            LossSpec("robust_half_squared")
        with pytest.raises(UnsupportedKindError):
            LossSpec("hinge")


def test_trial_report_equality_ignores_wall_clock():
    a = TrialReport(1.0, [(0, 2.0), (1, 1.0)], 1, True, 7, wall_clock=0.5)
    b = TrialReport(1.0, [(0, 2.0), (1, 1.0)], 1, True, 7, wall_clock=9.0)
    assert a == b
    with pytest.raises(InvalidInputError):
        TrialReport(1.0, [], 3, False, 0)


class TestRelativeObjectiveDifference:
    def test_identical(self):
        assert relative_objective_difference([1.0, 1.0, 1.0]) == 0.0

    def test_two_values(self):
        assert relative_objective_difference([1.0, 1.1]) == pytest.approx(0.1 / 1.05)

    def test_single_value(self):
        assert relative_objective_difference([2.0]) == 0.0

    def test_scale_invariant(self):
        objs = [0.7, 0.9, 1.3]
        assert relative_objective_difference([10 * o for o in objs]) == pytest.approx(
            relative_objective_difference(objs)
        )

    def test_rejects_nan_and_empty(self):
        with pytest.raises(InvalidInputError):
            relative_objective_difference([1.0, float("nan")])
        with pytest.raises(InvalidInputError):
            relative_objective_difference([])


class TestThresholdedSolutionDifference:
    def test_identical(self):
        Z = np.arange(6.0).reshape(2, 3)
        assert thresholded_solution_difference(Z, Z, 0.05) == 0.0

    def test_counts_entries(self):
        assert thresholded_solution_difference([[1.0, 1.0]], [[1.1, 1.0]], 0.05) == 0.5

    def test_threshold_is_absolute(self):
        # 0.06 on an entry of size 100 still counts; 0.04 near zero does not
        assert thresholded_solution_difference([[100.0, 0.0]], [[100.06, 0.04]], 0.05) == 0.5

    def test_zero_threshold(self):
        Z = np.ones((2, 2))
        assert thresholded_solution_difference(Z, Z + 1e-9, 0.0) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            thresholded_solution_difference(np.ones((2, 2)), np.ones((2, 3)))


class TestCompareSolutions:
    def test_min_max_over_pairs(self):
        Z = np.zeros((1, 2))
        result = compare_solutions(
            [1.0, 1.0, 1.2], [Z, Z, Z + np.array([[1.0, 0.0]])], threshold=0.05
        )
        assert result["relative_objective_difference_min"] == 0.0
        assert result["relative_objective_difference_max"] == pytest.approx(0.2 / (3.2 / 3))
        assert result["thresholded_solution_difference_min"] == 0.0
        assert result["thresholded_solution_difference_max"] == 0.5

    def test_objective_metric_alone(self):
        result = compare_solutions([1.0, 2.0], metrics=["relative_objective_difference"])
        assert set(result) == {
            "relative_objective_difference_min",
            "relative_objective_difference_max",
        }

    def test_solution_metric_needs_solutions(self):
        with pytest.raises(ValueError):
            compare_solutions([1.0, 2.0])

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            compare_solutions([1.0, 2.0], metrics=["bleu"])
