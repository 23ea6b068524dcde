import numpy as np
import pytest

from dlm_opt.core import (
    DenseMatrix,
    InvalidInputError,
    LossSpec,
    ProblemSpec,
    RegularizerSpec,
    UnsupportedKindError,
)
from dlm_opt.solvers import (
    OnlineConfig,
    SgdConfig,
    SgdState,
    accelerated_step,
    online_am_dlm,
    schedule_step_size,
    sgd_am_dlm,
)
from dlm_opt.solvers.incremental import OnlineSolver, stack_stream


def _spec(reg_d=None, reg_h=None, alpha=0.05, k=3, loss=None):
    l2 = RegularizerSpec.squared_l2()
    return ProblemSpec(
        loss or LossSpec(), reg_d or l2, reg_h or l2, alpha=alpha, k=k, averaged=True
    )


@pytest.fixture
def stream_data(rng):
    return DenseMatrix(rng.standard_normal((5, 30)))


class TestSchedules:
    def test_values(self):
        assert schedule_step_size("type1", 0.5, 4) == 0.5
        assert schedule_step_size("type2", 0.5, 4) == pytest.approx(0.25)
        assert schedule_step_size("type3", 0.5, 4) == pytest.approx(0.125)

    def test_first_step_is_eta0(self):
        for kind in ("type1", "type2", "type3"):
            assert schedule_step_size(kind, 0.05, 1) == 0.05

    @pytest.mark.parametrize("args", [("type4", 0.5, 1), ("type1", 0.0, 1), ("type2", 0.5, 0)])
    def test_invalid(self, args):
        with pytest.raises(InvalidInputError):
            schedule_step_size(*args)


class TestAcceleratedStep:
    def _state(self, eta=0.5, t=4):
        return SgdState(
            D=np.zeros((2, 2)),
            D_prev=np.zeros((2, 2)),
            grad_prev=np.ones((2, 2)),
            eta=eta,
            t=t,
        )

    def test_agreeing_gradients_keep_the_step(self):
        state = self._state()
        assert accelerated_step(state, np.ones((2, 2)), "type2", 0.5) == 0.5
        assert state.decrease_count == 0

    def test_disagreeing_gradients_fall_back_to_the_schedule(self):
        state = self._state()
        eta = accelerated_step(state, -np.ones((2, 2)), "type2", 0.5)
        assert eta == pytest.approx(0.25)
        assert state.decrease_count == 1

    def test_never_increases(self):
        state = self._state(eta=0.1)
        assert accelerated_step(state, -np.ones((2, 2)), "type2", 0.5) == 0.1

    def test_state_needs_positive_step(self):
        with pytest.raises(InvalidInputError):
            self._state(eta=0.0)


class TestSgd:
    def test_runs_and_records(self, stream_data):
        config = SgdConfig(schedule="type2", eta0=0.05, epochs=4, seed=2)
        D, report = sgd_am_dlm(stream_data, _spec(), config)
        T = stream_data.cols
        assert D.shape == (5, 3)
        assert report.iterations == 4 * T
        assert [step for step, _ in report.objective_trace] == [0, T, 2 * T, 3 * T, 4 * T]
        assert len(report.step_sizes) == 4 * T
        assert all(np.isfinite(v) for _, v in report.objective_trace)
        assert report.final_objective < report.objective_trace[0][1]

    def test_accelerated_steps_are_non_increasing(self, stream_data):
        config = SgdConfig(schedule="type2", eta0=0.05, accelerate=True, epochs=3, seed=2)
        _, report = sgd_am_dlm(stream_data, _spec(), config)
        steps = np.asarray(report.step_sizes)
        assert np.all(np.diff(steps) <= 0)
        assert steps[0] == 0.05

    def test_constant_schedule(self, stream_data):
        config = SgdConfig(schedule="type1", eta0=0.01, epochs=1, seed=0)
        _, report = sgd_am_dlm(stream_data, _spec(), config)
        assert set(report.step_sizes) == {0.01}

    def test_same_seed_same_report(self, stream_data):
        config = SgdConfig(eta0=0.05, momentum=0.01, epochs=2, seed=5)
        _, a = sgd_am_dlm(stream_data, _spec(), config)
        _, b = sgd_am_dlm(stream_data, _spec(), config)
        assert a == b

    def test_eval_every(self, stream_data):
        config = SgdConfig(eta0=0.05, epochs=1, eval_every=7, seed=0)
        _, report = sgd_am_dlm(stream_data, _spec(), config)
        assert [s for s, _ in report.objective_trace] == [0, 7, 14, 21, 28, 30]

    def test_accepts_iterable_of_samples(self, stream_data):
        columns = [stream_data.data[:, t] for t in range(stream_data.cols)]
        config = SgdConfig(eta0=0.05, epochs=1, seed=0)
        _, from_list = sgd_am_dlm(columns, _spec(), config)
        _, from_matrix = sgd_am_dlm(stream_data, _spec(), config)
        assert from_list == from_matrix

    def test_init_shape_checked(self, stream_data):
        with pytest.raises(InvalidInputError):
            sgd_am_dlm(stream_data, _spec(), SgdConfig(epochs=1), init=np.zeros((5, 2)))


class TestOnline:
    def test_decreases_objective(self, stream_data):
        _, report = online_am_dlm(stream_data, _spec(), OnlineConfig(epochs=3, seed=1))
        assert report.final_objective < report.objective_trace[0][1]
        assert len(report.inner_iterations) == 3 * stream_data.cols

    def test_statistics_weights(self, stream_data):
        _, report = online_am_dlm(stream_data, _spec(), OnlineConfig(epochs=5, seed=1))
        betas = report.step_sizes
        assert betas[0] == 1.0
        assert betas[9] == pytest.approx(0.1)
        assert betas[-1] == 0.01

    def test_sufficient_statistic_stays_psd(self, stream_data):
        solver = OnlineSolver(_spec(), OnlineConfig(epochs=2, seed=3))
        solver.solve(stream_data)
        A = solver.state.A
        np.testing.assert_allclose(A, A.T)
        assert np.linalg.eigvalsh(A).min() >= -1e-12

    @pytest.mark.parametrize(
        "reg_d",
        [
            RegularizerSpec.squared_l1(),
            RegularizerSpec.elastic_net(0.5),
            RegularizerSpec.pseudo_huber(0.5),
        ],
        ids=lambda r: r.kind,
    )
    def test_regularized_dictionaries(self, stream_data, reg_d):
        _, report = online_am_dlm(stream_data, _spec(reg_d=reg_d), OnlineConfig(epochs=2, seed=1))
        assert np.isfinite(report.final_objective)

    def test_needs_half_squared_loss(self, stream_data):
        spec = _spec(loss=LossSpec("robust_half_squared", alpha_s=1.0))
        with pytest.raises(UnsupportedKindError):
            online_am_dlm(stream_data, spec, OnlineConfig(epochs=1))


class TestUnsupported:
    def test_coupled_h_regularizer(self, stream_data):
        spec = _spec(reg_h=RegularizerSpec.squared_l1())
        with pytest.raises(UnsupportedKindError):
            sgd_am_dlm(stream_data, spec, SgdConfig(epochs=1))

    def test_masked_loss(self, stream_data):
        spec = _spec(loss=LossSpec("masked_half_squared"))
        with pytest.raises(UnsupportedKindError):
            online_am_dlm(stream_data, spec, OnlineConfig(epochs=1))


def test_stack_stream_validates():
    with pytest.raises(InvalidInputError):
        stack_stream([])
    with pytest.raises(InvalidInputError):
        stack_stream([np.zeros(2), np.zeros(3)])
    np.testing.assert_array_equal(stack_stream([[1.0, 2.0], [3.0, 4.0]]), [[1.0, 3.0], [2.0, 4.0]])
