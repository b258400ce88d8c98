import numpy as np
import pytest

from liftloss import (
    Activation,
    GradConfig,
    ModelKind,
    ModelSpec,
    TrainConfig,
    TrainingDivergedError,
    backprop,
    generate,
    load_params,
    n_params,
    predict,
    random_params,
    save_params,
    train,
)
from liftloss.dataset import DataGenConfig


LINEAR2 = ModelSpec(ModelKind.LINEAR, 2)


def small_mlp():
    return ModelSpec(ModelKind.MLP, 2, hidden=3, activation=Activation.TANH)


class TestSpecValidation:
    def test_mlp_needs_shape(self):
        with pytest.raises(ValueError):
            ModelSpec(ModelKind.MLP, 2)
        with pytest.raises(ValueError):
            ModelSpec(ModelKind.LINEAR, 2, hidden=4)

    def test_param_counts(self):
        assert n_params(LINEAR2) == 3
        assert n_params(small_mlp()) == 3 * 2 + 3 + 3 + 1


class TestPredict:
    def test_linear_hand_arithmetic(self):
        # coefficients (1, 0.1) with offset 1 on features (2, 10)
        preds = predict(LINEAR2, np.array([1.0, 0.1, 1.0]), np.array([[2.0, 10.0]]))
        assert preds[0] == pytest.approx(4.0)

    def test_zero_params(self):
        preds = predict(LINEAR2, np.zeros(3), np.random.default_rng(0).random((5, 2)))
        np.testing.assert_array_equal(preds, 0.0)

    def test_recovers_true_lift_on_synthetic_data(self):
        ds = generate(DataGenConfig(n_rows=200, seed=1))
        preds = predict(LINEAR2, np.array([0.0, 0.5, 0.0]), ds)
        np.testing.assert_allclose(preds, ds.true_lift)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            predict(LINEAR2, np.zeros(3), np.zeros((4, 3)))
        with pytest.raises(ValueError):
            predict(LINEAR2, np.zeros(5), np.zeros((4, 2)))

    def test_mlp_relu_kink(self):
        spec = ModelSpec(ModelKind.MLP, 1, hidden=1, activation=Activation.RELU)
        # W1=[1], b1=0, w2=[1], b2=0 gives relu(x)
        params = np.array([1.0, 0.0, 1.0, 0.0])
        preds = predict(spec, params, np.array([[-2.0], [3.0]]))
        np.testing.assert_allclose(preds, [0.0, 3.0])


class TestBackprop:
    def test_zero_upstream(self):
        grad = backprop(LINEAR2, np.ones(3), np.random.default_rng(1).random((7, 2)), np.zeros(7))
        np.testing.assert_array_equal(grad, 0.0)

    def test_linear_hand_arithmetic(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        a, b = 0.3, -0.7
        grad = backprop(LINEAR2, np.zeros(3), x, np.array([a, b]))
        np.testing.assert_allclose(grad, [a, b, a + b])

    @pytest.mark.parametrize("activation", [Activation.TANH, Activation.RELU])
    def test_mlp_matches_finite_differences(self, activation):
        spec = ModelSpec(ModelKind.MLP, 2, hidden=4, activation=activation)
        rng = np.random.default_rng(9)
        params = rng.normal(0, 0.7, n_params(spec))
        x = rng.random((30, 2))
        g = rng.normal(size=30)
        grad = backprop(spec, params, x, g)
        eps = 1e-6
        for j in range(params.size):
            hi = params.copy()
            hi[j] += eps
            lo = params.copy()
            lo[j] -= eps
            fd = (g @ predict(spec, hi, x) - g @ predict(spec, lo, x)) / (2 * eps)
            assert fd == pytest.approx(grad[j], rel=1e-4, abs=1e-8)

    def test_linear_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        params = rng.normal(size=3)
        x = rng.random((20, 2))
        g = rng.normal(size=20)
        grad = backprop(LINEAR2, params, x, g)
        eps = 1e-6
        for j in range(3):
            hi = params.copy()
            hi[j] += eps
            lo = params.copy()
            lo[j] -= eps
            fd = (g @ predict(LINEAR2, hi, x) - g @ predict(LINEAR2, lo, x)) / (2 * eps)
            assert fd == pytest.approx(grad[j], rel=1e-4)


class TestTrain:
    def demo_setup(self, seed=0, steps=100, **grad_kw):
        ds = generate(DataGenConfig(n_rows=10_000, treatment_fraction=0.7, seed=seed))
        config = TrainConfig(
            step_size=0.1,
            steps=steps,
            grad=GradConfig(n_bins=5, **grad_kw),
            snapshot_steps=(0, min(1, steps), steps),
        )
        init = np.array([1.0, 0.1, 1.0])  # slope, slope, offset
        return ds, config, init

    def test_zero_steps_returns_init(self):
        ds, _, init = self.demo_setup(steps=0)
        config = TrainConfig(step_size=0.1, steps=0, grad=GradConfig(n_bins=5))
        params, trace = train(ds, LINEAR2, init, config)
        np.testing.assert_array_equal(params, init)
        assert len(trace.entries) == 1 and trace.entries[0].step == 0

    def test_zero_step_size_keeps_params(self):
        ds, _, init = self.demo_setup()
        config = TrainConfig(step_size=0.0, steps=5, grad=GradConfig(n_bins=5))
        params, trace = train(ds, LINEAR2, init, config)
        np.testing.assert_array_equal(params, init)
        for e in trace.entries:
            np.testing.assert_array_equal(e.params, init)

    def test_converges_near_generating_coefficients(self):
        ds, config, init = self.demo_setup(seed=0)
        params, trace = train(ds, LINEAR2, init, config)
        slope_r1, slope_r3, offset = params
        assert abs(slope_r1) <= 0.12
        assert abs(offset) <= 0.10
        assert 0.40 <= slope_r3 <= 0.55
        assert trace.entries[-1].loss < trace.entries[1].loss < trace.entries[0].loss

    def test_loss_mostly_decreases(self):
        # the loss is discontinuous, so occasional upticks are expected, but
        # fewer than a fifth of the steps should move uphill
        ds, config, init = self.demo_setup(seed=0)
        _, trace = train(ds, LINEAR2, init, config)
        upticks = int((np.diff(trace.losses()) > 0).sum())
        assert upticks < 0.2 * config.steps

    def test_deterministic_with_batching(self):
        ds = generate(DataGenConfig(n_rows=3000, seed=3))
        config = TrainConfig(
            step_size=0.1, steps=10, grad=GradConfig(n_bins=4), batch=512, seed=11
        )
        init = np.array([1.0, 0.1, 1.0])
        p1, t1 = train(ds, LINEAR2, init, config)
        p2, t2 = train(ds, LINEAR2, init, config)
        np.testing.assert_array_equal(p1, p2)
        np.testing.assert_array_equal(t1.losses(), t2.losses())

    def test_rebin_cadence_runs(self):
        ds, _, init = self.demo_setup()
        config = TrainConfig(step_size=0.1, steps=20, grad=GradConfig(n_bins=5, rebin_every=5))
        params, trace = train(ds, LINEAR2, init, config)
        assert np.isfinite(params).all() and len(trace.entries) == 21

    def test_infeasible_bins_raise_at_start(self):
        ds = generate(DataGenConfig(n_rows=60, seed=5))
        config = TrainConfig(step_size=0.1, steps=3, grad=GradConfig(n_bins=30))
        with pytest.raises(ValueError, match="fewer bins"):
            train(ds, LINEAR2, np.array([1.0, 0.1, 1.0]), config)

    def test_divergence_aborts_with_trace(self):
        ds = generate(DataGenConfig(n_rows=500, seed=6))
        config = TrainConfig(step_size=1e12, steps=60, grad=GradConfig(n_bins=3))
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(TrainingDivergedError) as err:
                train(ds, LINEAR2, np.array([1.0, 0.1, 1.0]), config)
        assert len(err.value.trace.entries) >= 1

    def test_snapshot_steps_recorded(self):
        ds, config, init = self.demo_setup(steps=10)
        _, trace = train(ds, LINEAR2, init, config)
        assert set(trace.snapshots) == {0, 1, 10}
        assert trace.snapshots[0].n_bins == 5

    def test_snapshot_outside_range_rejected(self):
        with pytest.raises(ValueError, match="snapshot"):
            TrainConfig(step_size=0.1, steps=5, grad=GradConfig(n_bins=5), snapshot_steps=(9,))

    def test_mlp_trains_and_improves(self):
        ds = generate(DataGenConfig(n_rows=4000, seed=7))
        spec = small_mlp()
        init = random_params(spec, seed=7)
        config = TrainConfig(step_size=0.05, steps=40, grad=GradConfig(n_bins=5))
        params, trace = train(ds, spec, init, config)
        assert trace.entries[-1].loss < trace.entries[0].loss
        assert np.isfinite(params).all()


class TestParamsIo:
    def test_round_trip_linear(self, tmp_path):
        path = tmp_path / "params.json"
        values = np.array([0.5, -0.25, 0.125])
        save_params(path, LINEAR2, values)
        spec, back = load_params(path)
        assert spec == LINEAR2
        np.testing.assert_array_equal(back, values)

    def test_round_trip_mlp(self, tmp_path):
        path = tmp_path / "params.json"
        spec = small_mlp()
        values = random_params(spec, seed=3)
        save_params(path, spec, values)
        spec2, back = load_params(path)
        assert spec2 == spec
        np.testing.assert_array_equal(back, values)

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "params.json"
        path.write_text('{"kind": "linear", "d": 2, "values": [1.0]}')
        with pytest.raises(ValueError):
            load_params(path)
