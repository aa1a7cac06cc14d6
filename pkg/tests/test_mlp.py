import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybrid_adpcm import mlp
from hybrid_adpcm.config import TrainConfig
from hybrid_adpcm.errors import TrainingError
from hybrid_adpcm.lpc import analyze
from hybrid_adpcm.mlp import (
    build_train_set,
    forward,
    forward_batch,
    init_generator,
    initial_model,
    jacobian,
    jacobian_row,
    lm_train,
    multistart_train,
    multistart_train_report,
    prediction_gain,
)
from hybrid_adpcm.models import LpcModel, MlpModel, TrainSet
from hybrid_adpcm.synth import make_signal


def _random_model(gen: np.random.Generator, scale: float = 1.0) -> MlpModel:
    return MlpModel.from_vector(gen.normal(0.0, scale, MlpModel.PARAM_COUNT))


def _scalar_forward(model: MlpModel, x) -> float:
    out = model.b_out
    for j in range(2):
        pre = model.b_hidden[j] + sum(model.w_hidden[j, i] * x[i] for i in range(10))
        out += model.w_out[j] * math.tanh(pre)
    return out


def _linear_data(gen: np.random.Generator, n: int = 200) -> TrainSet:
    inputs = gen.uniform(-0.5, 0.5, (n, 10))
    return TrainSet(inputs, 0.5 * inputs[:, -1])


def test_zero_model_predicts_zero():
    assert forward(MlpModel.zero(), np.ones(10)) == 0.0


def test_single_hidden_unit_output():
    theta = np.zeros(25)
    theta[20] = 0.3  # b_hidden[0]
    theta[22] = 1.0  # w_out[0]
    assert forward(MlpModel.from_vector(theta), np.zeros(10)) == pytest.approx(math.tanh(0.3), abs=1e-15)


def test_parameter_layout():
    theta = np.arange(25, dtype=float)
    model = MlpModel.from_vector(theta)
    assert model.w_hidden[1, 0] == 10.0
    assert model.b_hidden.tolist() == [20.0, 21.0]
    assert model.w_out.tolist() == [22.0, 23.0]
    assert model.b_out == 24.0
    np.testing.assert_array_equal(model.to_vector(), theta)


def test_non_finite_parameters_rejected():
    theta = np.zeros(25)
    theta[3] = np.nan
    with pytest.raises(ValueError):
        MlpModel.from_vector(theta)


def test_forward_matches_scalar_reference(rng):
    for _ in range(50):
        model = _random_model(rng)
        x = rng.uniform(-1.0, 1.0, 10)
        assert forward(model, x) == pytest.approx(_scalar_forward(model, x), abs=1e-12)


def test_forward_batch_matches_forward(rng):
    model = _random_model(rng)
    inputs = rng.uniform(-1.0, 1.0, (30, 10))
    expected = [forward(model, row) for row in inputs]
    np.testing.assert_allclose(forward_batch(model, inputs), expected, atol=1e-14)


def test_forward_rejects_wrong_input_size():
    with pytest.raises(ValueError):
        forward(MlpModel.zero(), np.zeros(9))


def test_jacobian_closed_form_entries(rng):
    model = _random_model(rng)
    x = rng.uniform(-1.0, 1.0, 10)
    row = jacobian_row(model, x)
    hidden = np.tanh(model.w_hidden @ x + model.b_hidden)
    assert row[24] == 1.0
    np.testing.assert_allclose(row[22:24], hidden, atol=1e-15)
    slope = (1 - hidden ** 2) * model.w_out
    np.testing.assert_allclose(row[20:22], slope, atol=1e-15)
    np.testing.assert_allclose(row[10:20], slope[1] * x, atol=1e-15)


def test_jacobian_matches_central_differences(rng):
    h = 1e-6
    for _ in range(100):
        model = _random_model(rng)
        x = rng.uniform(-1.0, 1.0, 10)
        theta = model.to_vector()
        numeric = np.empty(25)
        for k in range(25):
            plus, minus = theta.copy(), theta.copy()
            plus[k] += h
            minus[k] -= h
            numeric[k] = (
                forward(MlpModel.from_vector(plus), x) - forward(MlpModel.from_vector(minus), x)
            ) / (2 * h)
        assert np.max(np.abs(jacobian_row(model, x) - numeric)) < 1e-6


def test_jacobian_batch_shape(rng):
    assert jacobian(_random_model(rng), rng.uniform(-1, 1, (7, 10))).shape == (7, 25)


def test_build_train_set_pairs():
    history = np.arange(1, 11) / 100.0
    frame = np.array([0.5, 0.25])
    data = build_train_set(history, frame)
    assert data.inputs.shape == (2, 10)
    np.testing.assert_array_equal(data.inputs[0], history)
    np.testing.assert_array_equal(data.inputs[1], np.concatenate([history[1:], [0.5]]))
    np.testing.assert_array_equal(data.targets, frame)


def test_lm_zero_residual_is_fixed_point(rng):
    model = _random_model(rng, 0.3)
    inputs = rng.uniform(-0.5, 0.5, (100, 10))
    data = TrainSet(inputs, forward_batch(model, inputs))
    trained, mse = lm_train(model, data, TrainConfig(epochs=4))
    assert mse == 0.0
    np.testing.assert_array_equal(trained.to_vector(), model.to_vector())


def test_lm_reduces_error_on_linear_target(rng):
    data = _linear_data(rng)
    start = initial_model(TrainConfig(), frame_index=0, start=0)
    initial_mse = float(np.mean((data.targets - forward_batch(start, data.inputs)) ** 2))
    _, mse = lm_train(start, data, TrainConfig(epochs=6))
    assert mse < 0.1 * initial_mse


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=2 ** 32), epochs=st.integers(min_value=1, max_value=8))
def test_lm_loss_never_increases(seed, epochs):
    gen = np.random.default_rng(seed)
    data = _linear_data(gen, 60)
    targets = np.tanh(3.0 * data.targets) + 0.01 * gen.standard_normal(60)
    data = TrainSet(data.inputs, targets)
    cfg = TrainConfig(epochs=epochs, seed=seed)
    model = initial_model(cfg, 0, 0)
    initial = float(np.mean((targets - forward_batch(model, data.inputs)) ** 2))
    trace = []
    _, mse = lm_train(model, data, cfg, trace=trace)
    assert len(trace) == epochs
    losses = [initial] + trace
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert mse == trace[-1]


def test_lm_with_permuted_jacobian_does_worse(rng, monkeypatch):
    data = _linear_data(rng)
    cfg = TrainConfig(epochs=6)
    start = initial_model(cfg, 0, 0)
    _, good = lm_train(start, data, cfg)

    original = mlp._jacobian
    monkeypatch.setattr(mlp, "_jacobian", lambda theta, inputs: original(theta, inputs)[:, ::-1])
    _, bad = lm_train(start, data, cfg)
    assert good < bad


def test_lm_rejects_non_finite_loss():
    data = TrainSet(np.zeros((3, 10)), np.array([np.inf, 0.0, 0.0]))
    with pytest.raises(TrainingError):
        lm_train(MlpModel.zero(), data, TrainConfig())


def test_init_generator_is_counter_based():
    a = init_generator(7, 3, 1).uniform(size=4)
    b = init_generator(7, 3, 1).uniform(size=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, init_generator(7, 4, 1).uniform(size=4))
    assert not np.array_equal(a, init_generator(7, 3, 2).uniform(size=4))
    assert not np.array_equal(a, init_generator(8, 3, 1).uniform(size=4))


def test_initial_model_range():
    cfg = TrainConfig(init_scale=0.2)
    theta = initial_model(cfg, 0, 0).to_vector()
    assert np.all(np.abs(theta) <= 0.2)


@pytest.fixture
def training_frame():
    x = make_signal("tanh_ar", 300, np.random.default_rng(21)).samples
    return x[:10], x[10:110]


def test_multistart_single_start_equals_plain_training(training_frame):
    history, frame = training_frame
    cfg = TrainConfig(epochs=3, n_starts=1, seed=5)
    expected, _ = lm_train(initial_model(cfg, 4, 0), build_train_set(history, frame), cfg)
    got = multistart_train(history, frame, cfg, frame_index=4)
    np.testing.assert_array_equal(got.to_vector(), expected.to_vector())


def test_multistart_keeps_best_gain(training_frame):
    history, frame = training_frame
    cfg = TrainConfig(epochs=3, n_starts=4, seed=1)
    best = multistart_train_report(history, frame, cfg, frame_index=2)
    data = build_train_set(history, frame)
    gains = [
        prediction_gain(lm_train(initial_model(cfg, 2, s), data, cfg)[0], frame, history)
        for s in range(4)
    ]
    assert best.gain_db == max(gains)
    assert best.start == gains.index(max(gains))


def test_multistart_is_deterministic_across_workers(training_frame):
    history, frame = training_frame
    serial = multistart_train(history, frame, TrainConfig(epochs=3, n_starts=4, seed=9), 1)
    again = multistart_train(history, frame, TrainConfig(epochs=3, n_starts=4, seed=9), 1)
    threaded = multistart_train(history, frame, TrainConfig(epochs=3, n_starts=4, seed=9, workers=3), 1)
    np.testing.assert_array_equal(serial.to_vector(), again.to_vector())
    np.testing.assert_array_equal(serial.to_vector(), threaded.to_vector())


@pytest.mark.parametrize("workers", [1, 3])
def test_multistart_collects_per_start_curves(training_frame, workers):
    history, frame = training_frame
    cfg = TrainConfig(epochs=3, n_starts=4, seed=1, workers=workers)
    traces = [[99.0]]
    best = multistart_train_report(history, frame, cfg, frame_index=2, traces=traces)
    assert [len(t) for t in traces] == [3, 3, 3, 3]
    assert traces[best.start][-1] == best.mse
    data = build_train_set(history, frame)
    for start, trace in enumerate(traces):
        expected: list = []
        lm_train(initial_model(cfg, 2, start), data, cfg, expected)
        assert trace == expected


def test_multistart_all_starts_fail(training_frame, monkeypatch):
    history, frame = training_frame

    def diverge(*args, **kwargs):
        raise TrainingError("diverged")

    monkeypatch.setattr(mlp, "lm_train", diverge)
    with pytest.raises(TrainingError):
        multistart_train(history, frame, TrainConfig(n_starts=2), 0)


def test_prediction_gain_zero_predictor(rng):
    frame = rng.uniform(-0.5, 0.5, 100)
    assert prediction_gain(LpcModel.zero(10), frame, np.zeros(10)) == pytest.approx(0.0, abs=1e-12)
    assert prediction_gain(MlpModel.zero(), frame, np.zeros(10)) == pytest.approx(0.0, abs=1e-12)


def test_prediction_gain_silent_frame():
    assert prediction_gain(LpcModel.zero(10), np.zeros(50), np.zeros(10)) == 0.0


def test_prediction_gain_perfect_predictor_is_capped():
    model = LpcModel(1, np.array([0.9]), np.zeros(1), 0.0)
    x = [0.5]
    for _ in range(100):
        x.append(0.9 * x[-1])
    assert prediction_gain(model, x[1:], x[:1]) == 80.0


def test_prediction_gain_matches_innovation_ratio():
    gen = np.random.default_rng(17)
    a1, a2 = 1.3, -0.6
    e = gen.standard_normal(50000)
    x = np.zeros(e.size)
    for n in range(2, e.size):
        x[n] = a1 * x[n - 1] + a2 * x[n - 2] + e[n]
    model = LpcModel(2, np.array([a1, a2]), np.zeros(2), 0.0)
    frame, history = x[1000:], x[998:1000]
    expected = 10 * np.log10(np.sum(frame ** 2) / np.sum(e[1000:] ** 2))
    assert prediction_gain(model, frame, history) == pytest.approx(expected, abs=1e-6)
    fitted = analyze(frame, 2)
    assert prediction_gain(fitted, frame, history) == pytest.approx(expected, abs=0.2)
