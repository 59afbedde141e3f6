"""
net_core测试: 前向传播、交叉熵、反向传播、SGD与持久化
"""
import math

import numpy as np
import pytest
from hypothesis import given
import hypothesis.strategies as st

from conftest import random_frames
from bayes_adapt.net_core import (
    LabeledFrameSet,
    LayerMask,
    LayerParams,
    Network,
    TrainConfig,
    backward,
    create_network,
    cross_entropy,
    forward,
    frame_error_rate,
    load_network,
    per_class_error,
    predict_posteriors,
    save_network,
    sgd_train,
)
from bayes_adapt.utils.errors import ConfigError, DimensionMismatchError, DivergenceError


def softmax_only(weights, bias=None):
    weights = np.asarray(weights, dtype=np.float64)
    if bias is None:
        bias = np.zeros(weights.shape[0])
    return Network([LayerParams(weights, bias, 'softmax', 'output')], input_dim=weights.shape[1])


def separable_toy_set() -> LabeledFrameSet:
    rng = np.random.default_rng(2)
    negatives = rng.uniform(-3.0, -1.0, size=(50, 2))
    positives = rng.uniform(1.0, 3.0, size=(50, 2))
    return LabeledFrameSet(np.vstack([negatives, positives]), np.repeat([0, 1], 50), 2)


# ---------------- forward ----------------

def test_zero_weights_give_uniform_posterior():
    net = softmax_only(np.zeros((4, 3)))
    posterior = forward(net, np.array([0.3, -1.0, 2.0])).posteriors
    assert posterior == pytest.approx([0.25] * 4)


def test_identity_logits_posterior():
    """logits (1, 0) → (e/(e+1), 1/(e+1))"""
    net = softmax_only(np.eye(2))
    posterior = predict_posteriors(net, np.array([1.0, 0.0]))
    e = math.e
    assert posterior == pytest.approx([e / (e + 1), 1 / (e + 1)], abs=1e-12)
    assert posterior == pytest.approx([0.7311, 0.2689], abs=1e-4)


def test_sigmoid_of_zero_input_is_half():
    net = create_network([3, 5, 2], seed=1)
    cache = forward(net, np.zeros(3))
    assert np.all(cache.activations[1] == 0.5)


def test_forward_caches_every_layer(small_net):
    cache = forward(small_net, np.ones((7, 4)))
    assert len(cache.activations) == small_net.depth + 1
    assert len(cache.pre_activations) == small_net.depth
    assert cache.posteriors.shape == (7, 3)


def test_forward_rejects_wrong_dimension(small_net):
    with pytest.raises(DimensionMismatchError):
        forward(small_net, np.ones(5))
    with pytest.raises(ValueError):
        predict_posteriors(small_net, np.ones((2, 3)))


def test_network_validation():
    hidden = LayerParams(np.zeros((3, 2)), np.zeros(3), 'sigmoid')
    with pytest.raises(DimensionMismatchError):
        Network([hidden], input_dim=2)
    with pytest.raises(DimensionMismatchError):
        Network([LayerParams(np.zeros((2, 2)), np.zeros(2), 'softmax'), softmax_only(np.zeros((2, 2))).layers[0]],
                input_dim=2)
    with pytest.raises(DimensionMismatchError):
        Network([hidden, LayerParams(np.zeros((2, 4)), np.zeros(2), 'softmax')], input_dim=2)


@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 5.0))
def test_posteriors_are_normalized(seed, scale):
    net = create_network([5, 7, 4], seed=seed)
    frames = scale * np.random.default_rng(seed).uniform(-1.0, 1.0, size=(6, 5))
    posteriors = predict_posteriors(net, frames)
    assert np.all(np.abs(posteriors.sum(axis=1) - 1.0) < 1e-9)
    assert np.all((posteriors > 0) & (posteriors < 1))


# ---------------- cross_entropy ----------------

def test_cross_entropy_examples():
    assert cross_entropy(np.array([[1.0, 0.0, 0.0]]), np.array([0])) == 0.0
    assert cross_entropy(np.array([[0.5, 0.5]]), np.array([1])) == pytest.approx(math.log(2))
    uniform = np.full((2, 4), 0.25)
    assert cross_entropy(uniform, np.array([3, 1])) == pytest.approx(2 * math.log(4))


def test_cross_entropy_floors_zero_posterior(caplog):
    loss, floored = cross_entropy(np.array([[1.0, 0.0]]), np.array([1]), return_floored=True)
    assert floored == 1
    assert loss == pytest.approx(-math.log(1e-30))
    assert "截断" in caplog.text


def test_cross_entropy_soft_targets_match_hard():
    posteriors = np.array([[0.2, 0.8], [0.6, 0.4]])
    hard = cross_entropy(posteriors, np.array([1, 0]))
    soft = cross_entropy(posteriors, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert soft == pytest.approx(hard)


def test_cross_entropy_rejects_unnormalized_rows():
    with pytest.raises(ValueError):
        cross_entropy(np.array([[0.5, 0.6]]), np.array([0]))


# ---------------- backward ----------------

def test_output_delta_is_posterior_minus_target():
    net = softmax_only(np.array([[0.3, -0.2], [0.1, 0.4], [-0.5, 0.2]]))
    frame = np.array([[1.5, -0.5]])
    posterior = predict_posteriors(net, frame)[0]
    grads = backward(net, frame, np.array([2]), LayerMask.of(0))
    expected = posterior - np.array([0.0, 0.0, 1.0])
    assert grads[0][1] == pytest.approx(expected, abs=1e-15)
    assert grads[0][0] == pytest.approx(np.outer(expected, frame[0]), abs=1e-15)


def test_balanced_batch_on_zero_net_has_zero_bias_gradient():
    layers = [
        LayerParams(np.zeros((4, 3)), np.zeros(4), 'sigmoid'),
        LayerParams(np.zeros((4, 4)), np.zeros(4), 'softmax', 'output'),
    ]
    net = Network(layers, input_dim=3)
    frames = np.random.default_rng(0).standard_normal((8, 3))
    grads = backward(net, frames, np.array([0, 1, 2, 3, 3, 2, 1, 0]), LayerMask.all_layers(net))
    assert np.allclose(grads[1][1], 0.0, atol=1e-12)


def test_backward_returns_only_masked_layers(small_net, small_data):
    grads = backward(small_net, small_data.frames, small_data.targets, LayerMask.of(2))
    assert set(grads) == {2}


def test_empty_mask_is_config_error(small_net, small_data):
    with pytest.raises(ConfigError):
        backward(small_net, small_data.frames, small_data.targets, LayerMask(frozenset()))
    with pytest.raises(ConfigError):
        LayerMask.of(9).validate(small_net)


# ---------------- sgd_train ----------------

def test_zero_epochs_returns_identical_copy(small_net, small_data):
    result = sgd_train(small_net, small_data, TrainConfig(epochs=0))
    assert result.network.same_parameters(small_net)
    assert result.network is not small_net
    assert result.loss_trace == []


def test_separable_toy_set_is_learned():
    data = separable_toy_set()
    net = create_network([2, 2], seed=0)
    result = sgd_train(net, data, TrainConfig(learning_rate=0.1, batch_size=10, epochs=50, rng_seed=1))
    assert len(result.loss_trace) == 50
    assert result.loss_trace[-1] < result.initial_loss
    assert frame_error_rate(result.network, data) == 0.0


def test_training_is_deterministic(small_net, small_data, fast_cfg):
    first = sgd_train(small_net, small_data, fast_cfg)
    second = sgd_train(small_net, small_data, fast_cfg)
    assert first.network.same_parameters(second.network)
    assert first.loss_trace == second.loss_trace


def test_training_does_not_mutate_input(small_net, small_data, fast_cfg):
    before = small_net.copy()
    sgd_train(small_net, small_data, fast_cfg)
    assert small_net.same_parameters(before)


def test_masked_layers_stay_frozen(small_net, small_data, fast_cfg):
    trained = sgd_train(small_net, small_data, fast_cfg, LayerMask.of(2)).network
    for i in (0, 1):
        assert np.array_equal(trained.layers[i].weights, small_net.layers[i].weights)
        assert np.array_equal(trained.layers[i].bias, small_net.layers[i].bias)
    assert not np.array_equal(trained.layers[2].weights, small_net.layers[2].weights)


def test_short_last_batch_and_oversized_batch(small_net):
    data = random_frames(3, 10, 4, 3)
    result = sgd_train(small_net, data, TrainConfig(batch_size=64, epochs=2, rng_seed=0))
    assert len(result.loss_trace) == 2


def test_parallel_batches_match_serial(small_net, small_data):
    cfg = TrainConfig(learning_rate=0.05, batch_size=20, epochs=1, rng_seed=3)
    serial = sgd_train(small_net, small_data, cfg).network
    parallel = sgd_train(small_net, small_data, cfg.replace(workers=3)).network
    for a, b in zip(serial.layers, parallel.layers):
        assert np.allclose(a.weights, b.weights, atol=1e-10)
        assert np.allclose(a.bias, b.bias, atol=1e-10)


def test_momentum_changes_trajectory(small_net, small_data, fast_cfg):
    plain = sgd_train(small_net, small_data, fast_cfg).network
    heavy = sgd_train(small_net, small_data, fast_cfg.replace(momentum=0.9)).network
    assert not plain.same_parameters(heavy)


def test_divergence_names_epoch_and_batch():
    data = LabeledFrameSet(np.ones((40, 3)), np.zeros(40, dtype=int), 3)
    net = create_network([3, 4, 3], seed=0)
    with pytest.raises(DivergenceError) as info:
        sgd_train(net, data, TrainConfig(learning_rate=1e308, batch_size=40, epochs=2, shuffle=False))
    assert info.value.epoch == 0
    assert info.value.batch == 0


@pytest.mark.parametrize("changes", [
    {'learning_rate': 0.0},
    {'batch_size': 0},
    {'epochs': -1},
    {'momentum': 1.0},
    {'weight_decay': -0.1},
    {'penalty_update': 'sometimes'},
    {'workers': 0},
])
def test_train_config_validation(changes):
    with pytest.raises(ConfigError):
        TrainConfig(**changes)


def test_train_config_from_config_ignores_unknown_keys():
    cfg = TrainConfig.from_config({'learning_rate': 0.3, 'epochs': 4, 'unknown': 1}, rng_seed=9, batch_size=None)
    assert cfg.learning_rate == 0.3
    assert cfg.epochs == 4
    assert cfg.rng_seed == 9
    assert cfg.batch_size == TrainConfig().batch_size


def test_mismatched_class_count_rejected(small_net):
    with pytest.raises(DimensionMismatchError):
        sgd_train(small_net, random_frames(0, 5, 4, 5), TrainConfig(epochs=1))


# ---------------- metrics ----------------

def test_frame_error_rate_counts():
    net = softmax_only(np.eye(2))
    frames = np.array([[1.0, 0.0]] * 5 + [[0.0, 1.0]] * 5)
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1, 1, 0])
    assert frame_error_rate(net, LabeledFrameSet(frames, np.argmax(frames, axis=1), 2)) == 0.0
    assert frame_error_rate(net, LabeledFrameSet(frames, labels, 2)) == pytest.approx(0.2)
    labels[5] = 0
    assert frame_error_rate(net, LabeledFrameSet(frames, labels, 2)) == pytest.approx(0.3)


def test_uniform_posterior_ties_break_to_lowest_index():
    net = softmax_only(np.zeros((3, 2)))
    data = LabeledFrameSet(np.random.default_rng(0).standard_normal((6, 2)), np.zeros(6, dtype=int), 3)
    assert frame_error_rate(net, data) == 0.0


def test_per_class_error_marks_missing_classes():
    net = softmax_only(np.eye(3))
    data = LabeledFrameSet(np.array([[1.0, 0, 0], [0, 1.0, 0]]), np.array([0, 0]), 3)
    errors = per_class_error(net, data)
    assert errors[0] == pytest.approx(0.5)
    assert np.isnan(errors[1]) and np.isnan(errors[2])


# ---------------- data / persistence ----------------

def test_labeled_frame_set_validation():
    with pytest.raises(ValueError):
        LabeledFrameSet(np.zeros((2, 2)), np.array([0, 3]), 3)
    with pytest.raises(ValueError):
        LabeledFrameSet(np.array([[np.nan, 0.0]]), np.array([0]), 2)
    with pytest.raises(ValueError):
        LabeledFrameSet(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)


def test_network_round_trip_is_bit_exact(tmp_path, small_net, small_data, fast_cfg):
    trained = sgd_train(small_net, small_data, fast_cfg).network
    path = tmp_path / "net.json"
    save_network(trained, path)
    loaded = load_network(path)
    assert loaded.same_parameters(trained)
    assert [l.role for l in loaded.layers] == [l.role for l in trained.layers]
