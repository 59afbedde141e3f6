"""
adapt_layers测试: 单位阵插入、mask、冻结、自适应与合并
"""
import numpy as np
import pytest

from bayes_adapt.adapt_layers import (
    AdapterKind,
    LinearAdapter,
    AdapterPlacement,
    adapt,
    adapter_parameter_count,
    apply_adapter,
    collapse_lhn,
    collapse_lin,
    extract_adapter,
    insert_adapter,
    make_output_mask,
    run_adaptation,
)
from bayes_adapt.net_core import TrainConfig, create_network, cross_entropy, predict_posteriors, sgd_train
from bayes_adapt.net_core.network import ROLE_LHN, ROLE_LIN
from bayes_adapt.speaker_sim import AdaptationBudget, CorpusSpec, gen_base_corpus, gen_speaker, make_speaker_shift
from bayes_adapt.utils.errors import ConfigError, DimensionMismatchError


def randomize_adapter(net, kind, seed=0, scale=0.3):
    net = net.copy()
    index = net.layer_index(ROLE_LIN if kind is AdapterKind.LIN else ROLE_LHN)
    rng = np.random.default_rng(seed)
    layer = net.layers[index]
    layer.weights = layer.weights + scale * rng.standard_normal(layer.weights.shape)
    layer.bias = scale * rng.standard_normal(layer.bias.shape)
    return net, index


@pytest.mark.parametrize("kind", [AdapterKind.LIN, AdapterKind.LHN])
def test_identity_insertion_keeps_posteriors(small_net, kind):
    augmented, adapter, mask = insert_adapter(small_net, kind)
    probes = np.random.default_rng(1).uniform(-4.0, 4.0, size=(1000, 4))
    diff = np.abs(predict_posteriors(augmented, probes) - predict_posteriors(small_net, probes))
    assert diff.max() <= 1e-9
    assert np.array_equal(adapter.transform, np.eye(adapter.dim))
    assert np.all(adapter.bias == 0.0)
    assert augmented.depth == small_net.depth + 1
    assert len(mask.layers) == 1


def test_lhn_dimension_follows_last_hidden_layer():
    net = create_network([4, 216, 5], seed=0)
    augmented, adapter, mask = insert_adapter(net, AdapterKind.LHN)
    assert adapter.transform.shape == (216, 216)
    assert adapter.bias.shape == (216,)
    assert mask.cardinality(augmented) == 216 * 216 + 216


def test_lin_mask_cardinality():
    net = create_network([4, 6, 3], seed=0)
    augmented, _, mask = insert_adapter(net, AdapterKind.LIN)
    assert mask.cardinality(augmented) == 20
    assert augmented.layers[0].role == ROLE_LIN


def test_lon_is_not_inserted(small_net):
    with pytest.raises(ConfigError):
        insert_adapter(small_net, AdapterKind.LON_DIRECT)


def test_second_insertion_rejected(small_net):
    augmented, _, _ = insert_adapter(small_net, AdapterKind.LHN)
    with pytest.raises(ConfigError):
        insert_adapter(augmented, AdapterKind.LHN)


def test_output_mask_cardinality():
    assert make_output_mask(create_network([2, 5, 3])).cardinality(create_network([2, 5, 3])) == 18
    wide = create_network([3, 216, 2022], seed=0)
    assert make_output_mask(wide).cardinality(wide) == 216 * 2022 + 2022


def test_parameter_count_accounting(small_net):
    assert adapter_parameter_count(small_net, AdapterKind.LIN) == 4 * 4 + 4
    assert adapter_parameter_count(small_net, AdapterKind.LHN) == 5 * 5 + 5
    assert adapter_parameter_count(small_net, AdapterKind.LON_DIRECT) == 5 * 3 + 3


@pytest.mark.parametrize("kind", [AdapterKind.LIN, AdapterKind.LHN, AdapterKind.LON_DIRECT])
def test_only_adapter_parameters_change(small_net, small_data, fast_cfg, kind):
    adapted = adapt(small_net, small_data, fast_cfg, kind)
    if kind is AdapterKind.LIN:
        pairs = [(i, i + 1) for i in range(small_net.depth)]
    elif kind is AdapterKind.LHN:
        last = small_net.output_index
        pairs = [(i, i) for i in range(last)] + [(last, last + 1)]
    else:
        pairs = [(i, i) for i in range(small_net.output_index)]
    for original, moved in pairs:
        assert np.array_equal(adapted.layers[moved].weights, small_net.layers[original].weights)
        assert np.array_equal(adapted.layers[moved].bias, small_net.layers[original].bias)
    if kind is AdapterKind.LON_DIRECT:
        assert not np.array_equal(adapted.layers[-1].weights, small_net.layers[-1].weights)


def test_zero_epochs_leave_function_unchanged(small_net, small_data):
    adapted = adapt(small_net, small_data, TrainConfig(epochs=0), AdapterKind.LHN)
    assert collapse_lhn(adapted).same_parameters(small_net)


def test_lhn_adaptation_lowers_adaptation_cross_entropy():
    spec = CorpusSpec(feature_dim=6, class_count=6, group_count=2, frames_per_class=40, rng_seed=4)
    train, _ = gen_base_corpus(spec)
    base = sgd_train(create_network([6, 12, 5, 6], seed=0), train,
                     TrainConfig(learning_rate=0.02, batch_size=16, epochs=15, rng_seed=0)).network
    shift = make_speaker_shift(6, 0.3, 1.0, 0.2, seed=21)
    speaker = gen_speaker(spec, shift, AdaptationBudget(4, range(6)))
    data = speaker.adaptation
    result = run_adaptation(base, data, TrainConfig(learning_rate=0.005, batch_size=16, epochs=10, rng_seed=2),
                            AdapterKind.LHN)
    before = cross_entropy(predict_posteriors(base, data.frames), data.targets)
    after = cross_entropy(predict_posteriors(result.network, data.frames), data.targets)
    assert result.initial_loss == pytest.approx(before)
    assert after < before


def test_collapse_lhn_matches_product_oracle(small_net):
    augmented, _, _ = insert_adapter(small_net, AdapterKind.LHN)
    augmented, index = randomize_adapter(augmented, AdapterKind.LHN, seed=3)
    A, c = augmented.layers[index].weights, augmented.layers[index].bias
    W, b = small_net.layers[-1].weights, small_net.layers[-1].bias

    collapsed = collapse_lhn(augmented)
    assert collapsed.depth == small_net.depth
    assert np.max(np.abs(collapsed.layers[-1].weights - W @ A)) <= 1e-12
    assert np.max(np.abs(collapsed.layers[-1].bias - (W @ c + b))) <= 1e-12

    probes = np.random.default_rng(4).standard_normal((100, 4))
    diff = np.abs(predict_posteriors(collapsed, probes) - predict_posteriors(augmented, probes))
    assert diff.max() <= 1e-9


def test_collapse_identity_lhn_is_original(small_net):
    augmented, _, _ = insert_adapter(small_net, AdapterKind.LHN)
    collapsed = collapse_lhn(augmented)
    for a, b in zip(collapsed.layers, small_net.layers):
        assert np.max(np.abs(a.weights - b.weights)) <= 1e-12
        assert np.max(np.abs(a.bias - b.bias)) <= 1e-12


def test_collapse_lin_preserves_function(small_net):
    augmented, _, _ = insert_adapter(small_net, AdapterKind.LIN)
    augmented, _ = randomize_adapter(augmented, AdapterKind.LIN, seed=5)
    collapsed = collapse_lin(augmented)
    probes = np.random.default_rng(6).standard_normal((100, 4))
    diff = np.abs(predict_posteriors(collapsed, probes) - predict_posteriors(augmented, probes))
    assert diff.max() <= 1e-9


def test_collapse_without_adapter_rejected(small_net):
    with pytest.raises(ConfigError):
        collapse_lhn(small_net)
    with pytest.raises(ConfigError):
        collapse_lin(small_net)


def test_adapter_extract_and_reapply(small_net, small_data, fast_cfg):
    adapted = adapt(small_net, small_data, fast_cfg, AdapterKind.LHN)
    adapter = extract_adapter(adapted, AdapterKind.LHN)
    restored = apply_adapter(small_net, LinearAdapter.from_dict(adapter.to_dict()))
    assert restored.same_parameters(adapted)


def test_flattened_view_order():
    adapter = LinearAdapter(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([5.0, 6.0]),
                            AdapterPlacement(AdapterKind.LHN, 2))
    assert adapter.flattened_view().tolist() == [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    again = LinearAdapter.from_flat(adapter.flattened_view(), adapter.placement)
    assert np.array_equal(again.transform, adapter.transform)
    with pytest.raises(DimensionMismatchError):
        LinearAdapter.from_flat(np.zeros(5), adapter.placement)


def test_apply_adapter_dimension_check(small_net):
    wrong = LinearAdapter.identity(3, AdapterPlacement(AdapterKind.LHN, 2))
    with pytest.raises(DimensionMismatchError):
        apply_adapter(small_net, wrong)
