"""
speaker_sim测试: 合成语料、说话人失配、预算与遗忘探针
"""
import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_frames
from bayes_adapt.net_core import TrainConfig, create_network, frame_error_rate, sgd_train
from bayes_adapt.speaker_sim import (
    AdaptationBudget,
    CorpusSpec,
    SpeakerShift,
    class_means,
    export_frames,
    forgetting_probe,
    gen_base_corpus,
    gen_speaker,
    load_frames,
    make_speaker_shift,
    mean_posterior_kl,
    truncate_budget,
)
from bayes_adapt.utils.errors import ConfigError, DimensionMismatchError

EASY = CorpusSpec(feature_dim=8, class_count=6, group_count=3, frames_per_class=100,
                  dev_frames_per_class=50, rng_seed=2, class_mean_scale=8.0,
                  within_group_scale=4.0, frame_noise=0.3, frames_per_sentence=20)


@pytest.fixture(scope="module")
def easy_net():
    train, _ = gen_base_corpus(EASY)
    cfg = TrainConfig(learning_rate=0.01, batch_size=16, epochs=30, rng_seed=0)
    return sgd_train(create_network([8, 16, 6], seed=0), train, cfg).network


# ---------------------------------------------------------------- base corpus

def test_base_corpus_is_deterministic():
    train_a, dev_a = gen_base_corpus(EASY)
    train_b, dev_b = gen_base_corpus(EASY)
    assert np.array_equal(train_a.frames, train_b.frames)
    assert np.array_equal(dev_a.frames, dev_b.frames)
    assert train_a.frame_count == 6 * 100
    assert np.bincount(dev_a.targets).tolist() == [50] * 6


def test_different_seed_changes_corpus():
    other = dataclasses.replace(EASY, rng_seed=3)
    assert not np.array_equal(gen_base_corpus(EASY)[0].frames, gen_base_corpus(other)[0].frames)


def test_group_tags_are_contiguous():
    spec = CorpusSpec()
    tags = spec.group_tags()
    assert len(tags) == 40
    assert tags[:5] == [0] * 5
    assert tags[-5:] == [7] * 5
    assert all(a <= b for a, b in zip(tags, tags[1:]))


def test_classes_in_a_group_are_closer_than_across_groups():
    spec = CorpusSpec()
    means = class_means(spec)
    tags = np.array(spec.group_tags())
    dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
    same = tags[:, None] == tags[None, :]
    off_diagonal = ~np.eye(spec.class_count, dtype=bool)
    assert dist[same & off_diagonal].mean() < dist[~same].mean()


def test_corpus_spec_validation():
    with pytest.raises(ConfigError):
        CorpusSpec(class_count=4, group_count=5)
    with pytest.raises(ConfigError):
        CorpusSpec(frames_per_class=0)
    with pytest.raises(ConfigError):
        CorpusSpec.from_config({'feature_dim': 4, 'unknown': 1, 'class_mean_scale': -1.0})


def test_corpus_spec_from_config_seed():
    spec = CorpusSpec.from_config({'feature_dim': 4, 'class_count': 6, 'group_count': 2, 'seed': 9})
    assert spec.rng_seed == 9
    assert CorpusSpec.from_config({'seed': 9}, seed=4).rng_seed == 4


def test_easy_corpus_is_learnable(easy_net):
    _, dev = gen_base_corpus(EASY)
    assert frame_error_rate(easy_net, dev) < 0.05


# ---------------------------------------------------------------- speakers

def test_identity_shift_matches_dev_error(easy_net):
    _, dev = gen_base_corpus(EASY)
    speaker = gen_speaker(EASY, SpeakerShift.identity(8, seed=5), AdaptationBudget(1, range(6)),
                          test_frames_per_class=50)
    assert abs(frame_error_rate(easy_net, speaker.test) - frame_error_rate(easy_net, dev)) <= 0.02


def test_strong_shift_hurts_base_network(easy_net):
    identity = gen_speaker(EASY, SpeakerShift.identity(8, seed=5), AdaptationBudget(1, range(6)))
    shifted = gen_speaker(EASY, make_speaker_shift(8, 1.0, 3.0, 0.5, seed=5), AdaptationBudget(1, range(6)))
    assert frame_error_rate(easy_net, shifted.test) > frame_error_rate(easy_net, identity.test) + 0.1


@given(strength=st.floats(0.0, 2.0), seed=st.integers(0, 10_000))
def test_shift_strength_bound(strength, seed):
    shift = make_speaker_shift(5, strength, 0.5, 0.1, seed)
    assert shift.strength <= strength + 1e-12
    assert shift.feature_dim == 5


def test_identity_shift_is_exact():
    frames = np.random.default_rng(0).standard_normal((30, 4))
    out = SpeakerShift.identity(4).apply(frames, np.random.default_rng(1))
    assert np.array_equal(out, frames)


def test_shift_validation():
    with pytest.raises(DimensionMismatchError):
        SpeakerShift(np.eye(3), np.zeros(4), 0.1, 0)
    with pytest.raises(ConfigError):
        SpeakerShift(np.eye(3), np.zeros(3), -0.1, 0)


def test_budget_frames_and_coverage():
    covered = [0, 2, 4]
    speaker = gen_speaker(EASY, make_speaker_shift(8, 0.1, 0.5, 0.3, seed=1), AdaptationBudget(3, covered),
                          speaker_id=7, test_frames_per_class=10)
    assert speaker.adaptation.frame_count == 3 * EASY.frames_per_sentence
    assert set(np.unique(speaker.adaptation.targets)) <= set(covered)
    assert np.all(speaker.adaptation.condition_ids == 7)
    assert np.bincount(speaker.test.targets).tolist() == [10] * 6
    assert speaker.budget.uncovered_classes(6).tolist() == [1, 3, 5]


def test_smaller_budget_is_prefix_of_larger():
    shift = make_speaker_shift(8, 0.1, 0.5, 0.3, seed=11)
    small = gen_speaker(EASY, shift, AdaptationBudget(2, range(6)))
    large = gen_speaker(EASY, shift, AdaptationBudget(5, range(6)))
    prefix = truncate_budget(large, 2, EASY)
    assert np.array_equal(prefix.frames, small.adaptation.frames)
    assert np.array_equal(prefix.targets, small.adaptation.targets)
    assert np.array_equal(small.test.frames, large.test.frames)
    with pytest.raises(ConfigError):
        truncate_budget(small, 3, EASY)


def test_budget_validation():
    with pytest.raises(ConfigError):
        AdaptationBudget(0, [1])
    with pytest.raises(ConfigError):
        AdaptationBudget(1, [])
    with pytest.raises(ConfigError):
        gen_speaker(EASY, SpeakerShift.identity(8), AdaptationBudget(1, [6]))
    with pytest.raises(DimensionMismatchError):
        gen_speaker(EASY, SpeakerShift.identity(3), AdaptationBudget(1, [0]))


# ---------------------------------------------------------------- export

def test_export_round_trip_is_exact(tmp_path):
    train, _ = gen_base_corpus(EASY)
    export_frames(train, tmp_path / "train.csv")
    loaded = load_frames(tmp_path / "train.csv", class_count=6)
    assert np.array_equal(loaded.frames, train.frames)
    assert np.array_equal(loaded.targets, train.targets)
    assert np.array_equal(loaded.condition_ids, train.condition_ids)


def test_export_is_byte_stable(tmp_path):
    export_frames(gen_base_corpus(EASY)[1], tmp_path / "a.csv")
    export_frames(gen_base_corpus(EASY)[1], tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert header == ",".join([f"f{i}" for i in range(8)] + ["label", "condition"])


# ---------------------------------------------------------------- forgetting probe

def test_probe_of_unchanged_network_is_zero(small_net):
    test = random_frames(3, 60, 4, 3)
    report = forgetting_probe(small_net, small_net.copy(), test, [2])
    assert report.covered_delta == 0.0
    assert report.uncovered_delta == 0.0
    assert report.mean_kl == pytest.approx(0.0, abs=1e-15)
    assert np.all(report.per_class_delta == 0.0)


def test_probe_counts_changed_decisions(small_net):
    test = random_frames(4, 90, 4, 3)
    biased = small_net.copy()
    biased.layers[-1].bias = np.array([0.0, 0.0, 100.0])
    report = forgetting_probe(small_net, biased, test, [0, 1])
    assert report.uncovered_error == 1.0
    assert report.covered_delta <= 0.0
    assert report.mean_kl > 0.0


def test_probe_without_uncovered_classes(small_net):
    test = random_frames(5, 30, 4, 3)
    report = forgetting_probe(small_net, small_net, test, [])
    assert np.isnan(report.uncovered_delta)
    assert np.isnan(report.uncovered_error)


def test_mean_posterior_kl_example():
    p = np.array([[0.5, 0.5]])
    q = np.array([[0.25, 0.75]])
    expected = 0.5 * np.log(0.5 / 0.25) + 0.5 * np.log(0.5 / 0.75)
    assert mean_posterior_kl(p, q) == pytest.approx(expected)
