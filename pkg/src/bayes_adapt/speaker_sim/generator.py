"""
Synthetic speaker corpus
按组结构生成类条件高斯语料, 并用 "旋转 + 偏移 + 噪声" 模拟说话人失配
"""
import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..net_core.data import LabeledFrameSet
from ..utils.errors import ConfigError, DimensionMismatchError
from ..utils.seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class CorpusSpec:
    """
    合成语料描述

    同组类别共享一个均值方向, 组内再加较小的偏移
    """
    feature_dim: int = 16
    class_count: int = 40
    group_count: int = 8
    frames_per_class: int = 100
    dev_frames_per_class: int = 25
    rng_seed: int = 0
    class_mean_scale: float = 6.0
    within_group_scale: float = 2.5
    frame_noise: float = 1.0
    frames_per_sentence: int = 50

    def __post_init__(self):
        counts = {
            'feature_dim': self.feature_dim, 'class_count': self.class_count,
            'group_count': self.group_count, 'frames_per_class': self.frames_per_class,
            'dev_frames_per_class': self.dev_frames_per_class,
            'frames_per_sentence': self.frames_per_sentence,
        }
        for name, value in counts.items():
            if value < 1:
                raise ConfigError(f"{name}必须≥1, 实际 {value}")
        if self.group_count > self.class_count:
            raise ConfigError(f"group_count {self.group_count} 不能超过 class_count {self.class_count}")
        if not self.class_mean_scale > 0:
            raise ConfigError(f"class_mean_scale必须为正, 实际 {self.class_mean_scale}")
        if self.within_group_scale < 0 or self.frame_noise < 0:
            raise ConfigError("within_group_scale/frame_noise不能为负")

    @classmethod
    def from_config(cls, section: Dict[str, Any], seed: Optional[int] = None) -> "CorpusSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        values = {k: v for k, v in section.items() if k in names}
        if 'seed' in section:
            values['rng_seed'] = section['seed']
        if seed is not None:
            values['rng_seed'] = seed
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"语料配置非法: {e}")

    def group_tags(self) -> List[int]:
        """类别j属于第 j·S//J 组, 各组类别连续"""
        return [j * self.group_count // self.class_count for j in range(self.class_count)]


@dataclass
class ShiftSpec:
    """说话人失配强度(配置段shift)"""
    shift_strength: float = 0.1
    bias_scale: float = 0.5
    noise_scale: float = 0.3
    test_frames_per_class: int = 25

    def __post_init__(self):
        if self.shift_strength < 0 or self.bias_scale < 0 or self.noise_scale < 0:
            raise ConfigError("失配强度不能为负")
        if self.test_frames_per_class < 1:
            raise ConfigError("test_frames_per_class必须≥1")

    @classmethod
    def from_config(cls, section: Dict[str, Any]) -> "ShiftSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        try:
            return cls(**{k: v for k, v in section.items() if k in names})
        except TypeError as e:
            raise ConfigError(f"失配配置非法: {e}")


@dataclass
class SpeakerShift:
    """x ↦ R·x + b + ε, ε ~ N(0, noise_scale²·I)"""
    rotation: np.ndarray
    bias_shift: np.ndarray
    noise_scale: float
    seed: int

    def __post_init__(self):
        self.rotation = np.array(self.rotation, dtype=np.float64)
        self.bias_shift = np.array(self.bias_shift, dtype=np.float64)
        F = self.bias_shift.size
        if self.rotation.shape != (F, F):
            raise DimensionMismatchError(f"rotation形状 {self.rotation.shape} 与偏移长度 {F} 不一致")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale不能为负")

    @property
    def feature_dim(self) -> int:
        return self.bias_shift.size

    @property
    def strength(self) -> float:
        """‖R − I‖∞(最大元素绝对值)"""
        return float(np.max(np.abs(self.rotation - np.eye(self.feature_dim))))

    @classmethod
    def identity(cls, feature_dim: int, seed: int = 0) -> "SpeakerShift":
        return cls(np.eye(feature_dim), np.zeros(feature_dim), 0.0, seed)

    def apply(self, frames: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(frames.shape)
        return frames @ self.rotation.T + self.bias_shift + self.noise_scale * noise


def make_speaker_shift(feature_dim: int, shift_strength: float, bias_scale: float,
                       noise_scale: float, seed: int) -> SpeakerShift:
    """R = I + U[−s, s], 保证 ‖R − I‖∞ ≤ s"""
    rng = np.random.default_rng(derive_seed(seed, "shift"))
    rotation = np.eye(feature_dim) + rng.uniform(-shift_strength, shift_strength, size=(feature_dim, feature_dim))
    bias = bias_scale * rng.standard_normal(feature_dim)
    return SpeakerShift(rotation, bias, noise_scale, seed)


@dataclass
class AdaptationBudget:
    """句子数(每句 frames_per_sentence 帧)与覆盖的类别"""
    sentences: int
    covered_classes: Sequence[int]

    def __post_init__(self):
        if self.sentences < 1:
            raise ConfigError(f"sentences必须≥1, 实际 {self.sentences}")
        self.covered_classes = np.unique(np.asarray(self.covered_classes, dtype=np.int64))
        if self.covered_classes.size == 0:
            raise ConfigError("covered_classes不能为空")

    def frame_count(self, spec: CorpusSpec) -> int:
        return self.sentences * spec.frames_per_sentence

    def uncovered_classes(self, class_count: int) -> np.ndarray:
        return np.setdiff1d(np.arange(class_count), self.covered_classes)


@dataclass
class SpeakerData:
    speaker_id: int
    adaptation: LabeledFrameSet
    test: LabeledFrameSet
    shift: SpeakerShift
    budget: AdaptationBudget


def class_means(spec: CorpusSpec) -> np.ndarray:
    """(J, F) 类均值: 组方向·class_mean_scale + 组内偏移·within_group_scale"""
    rng = np.random.default_rng(derive_seed(spec.rng_seed, "means"))
    directions = rng.standard_normal((spec.group_count, spec.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    offsets = rng.standard_normal((spec.class_count, spec.feature_dim))
    offsets /= np.linalg.norm(offsets, axis=1, keepdims=True)
    tags = np.array(spec.group_tags())
    return spec.class_mean_scale * directions[tags] + spec.within_group_scale * offsets


def sample_frames(spec: CorpusSpec, means: np.ndarray, labels: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    noise = rng.standard_normal((labels.size, spec.feature_dim))
    return means[labels] + spec.frame_noise * noise


def _balanced_set(spec: CorpusSpec, means: np.ndarray, per_class: int, rng: np.random.Generator,
                  condition_id: int = 0) -> LabeledFrameSet:
    labels = np.repeat(np.arange(spec.class_count), per_class)
    frames = sample_frames(spec, means, labels, rng)
    return LabeledFrameSet(frames, labels, spec.class_count, np.full(labels.size, condition_id))


def gen_base_corpus(spec: CorpusSpec) -> Tuple[LabeledFrameSet, LabeledFrameSet]:
    """
    生成基础训练集与开发集

    Returns:
        (train, dev): 每类分别 frames_per_class / dev_frames_per_class 帧
    """
    means = class_means(spec)
    train = _balanced_set(spec, means, spec.frames_per_class,
                          np.random.default_rng(derive_seed(spec.rng_seed, "train")))
    dev = _balanced_set(spec, means, spec.dev_frames_per_class,
                        np.random.default_rng(derive_seed(spec.rng_seed, "dev")))
    logger.info(f"基础语料: train {train.frame_count} 帧, dev {dev.frame_count} 帧, "
                f"{spec.class_count} 类/{spec.group_count} 组")
    return train, dev


def gen_speaker(spec: CorpusSpec, shift: SpeakerShift, budget: AdaptationBudget,
                speaker_id: int = 1, test_frames_per_class: int = 25) -> SpeakerData:
    """
    生成单个说话人的自适应集与测试集

    每句独立播种, 因此较小预算的自适应集恰好是较大预算的前缀

    Args:
        spec: 语料描述
        shift: 说话人失配
        budget: 句子数与覆盖类别
        speaker_id: 写入condition_ids的编号
        test_frames_per_class: 测试集每类帧数(覆盖全部类别)

    Returns:
        SpeakerData
    """
    if shift.feature_dim != spec.feature_dim:
        raise DimensionMismatchError(f"失配维度 {shift.feature_dim} 与特征维度 {spec.feature_dim} 不一致")
    if np.any(budget.covered_classes >= spec.class_count):
        raise ConfigError("covered_classes超出类别范围")
    means = class_means(spec)

    sentences = []
    for k in range(budget.sentences):
        rng = np.random.default_rng(derive_seed(spec.rng_seed, "speaker", shift.seed, "sentence", k))
        labels = rng.choice(budget.covered_classes, size=spec.frames_per_sentence)
        clean = sample_frames(spec, means, labels, rng)
        sentences.append(LabeledFrameSet(shift.apply(clean, rng), labels, spec.class_count,
                                         np.full(labels.size, speaker_id)))
    adaptation = LabeledFrameSet.concat(sentences)

    rng = np.random.default_rng(derive_seed(spec.rng_seed, "speaker", shift.seed, "test"))
    clean_test = _balanced_set(spec, means, test_frames_per_class, rng, speaker_id)
    test = LabeledFrameSet(shift.apply(clean_test.frames, rng), clean_test.targets, spec.class_count,
                           clean_test.condition_ids)
    return SpeakerData(speaker_id, adaptation, test, shift, budget)


def truncate_budget(speaker: SpeakerData, sentences: int, spec: CorpusSpec) -> LabeledFrameSet:
    """取自适应集的前 sentences 句"""
    if sentences > speaker.budget.sentences:
        raise ConfigError(f"预算 {sentences} 句超过已生成的 {speaker.budget.sentences} 句")
    return speaker.adaptation.subset(np.arange(sentences * spec.frames_per_sentence))


def export_frames(data: LabeledFrameSet, path: Union[str, Path]) -> None:
    """按列导出CSV: f0..f{F-1}, label, condition; 同一seed逐字节一致"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(data.frames, columns=[f"f{i}" for i in range(data.feature_dim)])
    frame['label'] = data.targets
    frame['condition'] = data.condition_ids
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.info(f"导出 {data.frame_count} 帧到: {path}")


def load_frames(path: Union[str, Path], class_count: Optional[int] = None) -> LabeledFrameSet:
    frame = pd.read_csv(path, float_precision='round_trip')
    feature_cols = [c for c in frame.columns if c.startswith('f')]
    labels = frame['label'].to_numpy(dtype=np.int64)
    return LabeledFrameSet(
        frames=frame[feature_cols].to_numpy(dtype=np.float64),
        targets=labels,
        class_count=class_count if class_count is not None else int(labels.max()) + 1,
        condition_ids=frame['condition'].to_numpy(dtype=np.int64),
    )
