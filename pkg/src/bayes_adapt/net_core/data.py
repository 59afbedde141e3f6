"""
Labeled frame sets
"""
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..utils.errors import DimensionMismatchError


@dataclass
class LabeledFrameSet:
    """
    帧特征与类别标签

    Attributes:
        frames: (T, F) 特征矩阵
        targets: (T,) 类别下标, 取值于 [0, class_count)
        class_count: 类别数J
        condition_ids: (T,) 条件(说话人)编号
    """
    frames: np.ndarray
    targets: np.ndarray
    class_count: int
    condition_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = np.array(self.frames, dtype=np.float64)
        self.targets = np.array(self.targets, dtype=np.int64)
        if self.condition_ids is None:
            self.condition_ids = np.zeros(len(self.targets), dtype=np.int64)
        self.condition_ids = np.array(self.condition_ids, dtype=np.int64)

        if self.frames.ndim != 2:
            raise DimensionMismatchError(f"frames必须是(T, F)矩阵, 实际维度 {self.frames.ndim}")
        T = self.frames.shape[0]
        if T < 1:
            raise ValueError("帧集合不能为空")
        if self.targets.shape != (T,) or self.condition_ids.shape != (T,):
            raise DimensionMismatchError("targets/condition_ids长度必须等于帧数")
        if self.class_count < 1:
            raise ValueError(f"class_count必须为正, 实际 {self.class_count}")
        if np.any(self.targets < 0) or np.any(self.targets >= self.class_count):
            raise ValueError(f"target下标越界 [0, {self.class_count})")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames包含非有限值")

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_count(self) -> int:
        return self.frames.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.frames.shape[1]

    def subset(self, indices: Sequence[int]) -> "LabeledFrameSet":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledFrameSet(
            frames=self.frames[idx],
            targets=self.targets[idx],
            class_count=self.class_count,
            condition_ids=self.condition_ids[idx],
        )

    def select_classes(self, classes: Sequence[int]) -> Optional["LabeledFrameSet"]:
        """只保留属于给定类别的帧,无帧时返回None"""
        mask = np.isin(self.targets, np.asarray(classes, dtype=np.int64))
        if not np.any(mask):
            return None
        return self.subset(np.flatnonzero(mask))

    @staticmethod
    def concat(sets: Sequence["LabeledFrameSet"]) -> "LabeledFrameSet":
        if not sets:
            raise ValueError("没有可拼接的帧集合")
        return LabeledFrameSet(
            frames=np.vstack([s.frames for s in sets]),
            targets=np.concatenate([s.targets for s in sets]),
            class_count=sets[0].class_count,
            condition_ids=np.concatenate([s.condition_ids for s in sets]),
        )


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], class_count))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out
