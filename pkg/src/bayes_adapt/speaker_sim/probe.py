"""
Catastrophic-forgetting probe
比较自适应前后: 覆盖/未覆盖类别的错误率变化与对基础网络后验的平均KL
"""
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..net_core.data import LabeledFrameSet
from ..net_core.metrics import LOG_FLOOR, per_class_error
from ..net_core.network import Network, predict_posteriors
from ..utils.errors import DimensionMismatchError


@dataclass
class ForgettingReport:
    per_class_delta: np.ndarray
    covered_delta: float
    uncovered_delta: float
    mean_kl: float
    uncovered_error: float


def mean_posterior_kl(base_posteriors: np.ndarray, adapted_posteriors: np.ndarray) -> float:
    """逐帧 KL(base ‖ adapted) 的均值"""
    p = np.maximum(base_posteriors, LOG_FLOOR)
    q = np.maximum(adapted_posteriors, LOG_FLOOR)
    return float(np.mean(np.sum(base_posteriors * (np.log(p) - np.log(q)), axis=1)))


def _masked_mean(values: np.ndarray, mask: np.ndarray) -> float:
    return float(np.mean(values[mask])) if np.any(mask) else float('nan')


def forgetting_probe(base_net: Network, adapted_net: Network, test: LabeledFrameSet,
                     uncovered: Sequence[int]) -> ForgettingReport:
    """
    Args:
        base_net: 未自适应网络
        adapted_net: 自适应后网络(可含adapter层)
        test: 测试帧
        uncovered: 自适应数据未覆盖的类别

    Returns:
        ForgettingReport: 每类错误率变化(自适应后 − 前), 覆盖/未覆盖类别的帧级变化, 平均KL
    """
    if base_net.input_dim != adapted_net.input_dim or base_net.output_dim != adapted_net.output_dim:
        raise DimensionMismatchError("两个网络的输入/输出维度必须一致")

    base_post = predict_posteriors(base_net, test.frames)
    adapted_post = predict_posteriors(adapted_net, test.frames)
    base_wrong = (np.argmax(base_post, axis=1) != test.targets).astype(np.float64)
    adapted_wrong = (np.argmax(adapted_post, axis=1) != test.targets).astype(np.float64)

    per_class = per_class_error(adapted_net, test) - per_class_error(base_net, test)

    is_uncovered = np.isin(test.targets, np.asarray(list(uncovered), dtype=np.int64))
    diff = adapted_wrong - base_wrong
    return ForgettingReport(
        per_class_delta=per_class,
        covered_delta=_masked_mean(diff, ~is_uncovered),
        uncovered_delta=_masked_mean(diff, is_uncovered),
        mean_kl=mean_posterior_kl(base_post, adapted_post),
        uncovered_error=_masked_mean(adapted_wrong, is_uncovered),
    )
