"""
Loss and evaluation metrics
"""
import logging

import numpy as np

from ..utils.errors import DimensionMismatchError
from .data import LabeledFrameSet
from .network import Network, predict_posteriors

logger = logging.getLogger(__name__)

LOG_FLOOR = 1e-30


def cross_entropy(posteriors: np.ndarray, targets: np.ndarray, floor: float = LOG_FLOOR,
                  return_floored: bool = False):
    """
    交叉熵 -Σ_t Σ_j p̃_t(j) log p_t(j)

    Args:
        posteriors: (T, J) 后验矩阵
        targets: (T,) 类别下标, 或 (T, J) 软目标分布
        floor: log前的下限
        return_floored: 同时返回被截断的目标项数量

    Returns:
        float (或 (float, int)): 总交叉熵(按帧求和, 不做平均)
    """
    posteriors = np.atleast_2d(np.asarray(posteriors, dtype=np.float64))
    targets = np.asarray(targets)
    T, J = posteriors.shape
    if not np.allclose(posteriors.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("后验每行之和必须为1")

    if targets.ndim == 1:
        if targets.shape[0] != T:
            raise DimensionMismatchError(f"targets长度 {targets.shape[0]} 与帧数 {T} 不一致")
        picked = posteriors[np.arange(T), targets.astype(np.int64)]
        floored = int(np.sum(picked <= floor))
        loss = -float(np.sum(np.log(np.maximum(picked, floor))))
    else:
        if targets.shape != (T, J):
            raise DimensionMismatchError(f"软目标形状 {targets.shape} 与后验 {(T, J)} 不一致")
        floored = int(np.sum((posteriors <= floor) & (targets > 0)))
        loss = -float(np.sum(targets * np.log(np.maximum(posteriors, floor))))

    if floored:
        logger.warning(f"交叉熵: {floored} 个目标后验低于下限 {floor}, 已截断")
    if return_floored:
        return loss, floored
    return loss


def frame_error_rate(net: Network, data: LabeledFrameSet) -> float:
    """argmax后验与标签不一致的帧比例,并列时取最小下标"""
    posteriors = predict_posteriors(net, data.frames)
    if posteriors.shape[1] != data.class_count:
        raise DimensionMismatchError(
            f"网络输出维度 {posteriors.shape[1]} 与类别数 {data.class_count} 不一致"
        )
    predictions = np.argmax(posteriors, axis=1)
    return float(np.mean(predictions != data.targets))


def per_class_error(net: Network, data: LabeledFrameSet) -> np.ndarray:
    """每个类别的帧错误率,无该类帧时为NaN"""
    predictions = np.argmax(predict_posteriors(net, data.frames), axis=1)
    wrong = (predictions != data.targets).astype(np.float64)
    counts = np.bincount(data.targets, minlength=data.class_count).astype(np.float64)
    errors = np.bincount(data.targets, weights=wrong, minlength=data.class_count)
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(counts > 0, errors / counts, np.nan)
