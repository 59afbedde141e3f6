"""
Finite-difference gradient checking
用中心差分校验解析梯度
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from .network import Network, forward
from .objectives import CrossEntropyObjective, Objective, merge_gradients
from .trainer import LayerMask, backward

logger = logging.getLogger(__name__)


def finite_difference_gradient(func: Callable[[np.ndarray], float], x0: np.ndarray,
                               eps: float = 1e-5) -> np.ndarray:
    """
    中心差分梯度 (f(x+eps) − f(x−eps)) / 2eps

    Args:
        func: 标量函数
        x0: 展开点(一维)
        eps: 步长

    Returns:
        np.ndarray: 与x0同形的数值梯度
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for j in range(x0.size):
        x = x0.copy()
        x[j] = x0[j] + eps
        fplus = func(x)
        x[j] = x0[j] - eps
        fminus = func(x)
        grad[j] = (fplus - fminus) / (2 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """逐元素 |a − n| / max(|a|, |n|, floor) 的最大值"""
    analytic = np.ravel(analytic)
    numeric = np.ravel(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def _flatten_masked(net: Network, mask: LayerMask) -> np.ndarray:
    parts = []
    for i in sorted(mask.layers):
        parts.append(net.layers[i].weights.ravel())
        parts.append(net.layers[i].bias)
    return np.concatenate(parts)


def _assign_masked(net: Network, mask: LayerMask, flat: np.ndarray) -> None:
    offset = 0
    for i in sorted(mask.layers):
        layer = net.layers[i]
        n = layer.weights.size
        layer.weights = flat[offset:offset + n].reshape(layer.weights.shape).copy()
        offset += n
        layer.bias = flat[offset:offset + layer.bias.size].copy()
        offset += layer.bias.size


def analytic_gradient(net: Network, frames: np.ndarray, labels: np.ndarray, class_count: int,
                      mask: LayerMask, objective: Optional[Objective] = None) -> np.ndarray:
    """目标函数(交叉熵+惩罚)对mask内参数的解析梯度,按层展开"""
    objective = objective or CrossEntropyObjective()
    cache = forward(net, frames)
    targets = objective.targets(frames, labels, class_count)
    grads = merge_gradients([
        backward(net, frames, targets, mask, cache),
        {i: g for i, g in objective.penalty_gradient(net).items() if i in mask},
    ])
    parts = []
    for i in sorted(mask.layers):
        parts.append(grads[i][0].ravel())
        parts.append(grads[i][1])
    return np.concatenate(parts)


def check_network_gradient(net: Network, frames: np.ndarray, labels: np.ndarray, class_count: int,
                           mask: LayerMask, objective: Optional[Objective] = None,
                           eps: float = 1e-5) -> Tuple[np.ndarray, np.ndarray]:
    """
    对比解析梯度与中心差分梯度

    Returns:
        (analytic, numeric): 按层展开的两组梯度
    """
    objective = objective or CrossEntropyObjective()
    work = net.copy()
    objective.bind(work)
    analytic = analytic_gradient(work, frames, labels, class_count, mask, objective)

    probe = work.copy()

    def loss_at(flat: np.ndarray) -> float:
        _assign_masked(probe, mask, flat)
        return objective.loss(probe, frames, labels, class_count)

    numeric = finite_difference_gradient(loss_at, _flatten_masked(work, mask), eps)
    logger.debug(f"梯度校验: {analytic.size} 个参数, 最大相对误差 {max_relative_error(analytic, numeric):.3e}")
    return analytic, numeric
