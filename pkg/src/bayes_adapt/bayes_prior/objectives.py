"""
MAP and KLD regularized adaptation
MAP: 交叉熵 + (λ/2)·(w−μ)ᵀ diag(var)⁻¹ (w−μ)
KLD: 训练目标换成 (1−ρ)·p̃ + ρ·p_SI
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..adapt_layers.adapter import (
    AdapterKind,
    adapter_layer_index,
    adapter_parameter_count,
    run_adaptation,
)
from ..net_core.data import LabeledFrameSet, one_hot
from ..net_core.network import Network, predict_posteriors
from ..net_core.objectives import Gradients, Objective, QuadraticTerm
from ..net_core.trainer import TrainConfig
from ..utils.errors import ConfigError, DimensionMismatchError
from .prior import GaussianPrior

logger = logging.getLogger(__name__)


@dataclass
class MapConfig:
    lambda_: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.lambda_ >= 0:
            raise ConfigError(f"lambda不能为负, 实际 {self.lambda_}")


@dataclass
class KldConfig:
    rho: float = 0.5
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho必须在[0, 1]内, 实际 {self.rho}")


def map_loss(w: np.ndarray, prior: GaussianPrior, lambda_: float, xent: float) -> float:
    """(λ/2)·Σ_m (w_m − μ_m)² / var_m + xent"""
    w = np.asarray(w, dtype=np.float64)
    if w.shape != prior.mean.shape:
        raise DimensionMismatchError(f"w长度 {w.size} 与先验长度 {prior.dim} 不一致")
    penalty = float(np.sum((w - prior.mean) ** 2 / prior.var))
    return (lambda_ / 2.0) * penalty + xent


def map_gradient(w: np.ndarray, prior: GaussianPrior, lambda_: float,
                 xent_gradient: np.ndarray) -> np.ndarray:
    """λ·(w − μ)/var + ∂xent/∂w, 只用到 Σ⁻¹ 的对角"""
    w = np.asarray(w, dtype=np.float64)
    xent_gradient = np.asarray(xent_gradient, dtype=np.float64)
    if w.shape != prior.mean.shape or xent_gradient.shape != w.shape:
        raise DimensionMismatchError("w、先验与梯度长度必须一致")
    return lambda_ * (w - prior.mean) / prior.var + xent_gradient


class MapObjective(Objective):
    """对adapter展开向量施加对角高斯先验"""

    name = "map"

    def __init__(self, prior: GaussianPrior, lambda_: float, kind: AdapterKind):
        self.prior = prior
        self.lambda_ = float(lambda_)
        self.kind = AdapterKind(kind)

    def _index(self, net: Network) -> int:
        index = adapter_layer_index(net, self.kind)
        if index is None:
            raise ConfigError(f"网络中没有 {self.kind.value} adapter")
        if net.layers[index].size != self.prior.dim:
            raise ConfigError(
                f"先验长度 {self.prior.dim} 与 {self.kind.value} 参数数 {net.layers[index].size} 不一致"
            )
        return index

    def _split(self, net: Network, flat: np.ndarray):
        shape = net.layers[self._index(net)].weights.shape
        n = shape[0] * shape[1]
        return flat[:n].reshape(shape), flat[n:]

    def bind(self, net: Network) -> None:
        self._index(net)

    def _vector(self, net: Network) -> np.ndarray:
        layer = net.layers[self._index(net)]
        return np.concatenate([layer.weights.ravel(), layer.bias])

    def penalty(self, net: Network) -> float:
        return map_loss(self._vector(net), self.prior, self.lambda_, 0.0)

    def penalty_gradient(self, net: Network) -> Gradients:
        w = self._vector(net)
        g = map_gradient(w, self.prior, self.lambda_, np.zeros_like(w))
        return {self._index(net): self._split(net, g)}

    def quadratic_terms(self, net: Network) -> List[QuadraticTerm]:
        precision_w, precision_b = self._split(net, self.lambda_ / self.prior.var)
        anchor_w, anchor_b = self._split(net, self.prior.mean)
        return [QuadraticTerm(self._index(net), precision_w, anchor_w, precision_b, anchor_b)]


def adapt_map(net: Network, data: LabeledFrameSet, prior: GaussianPrior, cfg: MapConfig,
              kind: AdapterKind) -> Network:
    """
    MAP自适应: 只训练adapter参数, 目标为交叉熵加先验惩罚

    Raises:
        ConfigError: 先验长度或类型与adapter不匹配
    """
    kind = AdapterKind(kind)
    expected = adapter_parameter_count(net, kind)
    if prior.dim != expected:
        raise ConfigError(f"先验长度 {prior.dim} 与 {kind.value} 参数数 {expected} 不一致")
    if prior.kind is not kind:
        raise ConfigError(f"先验类型 {prior.kind.value} 与adapter类型 {kind.value} 不一致")
    objective = MapObjective(prior, cfg.lambda_, kind)
    return run_adaptation(net, data, cfg.train, kind, objective).network


def interpolate_targets(labels: np.ndarray, base_posteriors: np.ndarray, rho: float) -> np.ndarray:
    """p̂ = (1−ρ)·p̃ + ρ·p_SI, 每行仍是概率分布"""
    base_posteriors = np.atleast_2d(base_posteriors)
    hard = one_hot(labels, base_posteriors.shape[1])
    return (1.0 - rho) * hard + rho * base_posteriors


class KldObjective(Objective):
    """以冻结的基础网络后验做目标插值"""

    name = "kld"

    def __init__(self, base_net: Network, rho: float):
        if not 0.0 <= rho <= 1.0:
            raise ConfigError(f"rho必须在[0, 1]内, 实际 {rho}")
        self.base_net = base_net.copy()
        self.rho = float(rho)

    def targets(self, frames, labels, class_count):
        base = predict_posteriors(self.base_net, frames)
        if base.shape[1] != class_count:
            raise DimensionMismatchError(f"基础网络输出 {base.shape[1]} 与类别数 {class_count} 不一致")
        return interpolate_targets(labels, base, self.rho)


def adapt_kld(net: Network, data: LabeledFrameSet, cfg: KldConfig, kind: AdapterKind,
              base_net: Optional[Network] = None) -> Network:
    """
    KLD正则自适应

    Args:
        net: 待自适应网络
        data: 自适应数据
        cfg: rho与训练配置
        kind: adapter类型
        base_net: 提供p_SI的网络, 默认即输入网络
    """
    objective = KldObjective(base_net if base_net is not None else net, cfg.rho)
    return run_adaptation(net, data, cfg.train, kind, objective).network
