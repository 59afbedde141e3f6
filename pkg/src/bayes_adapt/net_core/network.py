"""
Feedforward network
sigmoid隐层 + softmax输出层的前馈网络: 构建、前向传播
"""
import copy
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np

from ..utils.errors import DimensionMismatchError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    LINEAR = "linear"


# 层角色: 普通隐层、输出层,以及插入的自适应变换层
ROLE_HIDDEN = "hidden"
ROLE_OUTPUT = "output"
ROLE_LIN = "lin"
ROLE_LHN = "lhn"
ADAPTER_ROLES = (ROLE_LIN, ROLE_LHN)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh形式对大负数不溢出
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(x: np.ndarray) -> np.ndarray:
    """按行softmax,先减去每行最大logit"""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


@dataclass
class LayerParams:
    """单个全连接层: y = f(W x + b)"""
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation
    role: str = ROLE_HIDDEN

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise DimensionMismatchError(f"权重必须是二维矩阵, 实际维度 {self.weights.ndim}")
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionMismatchError(
                f"bias长度 {self.bias.shape} 与输出维度 {self.weights.shape[0]} 不一致"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))

    def apply(self, inputs: np.ndarray) -> np.ndarray:
        """返回 (pre-activation, activation)"""
        pre = inputs @ self.weights.T + self.bias
        if self.activation is Activation.SIGMOID:
            return pre, sigmoid(pre)
        if self.activation is Activation.SOFTMAX:
            return pre, softmax(pre)
        return pre, pre


@dataclass
class Network:
    """有序层列表,最后一层为softmax"""
    layers: List[LayerParams]
    input_dim: int

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.input_dim < 1:
            raise DimensionMismatchError(f"input_dim必须为正, 实际 {self.input_dim}")
        if not self.layers:
            raise DimensionMismatchError("网络至少需要一层")
        expected = self.input_dim
        for i, layer in enumerate(self.layers):
            if layer.in_dim != expected:
                raise DimensionMismatchError(
                    f"第{i}层输入维度 {layer.in_dim} 与上一层输出 {expected} 不一致"
                )
            expected = layer.out_dim
            is_last = i == len(self.layers) - 1
            if is_last and layer.activation is not Activation.SOFTMAX:
                raise DimensionMismatchError("最后一层必须是softmax")
            if not is_last and layer.activation is Activation.SOFTMAX:
                raise DimensionMismatchError(f"第{i}层为softmax, 但只有输出层允许softmax")

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def output_index(self) -> int:
        return len(self.layers) - 1

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def layer_index(self, role: str) -> Optional[int]:
        """返回指定角色的第一层下标,不存在返回None"""
        for i, layer in enumerate(self.layers):
            if layer.role == role:
                return i
        return None

    def parameter_count(self) -> int:
        return sum(layer.size for layer in self.layers)

    def same_parameters(self, other: "Network") -> bool:
        """逐层逐元素比较(位级相等)"""
        if self.depth != other.depth or self.input_dim != other.input_dim:
            return False
        return all(
            a.activation == b.activation
            and np.array_equal(a.weights, b.weights)
            and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers)
        )


def create_network(
    layer_dims: Sequence[int],
    seed: int = 0,
    hidden_activation: Activation = Activation.SIGMOID,
) -> Network:
    """
    构建随机初始化的网络

    权重取 U[-r, r], r = sqrt(6 / (fan_in + fan_out)), bias为0

    Args:
        layer_dims: [input_dim, hidden..., output_dim]
        seed: 随机种子
        hidden_activation: 隐层激活函数

    Returns:
        Network: 新网络
    """
    if len(layer_dims) < 2:
        raise DimensionMismatchError("layer_dims至少包含输入和输出维度")
    rng = np.random.default_rng(seed)
    layers = []
    n_layers = len(layer_dims) - 1
    for i, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:])):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-r, r, size=(fan_out, fan_in))
        is_last = i == n_layers - 1
        layers.append(LayerParams(
            weights=weights,
            bias=np.zeros(fan_out),
            activation=Activation.SOFTMAX if is_last else Activation(hidden_activation),
            role=ROLE_OUTPUT if is_last else ROLE_HIDDEN,
        ))
    logger.debug(f"创建网络 {list(layer_dims)}, seed={seed}")
    return Network(layers=layers, input_dim=int(layer_dims[0]))


@dataclass
class ForwardCache:
    """前向传播缓存: activations[0]为输入, activations[i+1]为第i层输出"""
    activations: List[np.ndarray] = field(default_factory=list)
    pre_activations: List[np.ndarray] = field(default_factory=list)
    single: bool = False

    @property
    def posteriors(self) -> np.ndarray:
        out = self.activations[-1]
        return out[0] if self.single else out


def _as_frames(net: Network, frames: np.ndarray):
    frames = np.asarray(frames, dtype=np.float64)
    single = frames.ndim == 1
    if single:
        frames = frames[None, :]
    if frames.ndim != 2 or frames.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"输入维度 {frames.shape[-1] if frames.ndim else 0} 与网络input_dim {net.input_dim} 不一致"
        )
    return frames, single


def forward(net: Network, frames: np.ndarray) -> ForwardCache:
    """
    前向传播

    Args:
        net: 网络
        frames: 单帧向量(F,)或帧矩阵(T, F)

    Returns:
        ForwardCache: 各层激活及后验
    """
    frames, single = _as_frames(net, frames)
    cache = ForwardCache(activations=[frames], single=single)
    current = frames
    for layer in net.layers:
        pre, current = layer.apply(current)
        cache.pre_activations.append(pre)
        cache.activations.append(current)
    return cache


def predict_posteriors(net: Network, frames: np.ndarray) -> np.ndarray:
    """只返回后验,不保留中间激活"""
    frames, single = _as_frames(net, frames)
    current = frames
    for layer in net.layers:
        _, current = layer.apply(current)
    return current[0] if single else current
