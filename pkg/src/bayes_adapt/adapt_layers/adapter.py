"""
Linear transform adapters
在输入(LIN)或最后隐层之后(LHN)插入仿射变换层,或直接自适应输出层(LON_DIRECT)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..net_core.data import LabeledFrameSet
from ..net_core.network import ROLE_LHN, ROLE_LIN, Activation, LayerParams, Network
from ..net_core.objectives import Objective
from ..net_core.trainer import LayerMask, TrainConfig, TrainResult, sgd_train
from ..utils.errors import ConfigError, DimensionMismatchError

logger = logging.getLogger(__name__)


class AdapterKind(str, Enum):
    LIN = "lin"
    LHN = "lhn"
    LON_DIRECT = "lon"


_ROLE_OF = {AdapterKind.LIN: ROLE_LIN, AdapterKind.LHN: ROLE_LHN}


@dataclass(frozen=True)
class AdapterPlacement:
    """
    kind: 变换类型
    anchor_layer: 原网络中的层下标
        LIN 插在第0层之前, LHN 插在输出层之前, LON_DIRECT 即输出层本身
    """
    kind: AdapterKind
    anchor_layer: int


@dataclass
class LinearAdapter:
    """方阵仿射变换 y = A x + c"""
    transform: np.ndarray
    bias: np.ndarray
    placement: AdapterPlacement

    def __post_init__(self):
        self.transform = np.array(self.transform, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64)
        d = self.transform.shape[0]
        if self.transform.shape != (d, d) or self.bias.shape != (d,):
            raise DimensionMismatchError(f"adapter必须是方阵, 实际 {self.transform.shape}/{self.bias.shape}")

    @property
    def dim(self) -> int:
        return self.transform.shape[0]

    @property
    def kind(self) -> AdapterKind:
        return self.placement.kind

    def flattened_view(self) -> np.ndarray:
        """长度 d·d + d: 先按行展开的权重,再接bias"""
        return np.concatenate([self.transform.ravel(), self.bias])

    @classmethod
    def identity(cls, dim: int, placement: AdapterPlacement) -> "LinearAdapter":
        return cls(np.eye(dim), np.zeros(dim), placement)

    @classmethod
    def from_flat(cls, flat: np.ndarray, placement: AdapterPlacement) -> "LinearAdapter":
        flat = np.asarray(flat, dtype=np.float64)
        # M = d² + d
        d = int(round((-1 + np.sqrt(1 + 4 * flat.size)) / 2))
        if d * d + d != flat.size:
            raise DimensionMismatchError(f"展开向量长度 {flat.size} 不是 d²+d 形式")
        return cls(flat[:d * d].reshape(d, d), flat[d * d:], placement)

    def to_layer(self) -> LayerParams:
        return LayerParams(self.transform.copy(), self.bias.copy(), Activation.LINEAR,
                           role=_ROLE_OF[self.kind])

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind.value,
            'anchor_layer': self.placement.anchor_layer,
            'dim': self.dim,
            'flat': self.flattened_view().tolist(),
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "LinearAdapter":
        placement = AdapterPlacement(AdapterKind(payload['kind']), int(payload['anchor_layer']))
        return cls.from_flat(np.array(payload['flat'], dtype=np.float64), placement)


def adapter_layer_index(net: Network, kind: AdapterKind) -> Optional[int]:
    """返回kind对应的可自适应层下标; LIN/LHN未插入时返回None"""
    kind = AdapterKind(kind)
    if kind is AdapterKind.LON_DIRECT:
        return net.output_index
    return net.layer_index(_ROLE_OF[kind])


def adapter_vector(net: Network, kind: AdapterKind) -> np.ndarray:
    """自适应参数的展开视图(按行权重 + bias)"""
    index = adapter_layer_index(net, kind)
    if index is None:
        raise ConfigError(f"网络中没有 {AdapterKind(kind).value} adapter")
    layer = net.layers[index]
    return np.concatenate([layer.weights.ravel(), layer.bias])


def adapter_parameter_count(net: Network, kind: AdapterKind) -> int:
    """LIN: F²+F, LHN: H²+H, LON_DIRECT: H·J+J"""
    kind = AdapterKind(kind)
    index = adapter_layer_index(net, kind)
    if index is not None:
        return net.layers[index].size
    d = net.input_dim if kind is AdapterKind.LIN else net.layers[net.output_index].in_dim
    return d * d + d


def extract_adapter(net: Network, kind: AdapterKind) -> LinearAdapter:
    kind = AdapterKind(kind)
    if kind is AdapterKind.LON_DIRECT:
        raise ConfigError("LON_DIRECT没有独立的adapter层")
    index = adapter_layer_index(net, kind)
    if index is None:
        raise ConfigError(f"网络中没有 {kind.value} adapter")
    layer = net.layers[index]
    anchor = 0 if kind is AdapterKind.LIN else index
    return LinearAdapter(layer.weights.copy(), layer.bias.copy(), AdapterPlacement(kind, anchor))


def insert_adapter(net: Network, kind: AdapterKind) -> Tuple[Network, LinearAdapter, LayerMask]:
    """
    插入单位阵初始化、零bias的线性变换层

    插入后网络函数不变

    Args:
        net: 原网络
        kind: LIN 或 LHN

    Returns:
        (增广网络, adapter, 只选中adapter的mask)
    """
    kind = AdapterKind(kind)
    if kind is AdapterKind.LON_DIRECT:
        raise ConfigError("LON_DIRECT不插入新层, 请使用make_output_mask")
    if adapter_layer_index(net, kind) is not None:
        raise ConfigError(f"网络中已存在 {kind.value} adapter")

    if kind is AdapterKind.LIN:
        position = 0
        dim = net.input_dim
    else:
        position = net.output_index
        dim = net.layers[position].in_dim

    adapter = LinearAdapter.identity(dim, AdapterPlacement(kind, position))
    augmented = net.copy()
    augmented.layers.insert(position, adapter.to_layer())
    augmented.validate()
    mask = LayerMask.of(position)
    logger.debug(f"插入 {kind.value} adapter: {dim}×{dim}, 位置 {position}")
    return augmented, adapter, mask


def make_output_mask(net: Network) -> LayerMask:
    """只选中输出层 W_L, b_L"""
    return LayerMask.of(net.output_index)


def prepare_for_adaptation(net: Network, kind: AdapterKind) -> Tuple[Network, LayerMask]:
    """确保adapter存在(已存在则沿用),返回网络与mask"""
    kind = AdapterKind(kind)
    if kind is AdapterKind.LON_DIRECT:
        return net.copy(), make_output_mask(net)
    index = adapter_layer_index(net, kind)
    if index is not None:
        return net.copy(), LayerMask.of(index)
    augmented, _, mask = insert_adapter(net, kind)
    return augmented, mask


def run_adaptation(net: Network, data: LabeledFrameSet, cfg: TrainConfig, kind: AdapterKind,
                   objective: Optional[Objective] = None) -> TrainResult:
    """在冻结其余参数的前提下训练adapter(或输出层)"""
    work, mask = prepare_for_adaptation(net, kind)
    result = sgd_train(work, data, cfg, mask, objective)
    if result.loss_trace:
        logger.debug(
            f"{AdapterKind(kind).value} 自适应: loss {result.initial_loss:.4f} → {result.loss_trace[-1]:.4f}"
        )
    return result


def adapt(net: Network, data: LabeledFrameSet, cfg: TrainConfig, kind: AdapterKind,
          objective: Optional[Objective] = None) -> Network:
    return run_adaptation(net, data, cfg, kind, objective).network


def apply_adapter(net: Network, adapter: LinearAdapter) -> Network:
    """把保存的adapter装回未自适应的网络"""
    augmented, _, mask = insert_adapter(net, adapter.kind)
    (index,) = mask.layers
    if augmented.layers[index].weights.shape != adapter.transform.shape:
        raise DimensionMismatchError(
            f"adapter维度 {adapter.dim} 与网络锚点维度 {augmented.layers[index].in_dim} 不一致"
        )
    augmented.layers[index] = adapter.to_layer()
    return augmented


def _collapse(net: Network, role: str, target_offset: int) -> Network:
    indices = [i for i, layer in enumerate(net.layers) if layer.role == role]
    if not indices:
        raise ConfigError(f"网络中没有 {role} adapter, 无法合并")
    if len(indices) > 1:
        raise ConfigError(f"网络中有 {len(indices)} 个 {role} adapter, 只能合并一个")
    index = indices[0]
    adapter = net.layers[index]
    target = net.layers[index + target_offset]

    collapsed = net.copy()
    # W·(A y + c) + b = (W A) y + (W c + b)
    collapsed.layers[index + target_offset] = LayerParams(
        weights=target.weights @ adapter.weights,
        bias=target.weights @ adapter.bias + target.bias,
        activation=target.activation,
        role=target.role,
    )
    del collapsed.layers[index]
    collapsed.validate()
    return collapsed


def collapse_lhn(net: Network) -> Network:
    """把LHN并入输出层: W_L ← W_L·A, b_L ← W_L·c + b_L"""
    return _collapse(net, ROLE_LHN, 1)


def collapse_lin(net: Network) -> Network:
    """把LIN并入第一层: W_1 ← W_1·A, b_1 ← W_1·c + b_1"""
    return _collapse(net, ROLE_LIN, 1)
