"""
Backpropagation and mini-batch SGD
按层mask冻结参数的反向传播与小批量随机梯度下降
"""
import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..utils.errors import ConfigError, DimensionMismatchError, DivergenceError
from .data import LabeledFrameSet, one_hot
from .metrics import cross_entropy
from .network import Activation, ForwardCache, Network, forward
from .objectives import CrossEntropyObjective, Gradients, Objective, QuadraticTerm, merge_gradients

logger = logging.getLogger(__name__)

PENALTY_UPDATES = ("explicit", "implicit")


@dataclass(frozen=True)
class LayerMask:
    """可训练层选择器(层下标集合)"""
    layers: FrozenSet[int]

    @classmethod
    def of(cls, *indices: int) -> "LayerMask":
        return cls(frozenset(int(i) for i in indices))

    @classmethod
    def all_layers(cls, net: Network) -> "LayerMask":
        return cls(frozenset(range(net.depth)))

    def __contains__(self, index: int) -> bool:
        return index in self.layers

    def validate(self, net: Network) -> None:
        if not self.layers:
            raise ConfigError("mask不能为空")
        bad = [i for i in self.layers if i < 0 or i >= net.depth]
        if bad:
            raise ConfigError(f"mask包含不存在的层: {sorted(bad)}")

    def cardinality(self, net: Network) -> int:
        return sum(net.layers[i].size for i in self.layers)


@dataclass
class TrainConfig:
    """
    SGD配置

    penalty_update:
        explicit - 二次惩罚项梯度并入普通梯度步
        implicit - 二次惩罚项以闭式近端步更新,对任意大的precision都稳定
    """
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 10
    rng_seed: int = 0
    shuffle: bool = True
    momentum: float = 0.0
    weight_decay: float = 0.0
    penalty_update: str = "implicit"
    workers: int = 1
    show_progress: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate必须为正, 实际 {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size必须为正, 实际 {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs不能为负, 实际 {self.epochs}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum必须在[0, 1)内, 实际 {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay不能为负, 实际 {self.weight_decay}")
        if self.penalty_update not in PENALTY_UPDATES:
            raise ConfigError(f"penalty_update必须是 {PENALTY_UPDATES} 之一")
        if self.workers < 1:
            raise ConfigError(f"workers必须为正, 实际 {self.workers}")

    @classmethod
    def from_config(cls, section: Dict[str, Any], rng_seed: int = 0, **overrides) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        values = {k: v for k, v in section.items() if k in names and v is not None}
        values['rng_seed'] = rng_seed
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigError(f"训练配置非法: {e}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrainResult:
    network: Network
    loss_trace: List[float] = field(default_factory=list)
    initial_loss: float = float('nan')


def backward(
    net: Network,
    frames: np.ndarray,
    targets: np.ndarray,
    mask: LayerMask,
    cache: Optional[ForwardCache] = None,
) -> Gradients:
    """
    反向传播,只为mask选中的层返回梯度

    梯度对batch内各帧求和,与按帧求和的交叉熵一致

    Args:
        net: 网络
        frames: (T, F) 输入帧
        targets: (T,) 类别下标或 (T, J) 软目标
        mask: 可训练层
        cache: 已有的前向缓存

    Returns:
        Gradients: {层下标: (dW, db)}
    """
    mask.validate(net)
    if cache is None:
        cache = forward(net, frames)
    posteriors = cache.activations[-1]
    targets = np.asarray(targets)
    if targets.ndim == 1:
        targets = one_hot(targets, net.output_dim)
    if targets.shape != posteriors.shape:
        raise DimensionMismatchError(f"目标形状 {targets.shape} 与后验 {posteriors.shape} 不一致")

    lowest = min(mask.layers)
    # softmax + 交叉熵: 输出层pre-activation的梯度为 y − p̃
    delta = posteriors - targets
    grads: Gradients = {}
    for i in range(net.depth - 1, lowest - 1, -1):
        if i in mask:
            grads[i] = (delta.T @ cache.activations[i], delta.sum(axis=0))
        if i > lowest:
            delta = delta @ net.layers[i].weights
            if net.layers[i - 1].activation is Activation.SIGMOID:
                y = cache.activations[i]
                delta = delta * y * (1.0 - y)
    return grads


class SGDTrainer:
    """小批量SGD训练器"""

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg

    def train(
        self,
        net: Network,
        data: LabeledFrameSet,
        mask: Optional[LayerMask] = None,
        objective: Optional[Objective] = None,
    ) -> TrainResult:
        """
        训练网络副本,输入网络不会被修改

        Args:
            net: 初始网络
            data: 训练帧
            mask: 可训练层, 默认全部
            objective: 目标函数, 默认交叉熵

        Returns:
            TrainResult: 训练后网络及每个epoch的loss
        """
        cfg = self.cfg
        work = net.copy()
        mask = mask or LayerMask.all_layers(work)
        mask.validate(work)
        if work.output_dim != data.class_count:
            raise DimensionMismatchError(
                f"网络输出维度 {work.output_dim} 与类别数 {data.class_count} 不一致"
            )
        objective = objective or CrossEntropyObjective()
        objective.bind(work)

        J = data.class_count
        initial_loss = objective.loss(work, data.frames, data.targets, J)
        result = TrainResult(network=work, initial_loss=initial_loss)
        if cfg.epochs == 0:
            return result

        rng = np.random.default_rng(cfg.rng_seed)
        T = data.frame_count
        batch_size = min(cfg.batch_size, T)
        velocity = {
            i: (np.zeros_like(work.layers[i].weights), np.zeros_like(work.layers[i].bias))
            for i in mask.layers
        }

        epochs = tqdm(range(cfg.epochs), desc=f"SGD[{objective.name}]", disable=not cfg.show_progress)
        for epoch in epochs:
            order = rng.permutation(T) if cfg.shuffle else np.arange(T)
            for batch, start in enumerate(range(0, T, batch_size)):
                # 最后一个不满的batch照常使用
                idx = order[start:start + batch_size]
                frames = data.frames[idx]
                targets = objective.targets(frames, data.targets[idx], J)
                grads, batch_loss = self._batch_gradient(work, frames, targets, mask)
                if not np.isfinite(batch_loss):
                    raise DivergenceError(epoch, batch, batch_loss)
                self._apply_update(work, grads, objective, mask, velocity)
                if not all(work.layers[i].is_finite() for i in mask.layers):
                    raise DivergenceError(epoch, batch, float('nan'))

            objective.end_epoch(work)
            epoch_loss = objective.loss(work, data.frames, data.targets, J)
            if not np.isfinite(epoch_loss):
                raise DivergenceError(epoch, -1, epoch_loss)
            result.loss_trace.append(epoch_loss)
            logger.debug(f"epoch {epoch + 1}/{cfg.epochs}: loss={epoch_loss:.6f}")

        return result

    def _batch_gradient(self, net: Network, frames: np.ndarray, targets: np.ndarray,
                        mask: LayerMask) -> Tuple[Gradients, float]:
        workers = min(self.cfg.workers, frames.shape[0])
        if workers <= 1:
            return _chunk_gradient(net, frames, targets, mask)

        # 按行切块并行求梯度,浮点求和顺序与单线程不同
        chunks = np.array_split(np.arange(frames.shape[0]), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _chunk_gradient(net, frames[c], targets[c], mask), chunks))
        return merge_gradients([g for g, _ in parts]), float(sum(l for _, l in parts))

    def _decay_terms(self, mask: LayerMask) -> List[QuadraticTerm]:
        wd = self.cfg.weight_decay
        if wd == 0:
            return []
        return [QuadraticTerm(i, wd, 0.0, wd, 0.0) for i in sorted(mask.layers)]

    def _apply_update(self, net: Network, grads: Gradients, objective: Objective,
                      mask: LayerMask, velocity: Dict[int, Tuple[np.ndarray, np.ndarray]]) -> None:
        cfg = self.cfg
        lr = cfg.learning_rate
        decay = self._decay_terms(mask)

        # 惩罚项全部基于更新前的参数计算
        if cfg.penalty_update == "explicit":
            penalty = merge_gradients([
                objective.penalty_gradient(net),
                {t.layer: t.gradient(net) for t in decay},
            ])
            terms_by_layer: Dict[int, List[QuadraticTerm]] = {}
        else:
            penalty = {}
            terms_by_layer = _group_terms(objective.quadratic_terms(net) + decay)

        for i in sorted(mask.layers):
            layer = net.layers[i]
            dw, db = grads[i]
            if i in penalty:
                dw = dw + penalty[i][0]
                db = db + penalty[i][1]
            vw, vb = velocity[i]
            vw = cfg.momentum * vw - lr * dw
            vb = cfg.momentum * vb - lr * db
            velocity[i] = (vw, vb)

            terms = terms_by_layer.get(i)
            if terms:
                pw, aw, pb, ab = _combine_terms(terms)
                layer.weights = (layer.weights + vw + lr * aw) / (1.0 + lr * pw)
                layer.bias = (layer.bias + vb + lr * ab) / (1.0 + lr * pb)
            else:
                layer.weights = layer.weights + vw
                layer.bias = layer.bias + vb


def _chunk_gradient(net: Network, frames: np.ndarray, targets: np.ndarray,
                    mask: LayerMask) -> Tuple[Gradients, float]:
    cache = forward(net, frames)
    posteriors = cache.activations[-1]
    if not np.all(np.isfinite(posteriors)):
        return {}, float('nan')
    return backward(net, frames, targets, mask, cache), cross_entropy(posteriors, targets)


def _group_terms(terms: Iterable[QuadraticTerm]) -> Dict[int, List[QuadraticTerm]]:
    grouped: Dict[int, List[QuadraticTerm]] = {}
    for term in terms:
        grouped.setdefault(term.layer, []).append(term)
    return grouped


def _combine_terms(terms: List[QuadraticTerm]):
    """合并同一层的多个二次项: 返回 (Σp_w, Σp_w·a_w, Σp_b, Σp_b·a_b)"""
    pw = aw = pb = ab = 0.0
    for t in terms:
        pw = pw + t.weight_precision
        aw = aw + t.weight_precision * t.weight_anchor
        pb = pb + t.bias_precision
        ab = ab + t.bias_precision * t.bias_anchor
    return pw, aw, pb, ab


def sgd_train(
    net: Network,
    data: LabeledFrameSet,
    cfg: TrainConfig,
    mask: Optional[LayerMask] = None,
    objective: Optional[Objective] = None,
) -> TrainResult:
    return SGDTrainer(cfg).train(net, data, mask, objective)
