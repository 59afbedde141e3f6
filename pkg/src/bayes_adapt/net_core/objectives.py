"""
Pluggable training objectives
交叉熵目标函数及其正则化扩展的统一接口
"""
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .data import one_hot
from .metrics import cross_entropy
from .network import Network, forward

# layer下标 → (dW, db)
Gradients = Dict[int, Tuple[np.ndarray, np.ndarray]]
Precision = Union[float, np.ndarray]


@dataclass
class QuadraticTerm:
    """
    二次惩罚项 0.5·Σ precision·(param − anchor)²

    precision/anchor 可以是标量,也可以与参数同形
    """
    layer: int
    weight_precision: Precision
    weight_anchor: Precision
    bias_precision: Precision
    bias_anchor: Precision

    def gradient(self, net: Network) -> Tuple[np.ndarray, np.ndarray]:
        layer = net.layers[self.layer]
        return (
            self.weight_precision * (layer.weights - self.weight_anchor),
            self.bias_precision * (layer.bias - self.bias_anchor),
        )


class Objective:
    """
    默认目标: 按帧求和的交叉熵

    子类可以改写训练目标分布(targets)、增加惩罚项(penalty)、
    并在每个epoch结束时更新辅助变量(end_epoch)
    """

    name = "xent"

    def bind(self, net: Network) -> None:
        """训练开始前绑定到工作网络"""

    def targets(self, frames: np.ndarray, labels: np.ndarray, class_count: int) -> np.ndarray:
        return one_hot(labels, class_count)

    def penalty(self, net: Network) -> float:
        return 0.0

    def quadratic_terms(self, net: Network) -> List[QuadraticTerm]:
        return []

    def penalty_gradient(self, net: Network) -> Gradients:
        return merge_gradients([
            {term.layer: term.gradient(net)} for term in self.quadratic_terms(net)
        ])

    def end_epoch(self, net: Network) -> None:
        """epoch结束回调"""

    def loss(self, net: Network, frames: np.ndarray, labels: np.ndarray, class_count: int) -> float:
        posteriors = forward(net, frames).activations[-1]
        if not np.all(np.isfinite(posteriors)):
            return float('nan')
        return cross_entropy(posteriors, self.targets(frames, labels, class_count)) + self.penalty(net)


class CrossEntropyObjective(Objective):
    pass


class CompositeObjective(Objective):
    """
    多个目标的组合: 训练目标分布取第一个,惩罚项相加
    """

    def __init__(self, objectives: Sequence[Objective]):
        if not objectives:
            raise ValueError("CompositeObjective至少需要一个目标")
        self.objectives = list(objectives)
        self.name = "+".join(o.name for o in self.objectives)

    def bind(self, net: Network) -> None:
        for objective in self.objectives:
            objective.bind(net)

    def targets(self, frames, labels, class_count):
        return self.objectives[0].targets(frames, labels, class_count)

    def penalty(self, net):
        return float(sum(o.penalty(net) for o in self.objectives))

    def quadratic_terms(self, net):
        terms = []
        for objective in self.objectives:
            terms.extend(objective.quadratic_terms(net))
        return terms

    def penalty_gradient(self, net):
        return merge_gradients([o.penalty_gradient(net) for o in self.objectives])

    def end_epoch(self, net):
        for objective in self.objectives:
            objective.end_epoch(net)


def merge_gradients(parts: Sequence[Gradients]) -> Gradients:
    """按层累加多个梯度字典"""
    merged: Gradients = {}
    for part in parts:
        for index, (dw, db) in part.items():
            if index in merged:
                mw, mb = merged[index]
                merged[index] = (mw + dw, mb + db)
            else:
                merged[index] = (dw, db)
    return merged
