"""
Hierarchical priors over output-row embeddings
固定两层树: 叶子是输出层的行向量(含bias), 父节点θ_s聚合同组叶子

目标函数: xent + (λ2/2)·Σ_s ‖w_s − θ_parent(s)‖² + (λ1/2)·Σ_s ‖θ_s‖²
"""
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, List, Optional, Sequence, Union

import numpy as np

from ..adapt_layers.adapter import AdapterKind, make_output_mask, prepare_for_adaptation
from ..bayes_prior.objectives import MapObjective
from ..bayes_prior.prior import GaussianPrior
from ..net_core.data import LabeledFrameSet
from ..net_core.network import ROLE_LHN, Network
from ..net_core.objectives import CompositeObjective, Gradients, Objective, QuadraticTerm
from ..net_core.trainer import LayerMask, TrainConfig, sgd_train
from ..utils.errors import ConfigError, DimensionMismatchError

logger = logging.getLogger(__name__)

HIER_TARGETS = ("output_rows", "lhn_and_output_rows")
TREE_HEADER = "# bayes-adapt senone tree v1"


@dataclass
class EmbeddingView:
    """输出层每一行权重接上对应bias: J个长度D+1的向量"""
    rows: np.ndarray

    @classmethod
    def from_network(cls, net: Network, layer_index: Optional[int] = None) -> "EmbeddingView":
        layer = net.layers[net.output_index if layer_index is None else layer_index]
        return cls(np.hstack([layer.weights, layer.bias[:, None]]))

    def split(self):
        """拆回 (W, b)"""
        return self.rows[:, :-1], self.rows[:, -1]


def _rows(embeddings) -> np.ndarray:
    if isinstance(embeddings, EmbeddingView):
        return embeddings.rows
    return np.asarray(embeddings, dtype=np.float64)


@dataclass
class SenoneTree:
    """
    Attributes:
        leaf_parent: (J,) 每个叶子的父节点下标
        parent_tags: 父节点对应的组标签
        theta: (S, D+1) 父节点向量
        lambda1: θ向0收缩的强度
        lambda2: 叶子向父节点收缩的强度
    """
    leaf_parent: np.ndarray
    parent_tags: List[str]
    theta: np.ndarray
    lambda1: float
    lambda2: float
    flagged: List[int] = field(default_factory=list)

    def __post_init__(self):
        self.leaf_parent = np.array(self.leaf_parent, dtype=np.int64)
        self.theta = np.array(self.theta, dtype=np.float64)
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError(f"λ1/λ2不能为负: {self.lambda1}, {self.lambda2}")
        S = len(self.parent_tags)
        if self.theta.ndim != 2 or self.theta.shape[0] != S:
            raise DimensionMismatchError(f"theta形状 {self.theta.shape} 与父节点数 {S} 不一致")
        if np.any(self.leaf_parent < 0) or np.any(self.leaf_parent >= S):
            raise ValueError("叶子指向不存在的父节点")
        if np.any(np.bincount(self.leaf_parent, minlength=S) == 0):
            raise ValueError("每个父节点至少需要一个叶子")

    @property
    def parent_count(self) -> int:
        return len(self.parent_tags)

    @property
    def leaf_count(self) -> int:
        return self.leaf_parent.size

    @property
    def leaf_counts(self) -> np.ndarray:
        return np.bincount(self.leaf_parent, minlength=self.parent_count)

    def members(self, parent: int) -> np.ndarray:
        return np.flatnonzero(self.leaf_parent == parent)


def update_theta(embeddings, tree: SenoneTree) -> np.ndarray:
    """
    固定叶子向量时θ的闭式最优解(缩放平均)

    θ_s = λ2·Σ_{j∈s} w_j / (λ2·n_s + λ1); 分母为0时θ_s置0并记录

    Returns:
        np.ndarray: (S, D+1) 新的θ
    """
    rows = _rows(embeddings)
    S = tree.parent_count
    sums = np.zeros((S, rows.shape[1]))
    np.add.at(sums, tree.leaf_parent, rows)
    denom = tree.lambda2 * tree.leaf_counts + tree.lambda1
    zero = denom == 0
    tree.flagged = np.flatnonzero(zero).tolist()
    if tree.flagged:
        logger.warning(f"{len(tree.flagged)} 个父节点的分母 λ2·n_s+λ1 为0, θ置为0")
    safe = np.where(zero, 1.0, denom)
    theta = tree.lambda2 * sums / safe[:, None]
    theta[zero] = 0.0
    return theta


def build_tree(group_tags: Sequence[Hashable], lambda1: float, lambda2: float,
               embeddings=None) -> SenoneTree:
    """
    按组标签建立两层树

    Args:
        group_tags: 每个类别(叶子)的组标签
        lambda1, lambda2: 正则强度
        embeddings: 初始化θ用的行向量(J, D+1); 为None时θ为0, 宽度取1

    Returns:
        SenoneTree
    """
    if any(tag is None for tag in group_tags):
        raise ConfigError("存在没有组标签的类别")
    tags = [str(tag) for tag in group_tags]
    parent_tags: List[str] = []
    index_of = {}
    for tag in tags:
        if tag not in index_of:
            index_of[tag] = len(parent_tags)
            parent_tags.append(tag)
    leaf_parent = np.array([index_of[tag] for tag in tags], dtype=np.int64)

    width = 1 if embeddings is None else _rows(embeddings).shape[1]
    tree = SenoneTree(leaf_parent, parent_tags, np.zeros((len(parent_tags), width)), lambda1, lambda2)
    if embeddings is not None:
        rows = _rows(embeddings)
        if rows.shape[0] != tree.leaf_count:
            raise DimensionMismatchError(f"行数 {rows.shape[0]} 与叶子数 {tree.leaf_count} 不一致")
        tree.theta = update_theta(rows, tree)
    logger.info(f"建立两层树: {tree.parent_count} 个父节点, {tree.leaf_count} 个叶子")
    return tree


def hier_penalty(embeddings, tree: SenoneTree) -> float:
    """(λ2/2)·Σ_s ‖w_s − θ_parent(s)‖² + (λ1/2)·Σ_s ‖θ_s‖²"""
    rows = _rows(embeddings)
    diff = rows - tree.theta[tree.leaf_parent]
    return float(tree.lambda2 / 2.0 * np.sum(diff ** 2) + tree.lambda1 / 2.0 * np.sum(tree.theta ** 2))


def hier_row_gradient(embeddings, tree: SenoneTree) -> np.ndarray:
    """惩罚项对叶子行向量的梯度 λ2·(w_s − θ_parent(s))"""
    rows = _rows(embeddings)
    return tree.lambda2 * (rows - tree.theta[tree.leaf_parent])


def theta_gradient(embeddings, tree: SenoneTree) -> np.ndarray:
    """惩罚项对θ的梯度 −λ2·Σ_{j∈s}(w_j − θ_s) + λ1·θ_s"""
    rows = _rows(embeddings)
    diff = rows - tree.theta[tree.leaf_parent]
    grad = np.zeros_like(tree.theta)
    np.add.at(grad, tree.leaf_parent, -tree.lambda2 * diff)
    return grad + tree.lambda1 * tree.theta


@dataclass
class HierConfig:
    lambda1: float = 0.01
    lambda2: float = 0.1
    hier_target: str = "output_rows"
    with_flat_prior: bool = False
    flat_lambda: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.hier_target not in HIER_TARGETS:
            raise ConfigError(f"hier_target必须是 {HIER_TARGETS} 之一, 实际 {self.hier_target}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("λ1/λ2不能为负")


class HierarchicalObjective(Objective):
    """
    对输出层行向量施加树结构先验

    每个epoch结束时用闭式解更新θ
    """

    name = "hier"

    def __init__(self, tree: SenoneTree):
        self.tree = tree

    def bind(self, net: Network) -> None:
        layer = net.layers[net.output_index]
        if self.tree.leaf_count != layer.out_dim:
            raise ConfigError(f"树叶子数 {self.tree.leaf_count} 与输出维度 {layer.out_dim} 不一致")
        if self.tree.theta.shape[1] != layer.in_dim + 1:
            raise ConfigError(f"θ宽度 {self.tree.theta.shape[1]} 与行向量长度 {layer.in_dim + 1} 不一致")

    def penalty(self, net: Network) -> float:
        return hier_penalty(EmbeddingView.from_network(net), self.tree)

    def penalty_gradient(self, net: Network) -> Gradients:
        grad = hier_row_gradient(EmbeddingView.from_network(net), self.tree)
        return {net.output_index: (grad[:, :-1], grad[:, -1])}

    def quadratic_terms(self, net: Network) -> List[QuadraticTerm]:
        anchor = self.tree.theta[self.tree.leaf_parent]
        lam = self.tree.lambda2
        return [QuadraticTerm(net.output_index, lam, anchor[:, :-1], lam, anchor[:, -1])]

    def end_epoch(self, net: Network) -> None:
        self.tree.theta = update_theta(EmbeddingView.from_network(net), self.tree)


def adapt_hier(net: Network, data: LabeledFrameSet, tree: SenoneTree, cfg: HierConfig,
               prior: Optional[GaussianPrior] = None) -> Network:
    """
    树先验下的交替优化: 每个epoch先做SGD更新行向量, 再闭式更新θ

    hier_target:
        output_rows          只自适应输出层
        lhn_and_output_rows  同时自适应LHN与输出层, 惩罚仍作用于输出层行向量

    树只提供叶子到父节点的结构; λ1/λ2取自cfg, θ按起始网络的输出层行向量重新计算

    Args:
        net: 待自适应网络
        data: 自适应数据
        tree: 建在该网络输出层上的树(不会被修改)
        cfg: 正则强度、目标选择与训练配置
        prior: with_flat_prior时LHN上的扁平先验
    """
    out_dim = net.layers[net.output_index].out_dim
    if tree.leaf_count != out_dim:
        raise ConfigError(f"树叶子数 {tree.leaf_count} 与输出维度 {out_dim} 不一致")
    tree = copy.deepcopy(tree)
    tree.lambda1, tree.lambda2 = cfg.lambda1, cfg.lambda2
    tree.theta = update_theta(EmbeddingView.from_network(net), tree)
    objective: Objective = HierarchicalObjective(tree)

    if cfg.hier_target == "output_rows":
        work, mask = net.copy(), make_output_mask(net)
    else:
        work, adapter_mask = prepare_for_adaptation(net, AdapterKind.LHN)
        mask = LayerMask(adapter_mask.layers | {work.output_index})
        if cfg.with_flat_prior:
            if prior is None:
                raise ConfigError("with_flat_prior需要提供LHN先验")
            objective = CompositeObjective([objective, MapObjective(prior, cfg.flat_lambda, AdapterKind.LHN)])
    if cfg.with_flat_prior and cfg.hier_target == "output_rows":
        logger.warning("hier_target=output_rows 时没有LHN, 忽略with_flat_prior")

    result = sgd_train(work, data, cfg.train, mask, objective)
    logger.debug(f"树先验自适应完成 ({cfg.hier_target}), LHN存在: {work.layer_index(ROLE_LHN) is not None}")
    return result.network


def save_tree(tree: SenoneTree, path: Union[str, Path]) -> None:
    """文本格式: 表头、λ1、λ2, 然后每行 "<叶子下标> <父节点标签>" """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [TREE_HEADER, f"lambda1 {tree.lambda1!r}", f"lambda2 {tree.lambda2!r}"]
    for leaf, parent in enumerate(tree.leaf_parent):
        lines.append(f"{leaf} {tree.parent_tags[parent]}")
    path.write_text("\n".join(lines) + "\n", encoding='utf-8')


def load_tree(path: Union[str, Path], embeddings=None) -> SenoneTree:
    """读取树文件; 给出embeddings时重新计算θ"""
    lines = [l.strip() for l in Path(path).read_text(encoding='utf-8').splitlines() if l.strip()]
    if not lines or lines[0] != TREE_HEADER:
        raise ValueError(f"不是树文件: {path}")
    params = {}
    pairs = {}
    for line in lines[1:]:
        key, value = line.split(maxsplit=1)
        if key in ('lambda1', 'lambda2'):
            params[key] = float(value)
        else:
            pairs[int(key)] = value
    if sorted(pairs) != list(range(len(pairs))):
        raise ValueError(f"树文件叶子下标不连续: {path}")
    tags = [pairs[i] for i in range(len(pairs))]
    return build_tree(tags, params['lambda1'], params['lambda2'], embeddings)
