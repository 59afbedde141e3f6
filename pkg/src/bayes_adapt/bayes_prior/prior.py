"""
Empirical-Bayes prior over adapter weights
对每个训练说话人做有监督自适应,用得到的变换向量估计对角高斯先验
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Hashable, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

from ..adapt_layers.adapter import AdapterKind, adapt, adapter_vector
from ..net_core.data import LabeledFrameSet
from ..net_core.network import Network
from ..net_core.trainer import TrainConfig
from ..utils.errors import BayesAdaptError, ConfigError, DimensionMismatchError, DivergenceError

logger = logging.getLogger(__name__)

DEFAULT_VAR_FLOOR = 1e-6
PRIOR_FORMAT = "bayes-adapt-prior"
PRIOR_VERSION = 1


@dataclass
class WeightVectorSample:
    """单个条件(说话人)自适应后的展开变换向量"""
    condition_id: Hashable
    w: np.ndarray
    kind: AdapterKind

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64)
        self.kind = AdapterKind(self.kind)


@dataclass
class GaussianPrior:
    """
    对角协方差高斯先验 N(μ, diag(var))

    只存方差向量,不构造完整协方差矩阵
    """
    mean: np.ndarray
    var: np.ndarray
    floor: float = DEFAULT_VAR_FLOOR
    kind: AdapterKind = AdapterKind.LHN

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=np.float64)
        self.var = np.array(self.var, dtype=np.float64)
        self.kind = AdapterKind(self.kind)
        if not self.floor > 0:
            raise ConfigError(f"方差下限必须为正, 实际 {self.floor}")
        if self.mean.ndim != 1 or self.mean.shape != self.var.shape:
            raise DimensionMismatchError(f"mean/var形状不一致: {self.mean.shape} vs {self.var.shape}")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.var))):
            raise ValueError("先验包含非有限值")
        if np.any(self.var < self.floor):
            raise ValueError("先验方差低于下限")

    @property
    def dim(self) -> int:
        return self.mean.size

    @classmethod
    def standard(cls, dim: int, kind: AdapterKind = AdapterKind.LHN) -> "GaussianPrior":
        """标准高斯 N(0, I), 此时MAP退化为L2正则"""
        return cls(np.zeros(dim), np.ones(dim), DEFAULT_VAR_FLOOR, kind)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'format': PRIOR_FORMAT,
            'version': PRIOR_VERSION,
            'kind': self.kind.value,
            'dim': self.dim,
            'mean': self.mean.tolist(),
            'var': self.var.tolist(),
            'floor': self.floor,
        }

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "GaussianPrior":
        if payload.get('format') != PRIOR_FORMAT or payload.get('version') != PRIOR_VERSION:
            raise ValueError(f"不是可识别的先验文件: {payload.get('format')} v{payload.get('version')}")
        prior = cls(payload['mean'], payload['var'], payload['floor'], payload['kind'])
        if prior.dim != payload['dim']:
            raise DimensionMismatchError(f"先验长度 {prior.dim} 与声明的 {payload['dim']} 不一致")
        return prior


def fit_prior(samples: Sequence[WeightVectorSample], floor: float = DEFAULT_VAR_FLOOR) -> GaussianPrior:
    """
    最大似然估计均值与对角方差

    μ = (1/N) Σ w_i,  var_m = (1/N) Σ (w_i,m − μ_m)², 再按floor截断

    Args:
        samples: N ≥ 2 个等长样本
        floor: 方差下限

    Returns:
        GaussianPrior
    """
    if len(samples) < 2:
        raise ValueError(f"至少需要2个样本, 实际 {len(samples)}")
    lengths = {s.w.size for s in samples}
    if len(lengths) != 1:
        raise DimensionMismatchError(f"样本长度不一致: {sorted(lengths)}")
    kinds = {s.kind for s in samples}
    if len(kinds) != 1:
        raise ValueError(f"样本来自不同的adapter类型: {sorted(k.value for k in kinds)}")

    stacked = np.vstack([s.w for s in samples])
    mean = stacked.mean(axis=0)
    var = ((stacked - mean) ** 2).mean(axis=0)
    floored = int(np.sum(var < floor))
    if floored:
        logger.debug(f"{floored}/{var.size} 个方差分量被截断到 {floor}")
    var = np.maximum(var, floor)
    logger.info(f"先验估计完成: N={len(samples)}, M={mean.size}, 平均方差 {var.mean():.3e}")
    return GaussianPrior(mean, var, floor, kinds.pop())


def gaussianity_report(samples: Sequence[WeightVectorSample]) -> pd.DataFrame:
    """
    每个分量的偏度与超额峰度,用于观察权重分布是否近似高斯

    仅作诊断,不参与先验估计
    """
    frame = pd.DataFrame(np.vstack([s.w for s in samples]))
    report = pd.DataFrame({
        'component': frame.columns,
        'mean': frame.mean().to_numpy(),
        'std': frame.std(ddof=0).to_numpy(),
        'skewness': frame.skew().to_numpy(),
        'excess_kurtosis': frame.kurt().to_numpy(),
    })
    logger.info(
        f"高斯性诊断: |偏度|中位数 {report['skewness'].abs().median():.3f}, "
        f"|超额峰度|中位数 {report['excess_kurtosis'].abs().median():.3f}"
    )
    return report


def harvest_speaker_transforms(
    base_net: Network,
    condition_sets: Mapping[Hashable, LabeledFrameSet],
    cfg: TrainConfig,
    kind: AdapterKind,
    max_workers: int = 1,
) -> List[WeightVectorSample]:
    """
    对每个条件从单位阵初始化单独做自适应,收集展开后的变换向量

    发散的条件被跳过并记录;成功少于2个时报错

    Args:
        base_net: 未自适应的基础网络
        condition_sets: 条件编号 → 该条件的自适应数据
        cfg: 自适应训练配置
        kind: adapter类型
        max_workers: 并行作业数

    Returns:
        List[WeightVectorSample]: 按条件编号顺序排列
    """
    kind = AdapterKind(kind)
    if len(condition_sets) < 2:
        raise ConfigError(f"估计先验至少需要2个条件, 实际 {len(condition_sets)}")

    condition_ids = list(condition_sets.keys())

    def job(condition_id):
        try:
            adapted = adapt(base_net, condition_sets[condition_id], cfg, kind)
        except DivergenceError as e:
            logger.warning(f"条件 {condition_id} 自适应发散, 跳过: {e}")
            return None
        return WeightVectorSample(condition_id, adapter_vector(adapted, kind), kind)

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(job, condition_ids))
    else:
        results = [job(c) for c in condition_ids]

    samples = [s for s in results if s is not None]
    if len(samples) < 2:
        raise BayesAdaptError(f"只有 {len(samples)} 个条件自适应成功, 无法估计先验")
    logger.info(f"收集到 {len(samples)}/{len(condition_ids)} 个 {kind.value} 变换样本")
    return samples


def save_prior(prior: GaussianPrior, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(prior.to_dict(), f)
    logger.info(f"先验已保存到: {path}")


def load_prior(path: Union[str, Path]) -> GaussianPrior:
    with open(path, 'r', encoding='utf-8') as f:
        return GaussianPrior.from_dict(json.load(f))


def save_samples(samples: Sequence[WeightVectorSample], path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = [
        {'condition_id': str(s.condition_id), 'kind': s.kind.value, 'w': s.w.tolist()}
        for s in samples
    ]
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f)
    logger.info(f"{len(samples)} 个样本已保存到: {path}")


def load_samples(path: Union[str, Path]) -> List[WeightVectorSample]:
    with open(path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    return [WeightVectorSample(e['condition_id'], e['w'], e['kind']) for e in payload]
