"""
Artifact bundle
基础网络、先验、adapter、树与配置保存在同一目录, 由manifest.json索引
"""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from ..adapt_layers import AdapterKind, LinearAdapter
from ..bayes_prior import GaussianPrior, WeightVectorSample, load_prior, load_samples, save_prior, save_samples
from ..hier_prior import EmbeddingView, SenoneTree, load_tree, save_tree
from ..net_core import Network, load_network, save_network
from ..utils.config import config_hash, save_config
from ..utils.errors import BundleError

logger = logging.getLogger(__name__)

BUNDLE_VERSION = 1
MANIFEST = "manifest.json"
CONFIG_FILE = "config.yaml"
BASE_NET_FILE = "base_net.json"
TREE_FILE = "tree.txt"


def prior_file(kind: AdapterKind) -> str:
    return f"prior_{AdapterKind(kind).value}.json"


def samples_file(kind: AdapterKind) -> str:
    return f"samples_{AdapterKind(kind).value}.json"


def adapter_file(name: str) -> str:
    return f"adapters/{name}.json"


@dataclass
class Bundle:
    """
    一次实验的持久化产物

    Attributes:
        config: 完整配置
        base_net: 基础网络
        seed: 生成语料与网络所用的计划种子
        priors: adapter类型 → 先验
        samples: adapter类型 → 收集到的变换样本
        adapters: 名称 → 已自适应的adapter
        tree: 输出层上的两层树
        metrics: 附带记录的评测值(例如dev错误率)
        root: 读取自的目录
    """
    config: Dict[str, Any]
    base_net: Network
    seed: int = 0
    priors: Dict[AdapterKind, GaussianPrior] = field(default_factory=dict)
    samples: Dict[AdapterKind, List[WeightVectorSample]] = field(default_factory=dict)
    adapters: Dict[str, LinearAdapter] = field(default_factory=dict)
    tree: Optional[SenoneTree] = None
    metrics: Dict[str, float] = field(default_factory=dict)
    root: Optional[Path] = None

    def require_prior(self, kind: AdapterKind) -> GaussianPrior:
        """MAP方法需要的先验; 缺失时报错并给出期望的文件路径"""
        kind = AdapterKind(kind)
        if kind not in self.priors:
            expected = (self.root / prior_file(kind)) if self.root else Path(prior_file(kind))
            raise BundleError(f"缺少 {kind.value} 先验文件, 请先运行 harvest 与 fit-prior", str(expected))
        return self.priors[kind]

    def require_samples(self, kind: AdapterKind) -> List[WeightVectorSample]:
        kind = AdapterKind(kind)
        if kind not in self.samples:
            expected = (self.root / samples_file(kind)) if self.root else Path(samples_file(kind))
            raise BundleError(f"缺少 {kind.value} 样本文件, 请先运行 harvest", str(expected))
        return self.samples[kind]


def save_bundle(bundle: Bundle, path: Union[str, Path]) -> Path:
    """
    写出bundle目录

    Returns:
        Path: bundle目录
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    files = [CONFIG_FILE, BASE_NET_FILE]
    save_config(bundle.config, root / CONFIG_FILE)
    save_network(bundle.base_net, root / BASE_NET_FILE)

    for kind, prior in sorted(bundle.priors.items(), key=lambda kv: kv[0].value):
        save_prior(prior, root / prior_file(kind))
        files.append(prior_file(kind))
    for kind, samples in sorted(bundle.samples.items(), key=lambda kv: kv[0].value):
        save_samples(samples, root / samples_file(kind))
        files.append(samples_file(kind))
    for name in sorted(bundle.adapters):
        target = root / adapter_file(name)
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w', encoding='utf-8') as f:
            json.dump(bundle.adapters[name].to_dict(), f)
        files.append(adapter_file(name))
    if bundle.tree is not None:
        save_tree(bundle.tree, root / TREE_FILE)
        files.append(TREE_FILE)

    manifest = {
        'version': BUNDLE_VERSION,
        'seed': bundle.seed,
        'config_hash': config_hash(bundle.config),
        'files': files,
        'metrics': bundle.metrics,
    }
    with open(root / MANIFEST, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
    bundle.root = root
    logger.info(f"bundle已保存: {root} ({len(files)} 个文件)")
    return root


def _read_json(path: Path) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise BundleError(f"文件损坏({e})", str(path))


def load_bundle(path: Union[str, Path], expected_config: Optional[Dict[str, Any]] = None) -> Bundle:
    """
    读取bundle目录

    Args:
        path: bundle目录
        expected_config: 若给出, 其指纹与bundle记录不一致时警告

    Raises:
        BundleError: manifest或其列出的文件缺失/损坏
    """
    root = Path(path)
    manifest_path = root / MANIFEST
    if not manifest_path.is_file():
        raise BundleError("bundle缺少manifest", str(manifest_path))
    manifest = _read_json(manifest_path)
    if manifest.get('version') != BUNDLE_VERSION:
        raise BundleError(f"不支持的bundle版本 {manifest.get('version')}", str(manifest_path))

    files = manifest.get('files', [])
    for name in files:
        if not (root / name).is_file():
            raise BundleError("bundle文件缺失", str(root / name))

    try:
        with open(root / CONFIG_FILE, 'r', encoding='utf-8') as f:
            config = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise BundleError(f"配置文件损坏({e})", str(root / CONFIG_FILE))

    recorded = manifest.get('config_hash')
    if recorded != config_hash(config):
        logger.warning(f"bundle配置指纹不一致(记录 {str(recorded)[:12]}…), 继续加载: {root}")
    if expected_config is not None and recorded != config_hash(expected_config):
        logger.warning(f"当前配置与bundle训练时的配置不同: {root}")

    try:
        base_net = load_network(root / BASE_NET_FILE)
        bundle = Bundle(config=config, base_net=base_net, seed=int(manifest.get('seed', 0)),
                        metrics=dict(manifest.get('metrics', {})), root=root)
        for name in files:
            if name.startswith('prior_'):
                prior = load_prior(root / name)
                bundle.priors[prior.kind] = prior
            elif name.startswith('samples_'):
                kind = AdapterKind(name[len('samples_'):-len('.json')])
                bundle.samples[kind] = load_samples(root / name)
            elif name.startswith('adapters/'):
                adapter = LinearAdapter.from_dict(_read_json(root / name))
                bundle.adapters[Path(name).stem] = adapter
            elif name == TREE_FILE:
                bundle.tree = load_tree(root / name, EmbeddingView.from_network(base_net))
    except BundleError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise BundleError(f"bundle内容非法({e})", str(root))

    logger.info(f"bundle已加载: {root} (先验 {[k.value for k in bundle.priors]}, "
                f"adapter {len(bundle.adapters)} 个, 树 {'有' if bundle.tree else '无'})")
    return bundle
