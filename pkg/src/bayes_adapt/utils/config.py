"""
Configuration loading
读取YAML配置并与内置默认值深度合并
"""
import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from .errors import ConfigError

logger = logging.getLogger(__name__)


DEFAULT_CONFIG: Dict[str, Any] = {
    # 合成语料
    'corpus': {
        'feature_dim': 16,
        'class_count': 40,
        'group_count': 8,
        'frames_per_class': 100,
        'dev_frames_per_class': 25,
        'class_mean_scale': 6.0,
        'within_group_scale': 2.5,
        'frame_noise': 1.0,
        'frames_per_sentence': 50,
        'seed': 0,
    },
    # 说话人失配
    'shift': {
        'shift_strength': 0.1,
        'bias_scale': 0.5,
        'noise_scale': 0.3,
        'test_frames_per_class': 25,
    },
    # 网络结构: 16→64→64→24(bottleneck)→40
    'network': {
        'hidden_dims': [64, 64],
        'bottleneck_dim': 24,
        'hidden_activation': 'sigmoid',
    },
    'training': {
        'learning_rate': 0.01,
        'batch_size': 32,
        'epochs': 30,
        'shuffle': True,
        'momentum': 0.0,
        'weight_decay': 0.0,
        'penalty_update': 'implicit',
        'workers': 1,
    },
    # learning_rate为null时沿用training.learning_rate
    'adaptation': {
        'learning_rate': None,
        'batch_size': 32,
        'epochs': 20,
    },
    'prior': {
        'speakers': 8,
        'sentences': 40,
        'floor': 1e-6,
        'lambda_grid': [0.1, 1.0, 10.0],
        'lambda_scaling': 'none',
    },
    'kld': {
        'rho_grid': [0.25, 0.5],
    },
    'hier': {
        'lambda1': 0.01,
        'lambda2': 0.1,
        # 默认: LHN上的扁平先验 + 输出层行向量上的树先验, 与MAP_LHN按λ网格配对
        'hier_target': 'lhn_and_output_rows',
        'with_flat_prior': True,
    },
    'plan': {
        'methods': ['BASELINE', 'LIN', 'LIN_KLD', 'MAP_LIN', 'LON', 'LON_KLD',
                    'LHN', 'LHN_KLD', 'MAP_LHN', 'MAP_LHN_HIER'],
        'budgets': [5, 10, 20, 40],
        'seeds': [0, 1, 2],
        'eval_speakers': 2,
        'coverage': 1.0,
    },
    'runtime': {
        'jobs': 1,
        'progress': False,
        'log_level': 'INFO',
    },
    'output_paths': {
        'bundle': 'runs/bundle',
        'results': 'runs/results.csv',
        'corpus': 'runs/corpus',
    },
}


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """递归合并两个dict,override优先"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_config(config_path: Optional[Union[str, Path]] = None) -> Dict[str, Any]:
    """
    加载配置文件(YAML或JSON)

    Args:
        config_path: 配置文件路径,None时返回默认配置

    Returns:
        Dict: 合并默认值后的完整配置

    Raises:
        ConfigError: 文件不存在、扩展名不支持或内容非法
    """
    if config_path is None:
        return copy.deepcopy(DEFAULT_CONFIG)

    path = Path(config_path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            if path.suffix == '.json':
                user_config = json.load(f)
            elif path.suffix in ('.yml', '.yaml'):
                user_config = yaml.safe_load(f)
            else:
                raise ConfigError(f"不支持的配置文件扩展名: {path}")
    except FileNotFoundError:
        raise ConfigError(f"配置文件不存在: {path}")
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"配置文件解析失败 {path}: {e}")

    if user_config is None:
        user_config = {}
    if not isinstance(user_config, dict):
        raise ConfigError(f"配置文件顶层必须是映射: {path}")

    unknown = set(user_config) - set(DEFAULT_CONFIG)
    if unknown:
        logger.warning(f"忽略未知配置段: {sorted(unknown)}")

    config = deep_merge(DEFAULT_CONFIG, user_config)
    logger.info(f"已加载配置: {path}")
    return config


def config_hash(config: Dict[str, Any]) -> str:
    """配置的SHA-256指纹(键排序后的JSON)"""
    canonical = json.dumps(config, sort_keys=True, ensure_ascii=False, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def save_config(config: Dict[str, Any], path: Union[str, Path]) -> None:
    """保存配置为YAML"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        yaml.safe_dump(config, f, allow_unicode=True, sort_keys=False)
