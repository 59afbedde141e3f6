"""
pytest共享配置: 把src加入路径, 注册hypothesis配置, 提供小网络与小语料
"""
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# 添加src到路径
sys.path.insert(0, str(Path(__file__).parent / 'src'))

from bayes_adapt.net_core import LabeledFrameSet, TrainConfig, create_network  # noqa: E402

settings.register_profile(
    "bayes-adapt", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("bayes-adapt")


def random_frames(seed: int, frame_count: int, feature_dim: int, class_count: int) -> LabeledFrameSet:
    rng = np.random.default_rng(seed)
    return LabeledFrameSet(
        frames=rng.standard_normal((frame_count, feature_dim)),
        targets=rng.integers(0, class_count, size=frame_count),
        class_count=class_count,
    )


@pytest.fixture
def small_net():
    """4 → 6 → 5 → 3, 最后隐层5维"""
    return create_network([4, 6, 5, 3], seed=7)


@pytest.fixture
def small_data():
    return random_frames(11, 40, 4, 3)


@pytest.fixture
def fast_cfg():
    return TrainConfig(learning_rate=0.05, batch_size=8, epochs=3, rng_seed=5)


@pytest.fixture
def tiny_config(tmp_path):
    """能在几秒内跑完整个实验计划的配置"""
    return {
        'corpus': {
            'feature_dim': 4, 'class_count': 6, 'group_count': 2, 'frames_per_class': 20,
            'dev_frames_per_class': 5, 'class_mean_scale': 4.0, 'within_group_scale': 1.5,
            'frame_noise': 0.5, 'frames_per_sentence': 10, 'seed': 3,
        },
        'shift': {'shift_strength': 0.2, 'bias_scale': 0.5, 'noise_scale': 0.2, 'test_frames_per_class': 5},
        'network': {'hidden_dims': [8], 'bottleneck_dim': 4, 'hidden_activation': 'sigmoid'},
        'training': {'learning_rate': 0.02, 'batch_size': 16, 'epochs': 3, 'shuffle': True, 'momentum': 0.0,
                     'weight_decay': 0.0, 'penalty_update': 'implicit', 'workers': 1},
        'adaptation': {'learning_rate': None, 'batch_size': 8, 'epochs': 2},
        'prior': {'speakers': 3, 'sentences': 2, 'floor': 1e-6, 'lambda_grid': [1.0], 'lambda_scaling': 'none'},
        'kld': {'rho_grid': [0.5]},
        'hier': {'lambda1': 1.0, 'lambda2': 0.05, 'hier_target': 'output_rows', 'with_flat_prior': False},
        'plan': {
            'methods': ['BASELINE', 'LIN', 'LIN_KLD', 'MAP_LIN', 'LON', 'LON_KLD',
                        'LHN', 'LHN_KLD', 'MAP_LHN', 'MAP_LHN_HIER'],
            'budgets': [1, 2], 'seeds': [0], 'eval_speakers': 1, 'coverage': 1.0,
        },
        'runtime': {'jobs': 1, 'progress': False, 'log_level': 'INFO'},
        'output_paths': {
            'bundle': str(tmp_path / 'bundle'),
            'results': str(tmp_path / 'results.csv'),
            'corpus': str(tmp_path / 'corpus'),
        },
    }
