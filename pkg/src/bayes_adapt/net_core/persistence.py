"""
Network persistence
网络的JSON格式存取(float按repr写出,读回位级一致)
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from .network import LayerParams, Network

logger = logging.getLogger(__name__)

NETWORK_FORMAT = "bayes-adapt-network"
NETWORK_VERSION = 1


def network_to_dict(net: Network) -> Dict[str, Any]:
    return {
        'format': NETWORK_FORMAT,
        'version': NETWORK_VERSION,
        'input_dim': net.input_dim,
        'layers': [
            {
                'activation': layer.activation.value,
                'role': layer.role,
                'out_dim': layer.out_dim,
                'in_dim': layer.in_dim,
                'weights': layer.weights.ravel().tolist(),
                'bias': layer.bias.tolist(),
            }
            for layer in net.layers
        ],
    }


def network_from_dict(payload: Dict[str, Any]) -> Network:
    if payload.get('format') != NETWORK_FORMAT:
        raise ValueError(f"不是网络文件: format={payload.get('format')}")
    if payload.get('version') != NETWORK_VERSION:
        raise ValueError(f"不支持的网络文件版本: {payload.get('version')}")
    layers = []
    for entry in payload['layers']:
        weights = np.array(entry['weights'], dtype=np.float64).reshape(entry['out_dim'], entry['in_dim'])
        layers.append(LayerParams(
            weights=weights,
            bias=np.array(entry['bias'], dtype=np.float64),
            activation=entry['activation'],
            role=entry['role'],
        ))
    return Network(layers=layers, input_dim=int(payload['input_dim']))


def save_network(net: Network, path: Union[str, Path]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(network_to_dict(net), f)
    logger.info(f"网络已保存到: {path}")


def load_network(path: Union[str, Path]) -> Network:
    with open(path, 'r', encoding='utf-8') as f:
        return network_from_dict(json.load(f))
