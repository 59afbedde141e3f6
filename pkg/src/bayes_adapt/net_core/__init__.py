from .data import LabeledFrameSet, one_hot
from .metrics import cross_entropy, frame_error_rate, per_class_error
from .network import (
    Activation,
    ForwardCache,
    LayerParams,
    Network,
    create_network,
    forward,
    predict_posteriors,
    softmax,
)
from .objectives import CompositeObjective, CrossEntropyObjective, Gradients, Objective, QuadraticTerm
from .persistence import load_network, network_from_dict, network_to_dict, save_network
from .trainer import LayerMask, SGDTrainer, TrainConfig, TrainResult, backward, sgd_train

__all__ = [
    "LabeledFrameSet", "one_hot", "cross_entropy", "frame_error_rate", "per_class_error",
    "Activation", "ForwardCache", "LayerParams", "Network", "create_network", "forward",
    "predict_posteriors", "softmax", "CompositeObjective", "CrossEntropyObjective",
    "Gradients", "Objective", "QuadraticTerm", "load_network", "network_from_dict",
    "network_to_dict", "save_network", "LayerMask", "SGDTrainer", "TrainConfig",
    "TrainResult", "backward", "sgd_train",
]
