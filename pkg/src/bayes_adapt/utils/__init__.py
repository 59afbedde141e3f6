from .config import DEFAULT_CONFIG, config_hash, deep_merge, load_config, save_config
from .errors import (
    BayesAdaptError,
    BundleError,
    ConfigError,
    DimensionMismatchError,
    DivergenceError,
)
from .log import setup_logging
from .seeding import derive_seed

__all__ = [
    "DEFAULT_CONFIG", "config_hash", "deep_merge", "load_config", "save_config",
    "BayesAdaptError", "BundleError", "ConfigError", "DimensionMismatchError",
    "DivergenceError", "setup_logging", "derive_seed",
]
