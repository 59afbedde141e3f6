"""
Error types
项目内统一的异常层次
"""
from typing import Optional


class BayesAdaptError(Exception):
    """所有库内异常的基类"""


class DimensionMismatchError(BayesAdaptError, ValueError):
    """输入维度与网络声明不一致"""


class ConfigError(BayesAdaptError):
    """配置非法(CLI退出码2)"""


class DivergenceError(BayesAdaptError):
    """训练过程中出现非有限loss"""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"训练发散: epoch={epoch}, batch={batch}, loss={loss}")


class BundleError(BayesAdaptError):
    """bundle文件缺失或损坏"""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        if path:
            message = f"{message}: {path}"
        super().__init__(message)
