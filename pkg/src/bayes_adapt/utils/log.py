"""
Logging setup
"""
import logging

import coloredlogs

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logging(level: str = 'INFO') -> None:
    """为CLI安装彩色日志"""
    coloredlogs.install(level=level.upper(), fmt=LOG_FORMAT)
    logging.getLogger(__name__).debug(f"日志级别: {level.upper()}")
