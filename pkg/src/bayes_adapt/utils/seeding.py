"""
Seed derivation
由基础seed和任意键派生确定性的子seed
"""
import hashlib
from typing import Any


def derive_seed(base_seed: int, *keys: Any) -> int:
    """
    派生子seed

    不使用内置hash(),保证跨进程可复现

    Args:
        base_seed: 基础seed
        *keys: 区分用途的键(如 "prior", 3)

    Returns:
        int: 63位非负整数seed
    """
    text = "/".join([str(int(base_seed))] + [str(k) for k in keys])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
