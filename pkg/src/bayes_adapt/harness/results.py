"""
Result table
以 (method, setting, budget, seed) 为键的结果网格
"""
import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["method", "setting", "budget", "seed"]
METRIC_COLUMNS = ["frame_error", "adapt_xent", "uncovered_error", "covered_delta", "uncovered_delta", "mean_kl"]
COLUMNS = KEY_COLUMNS + ["status", "reason"] + METRIC_COLUMNS

STATUS_OK = "ok"
STATUS_FAILED = "failed"


def cell_row(key, status: str = STATUS_OK, reason: str = "",
             metrics: Optional[Dict[str, float]] = None) -> Dict[str, Any]:
    method, setting, budget, seed = key
    row = {
        "method": method, "setting": setting, "budget": int(budget), "seed": int(seed),
        "status": status, "reason": reason,
    }
    for name in METRIC_COLUMNS:
        row[name] = float((metrics or {}).get(name, np.nan))
    return row


class ResultTable:
    """
    结果表(pandas DataFrame封装)

    行顺序由调用方决定, 与单元格完成顺序无关
    """

    def __init__(self, frame: Optional[pd.DataFrame] = None):
        if frame is None:
            frame = pd.DataFrame(columns=COLUMNS)
        missing = [c for c in COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"结果表缺少列: {missing}")
        frame = frame[COLUMNS].reset_index(drop=True)
        frame["reason"] = frame["reason"].fillna("").astype(str)
        self.frame = frame

    @classmethod
    def from_rows(cls, rows: Sequence[Dict[str, Any]]) -> "ResultTable":
        return cls(pd.DataFrame(list(rows), columns=COLUMNS))

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def empty(self) -> bool:
        return self.frame.empty

    @property
    def failed_count(self) -> int:
        return int((self.frame["status"] == STATUS_FAILED).sum())

    def ok(self) -> pd.DataFrame:
        return self.frame[self.frame["status"] == STATUS_OK]

    def keys(self) -> List[tuple]:
        return [tuple(r) for r in self.frame[KEY_COLUMNS].itertuples(index=False, name=None)]

    def row(self, method: str, setting: str, budget: int, seed: int) -> Dict[str, Any]:
        f = self.frame
        hit = f[(f["method"] == method) & (f["setting"] == setting)
                & (f["budget"] == budget) & (f["seed"] == seed)]
        if hit.empty:
            raise KeyError((method, setting, budget, seed))
        return hit.iloc[0].to_dict()

    def to_csv(self, path: Optional[Union[str, Path]] = None) -> str:
        """固定浮点格式导出; 相同结果得到逐字节相同的文本"""
        buffer = io.StringIO()
        self.frame.to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
        text = buffer.getvalue()
        if path is not None:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            logger.info(f"结果表已保存: {path} ({len(self)} 行, 失败 {self.failed_count})")
        return text

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "ResultTable":
        frame = pd.read_csv(path, dtype={"method": str, "setting": str, "status": str, "reason": str},
                            keep_default_na=False, na_values=[""])
        frame["setting"] = frame["setting"].fillna("-")
        return cls(frame)
