"""
Result reporting
对齐的文本表(按输入/输出/隐层变换分组)或CSV, 附各预算下的胜场统计
"""
import io
import logging
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd

from ..utils.errors import BayesAdaptError
from .plan import METHOD_GROUPS, METHOD_SPECS, Method
from .results import METRIC_COLUMNS, ResultTable

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("text", "csv")


def relative_improvement(base_error: float, method_error: float) -> float:
    """(base − method) / base; base为0时无定义, 返回NaN"""
    if base_error == 0:
        return float('nan')
    return (base_error - method_error) / base_error


def _group_of(method: str) -> str:
    try:
        return METHOD_SPECS[Method(method)].group
    except ValueError:
        return "other"


def summarize(table: ResultTable) -> pd.DataFrame:
    """
    按 (method, setting, budget) 汇总成功格子的均值

    Returns:
        DataFrame: 含seeds(成功种子数)、failed与rel_improvement列
    """
    frame = table.frame.copy()
    frame["ok"] = frame["status"] == "ok"
    keys = ["method", "setting", "budget"]
    order = frame[keys].drop_duplicates().reset_index(drop=True)

    ok = frame[frame["ok"]]
    means = ok.groupby(keys, sort=False)[METRIC_COLUMNS].mean().reset_index()
    counts = frame.groupby(keys, sort=False)["ok"].agg(seeds="sum", total="count").reset_index()
    summary = order.merge(counts, on=keys, how="left").merge(means, on=keys, how="left")
    summary["seeds"] = summary["seeds"].astype(int)
    summary["failed"] = summary["total"].astype(int) - summary["seeds"]
    summary = summary.drop(columns=["total"])

    baseline = summary[summary["method"] == Method.BASELINE.value].groupby("budget")["frame_error"].first()
    summary["rel_improvement"] = [
        relative_improvement(baseline[b], e) if b in baseline.index and not np.isnan(baseline[b]) else np.nan
        for b, e in zip(summary["budget"], summary["frame_error"])
    ]
    summary["group"] = summary["method"].map(_group_of)
    rank = {g: i for i, g in enumerate(METHOD_GROUPS)}
    summary["_rank"] = summary["group"].map(lambda g: rank.get(g, len(rank)))
    summary = summary.sort_values("_rank", kind="stable").drop(columns=["_rank"]).reset_index(drop=True)
    return summary[keys + ["seeds", "failed"] + METRIC_COLUMNS + ["rel_improvement", "group"]]


def win_counts(table: ResultTable) -> Dict[int, Dict[str, Tuple[int, int]]]:
    """
    每个预算下各系统(method[setting])的 (胜场, 并列胜场)

    同一种子下错误率最低者得一胜; 多个系统并列最低时各记一次并列, 不记胜
    """
    ok = table.ok()
    result: Dict[int, Dict[str, Tuple[int, int]]] = {}
    for budget, by_budget in ok.groupby("budget", sort=True):
        systems = sorted({_system(r) for r in by_budget[["method", "setting"]].itertuples(index=False)})
        tally = {s: [0, 0] for s in systems}
        for _, by_seed in by_budget.groupby("seed", sort=True):
            best = by_seed["frame_error"].min()
            winners = [_system(r) for r in by_seed[by_seed["frame_error"] == best][["method", "setting"]]
                       .itertuples(index=False)]
            for w in winners:
                tally[w][0 if len(winners) == 1 else 1] += 1
        result[int(budget)] = {s: (t[0], t[1]) for s, t in tally.items()}
    return result


def _system(row) -> str:
    method, setting = row
    return method if setting == "-" else f"{method}[{setting}]"


def ordering_lines(table: ResultTable) -> List[str]:
    """按胜场排序; 胜场相同的系统以 = 连接, 不做任意排名"""
    lines = []
    for budget, tally in win_counts(table).items():
        if len(tally) < 2:
            continue
        by_wins: Dict[int, List[str]] = {}
        for system, (wins, ties) in tally.items():
            label = f"{system} ({wins}" + (f", {ties} tie" if ties else "") + ")"
            by_wins.setdefault(wins, []).append(label)
        ranked = [" = ".join(sorted(by_wins[w])) for w in sorted(by_wins, reverse=True)]
        lines.append(f"budget {budget}: " + " > ".join(ranked))
    return lines


def _text_table(summary: pd.DataFrame) -> str:
    view = pd.DataFrame({
        "method": summary["method"],
        "setting": summary["setting"],
        "budget": summary["budget"],
        "seeds": summary["seeds"],
        "failed": summary["failed"],
        "frame_err%": (summary["frame_error"] * 100).map(lambda v: f"{v:.2f}"),
        "rel_impr%": (summary["rel_improvement"] * 100).map(lambda v: f"{v:.1f}"),
        "xent": summary["adapt_xent"].map(lambda v: f"{v:.4f}"),
        "uncov_err%": (summary["uncovered_error"] * 100).map(lambda v: f"{v:.2f}"),
        "kl": summary["mean_kl"].map(lambda v: f"{v:.4f}"),
    })
    lines = view.to_string(index=False).splitlines()
    header, body = lines[0], lines[1:]
    rule = "-" * len(header)
    out = [header, rule]
    groups = summary["group"].tolist()
    for i, line in enumerate(body):
        if i > 0 and groups[i] != groups[i - 1]:
            out.append(rule)
        out.append(line)
    return "\n".join(out)


def report(table: ResultTable, fmt: str = "text") -> str:
    """
    渲染结果表

    Args:
        table: 结果表(允许含失败格子)
        fmt: text 对齐表格与胜场统计; csv 汇总后的机器可读行

    Returns:
        str: 渲染后的文本

    Raises:
        BayesAdaptError: 结果表为空
    """
    if fmt not in REPORT_FORMATS:
        raise BayesAdaptError(f"不支持的报告格式 {fmt}, 可选 {REPORT_FORMATS}")
    if table.empty:
        raise BayesAdaptError("结果表为空, 无法生成报告")

    summary = summarize(table)
    if fmt == "csv":
        buffer = io.StringIO()
        summary.to_csv(buffer, index=False, float_format="%.6f", lineterminator="\n")
        return buffer.getvalue()

    parts = [_text_table(summary)]
    ordering = ordering_lines(table)
    if ordering:
        parts.append("")
        parts.append("wins per budget (lowest frame error per seed):")
        parts.extend(f"  {line}" for line in ordering)
    if table.failed_count:
        parts.append("")
        parts.append(f"failed cells: {table.failed_count}")
        for row in table.frame[table.frame["status"] != "ok"].itertuples(index=False):
            parts.append(f"  {row.method} {row.setting} budget={row.budget} seed={row.seed}: {row.reason}")
    return "\n".join(parts) + "\n"
