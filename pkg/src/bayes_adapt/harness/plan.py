"""
Experiment plan
方法 × 超参设置 × 预算 × 种子 的实验网格
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from ..adapt_layers import AdapterKind
from ..hier_prior import HIER_TARGETS
from ..utils.errors import ConfigError

logger = logging.getLogger(__name__)

LAMBDA_SCALINGS = ("none", "per_frame")

# 报告中的分组顺序: 基线 / 输入变换 / 输出变换 / 隐层变换
METHOD_GROUPS = ("baseline", "input", "output", "hidden")


class Method(str, Enum):
    BASELINE = "BASELINE"
    LIN = "LIN"
    LIN_KLD = "LIN_KLD"
    MAP_LIN = "MAP_LIN"
    LON = "LON"
    LON_KLD = "LON_KLD"
    LHN = "LHN"
    LHN_KLD = "LHN_KLD"
    MAP_LHN = "MAP_LHN"
    MAP_LHN_HIER = "MAP_LHN_HIER"


@dataclass(frozen=True)
class MethodSpec:
    """方法 → (adapter类型, 正则方式, 报告分组)"""
    kind: Optional[AdapterKind]
    regularizer: str
    group: str


METHOD_SPECS: Dict[Method, MethodSpec] = {
    Method.BASELINE: MethodSpec(None, "none", "baseline"),
    Method.LIN: MethodSpec(AdapterKind.LIN, "none", "input"),
    Method.LIN_KLD: MethodSpec(AdapterKind.LIN, "kld", "input"),
    Method.MAP_LIN: MethodSpec(AdapterKind.LIN, "map", "input"),
    Method.LON: MethodSpec(AdapterKind.LON_DIRECT, "none", "output"),
    Method.LON_KLD: MethodSpec(AdapterKind.LON_DIRECT, "kld", "output"),
    Method.LHN: MethodSpec(AdapterKind.LHN, "none", "hidden"),
    Method.LHN_KLD: MethodSpec(AdapterKind.LHN, "kld", "hidden"),
    Method.MAP_LHN: MethodSpec(AdapterKind.LHN, "map", "hidden"),
    Method.MAP_LHN_HIER: MethodSpec(AdapterKind.LHN, "hier", "hidden"),
}


@dataclass(frozen=True)
class Setting:
    """单个超参设置, label用于结果表的setting列"""
    label: str
    params: Tuple[Tuple[str, float], ...] = ()

    def get(self, name: str, default: Optional[float] = None) -> Optional[float]:
        return dict(self.params).get(name, default)


NO_SETTING = Setting("-")


@dataclass(frozen=True)
class Cell:
    method: Method
    setting: Setting
    budget: int
    seed: int

    @property
    def key(self) -> Tuple[str, str, int, int]:
        return (self.method.value, self.setting.label, self.budget, self.seed)


@dataclass
class ExperimentPlan:
    """
    实验计划

    Attributes:
        methods: 要运行的方法(保持配置顺序)
        budgets: 自适应句子数
        seeds: 种子列表, 每个种子对应一套独立的语料、基础网络与说话人
        eval_speakers: 每个种子的评测说话人数
        coverage: 评测说话人自适应数据覆盖的类别比例
        lambda_grid / rho_grid: MAP与KLD的超参网格
        lambda_scaling: none 直接使用λ; per_frame 用 λ·T
        lambda1 / lambda2: 树先验强度(θ向0 / 叶子向父节点)
        hier_target / with_flat_prior: 树先验作用的参数, 以及是否同时在LHN上用扁平先验
    """
    methods: List[Method]
    budgets: List[int]
    seeds: List[int]
    eval_speakers: int = 2
    coverage: float = 1.0
    lambda_grid: List[float] = field(default_factory=lambda: [1.0])
    rho_grid: List[float] = field(default_factory=lambda: [0.5])
    lambda_scaling: str = "none"
    lambda1: float = 0.01
    lambda2: float = 0.1
    hier_target: str = "lhn_and_output_rows"
    with_flat_prior: bool = True

    def __post_init__(self):
        try:
            self.methods = [Method(m) for m in self.methods]
        except ValueError as e:
            raise ConfigError(f"未知方法: {e}")
        if not self.methods:
            raise ConfigError("plan.methods不能为空")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("plan.methods包含重复方法")
        if not self.seeds:
            raise ConfigError("plan.seeds不能为空")
        if not self.budgets or any(int(b) < 1 for b in self.budgets):
            raise ConfigError(f"plan.budgets必须是非空的正整数列表, 实际 {self.budgets}")
        self.budgets = [int(b) for b in self.budgets]
        self.seeds = [int(s) for s in self.seeds]
        if self.eval_speakers < 1:
            raise ConfigError("plan.eval_speakers必须≥1")
        if not 0.0 < self.coverage <= 1.0:
            raise ConfigError(f"plan.coverage必须在(0, 1]内, 实际 {self.coverage}")
        if not self.lambda_grid or any(lam < 0 for lam in self.lambda_grid):
            raise ConfigError("prior.lambda_grid必须非空且非负")
        if not self.rho_grid or any(not 0.0 <= rho <= 1.0 for rho in self.rho_grid):
            raise ConfigError("kld.rho_grid必须非空且在[0, 1]内")
        if self.lambda_scaling not in LAMBDA_SCALINGS:
            raise ConfigError(f"lambda_scaling必须是 {LAMBDA_SCALINGS} 之一")
        if self.hier_target not in HIER_TARGETS:
            raise ConfigError(f"hier_target必须是 {HIER_TARGETS} 之一")

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "ExperimentPlan":
        plan = config.get('plan', {})
        prior = config.get('prior', {})
        hier = config.get('hier', {})
        try:
            return cls(
                methods=list(plan.get('methods', [])),
                budgets=list(plan.get('budgets', [])),
                seeds=list(plan.get('seeds', [])),
                eval_speakers=int(plan.get('eval_speakers', 2)),
                coverage=float(plan.get('coverage', 1.0)),
                lambda_grid=[float(x) for x in prior.get('lambda_grid', [1.0])],
                rho_grid=[float(x) for x in config.get('kld', {}).get('rho_grid', [0.5])],
                lambda_scaling=prior.get('lambda_scaling', 'none'),
                lambda1=float(hier.get('lambda1', 0.01)),
                lambda2=float(hier.get('lambda2', 0.1)),
                hier_target=hier.get('hier_target', 'lhn_and_output_rows'),
                with_flat_prior=bool(hier.get('with_flat_prior', True)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"计划配置非法: {e}")

    def settings(self, method: Method) -> List[Setting]:
        regularizer = METHOD_SPECS[Method(method)].regularizer
        if regularizer == "map":
            return [Setting(f"lambda={lam:g}", (("lambda", lam),)) for lam in self.lambda_grid]
        if regularizer == "kld":
            return [Setting(f"rho={rho:g}", (("rho", rho),)) for rho in self.rho_grid]
        if regularizer == "hier":
            tree_params = (("lambda1", self.lambda1), ("lambda2", self.lambda2))
            tree_label = f"lambda1={self.lambda1:g},lambda2={self.lambda2:g}"
            if self.hier_uses_flat_prior:
                # 与MAP_LHN同一λ网格逐一配对
                return [Setting(f"lambda={lam:g},{tree_label}", (("lambda", lam),) + tree_params)
                        for lam in self.lambda_grid]
            return [Setting(tree_label, tree_params)]
        return [NO_SETTING]

    def cells(self) -> List[Cell]:
        """按 方法, 设置, 预算, 种子 的顺序展开; BASELINE在每个预算下重复一次"""
        return [
            Cell(method, setting, budget, seed)
            for method in self.methods
            for setting in self.settings(method)
            for budget in self.budgets
            for seed in self.seeds
        ]

    def needed_priors(self) -> List[AdapterKind]:
        kinds = []
        if Method.MAP_LIN in self.methods:
            kinds.append(AdapterKind.LIN)
        needs_lhn = Method.MAP_LHN in self.methods or (
            Method.MAP_LHN_HIER in self.methods and self.hier_uses_flat_prior
        )
        if needs_lhn:
            kinds.append(AdapterKind.LHN)
        return kinds

    @property
    def hier_uses_flat_prior(self) -> bool:
        """树先验是否同时在LHN上使用扁平先验"""
        return self.with_flat_prior and self.hier_target == "lhn_and_output_rows"

    @property
    def needs_tree(self) -> bool:
        return Method.MAP_LHN_HIER in self.methods

    @property
    def max_budget(self) -> int:
        return max(self.budgets)
