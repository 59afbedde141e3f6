"""
Bayes-Adapt Pipeline
基础网络训练 → 变换收集 → 先验估计 → 自适应 → 实验计划 → 报告
"""
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from .adapt_layers import AdapterKind, adapt, extract_adapter
from .bayes_prior import KldConfig, MapConfig, adapt_kld, adapt_map, fit_prior, gaussianity_report
from .harness import Bundle, ExperimentPlan, ResultTable, load_bundle, report, run_plan, save_bundle
from .harness.runner import (
    adaptation_train_config,
    build_output_tree,
    corpus_for_seed,
    eval_speakers,
    harvest_prior,
    prior_speakers,
    train_base_network,
)
from .net_core import frame_error_rate
from .speaker_sim import export_frames, gen_base_corpus, truncate_budget
from .utils.config import load_config
from .utils.errors import BundleError, ConfigError
from .utils.seeding import derive_seed

logger = logging.getLogger(__name__)

ADAPT_METHODS = ("plain", "map", "kld")


def _banner(title: str) -> None:
    logger.info("=" * 50)
    logger.info(title)
    logger.info("=" * 50)


class BayesAdaptPipeline:
    """按配置逐步运行的流程, 中间产物都保存在bundle目录"""

    def __init__(self, config: Union[str, Path, Dict[str, Any], None] = None,
                 bundle_path: Optional[Union[str, Path]] = None):
        if isinstance(config, dict):
            self.config = config
        else:
            self.config = load_config(config)
        self.bundle_path = Path(bundle_path or self.config['output_paths']['bundle'])

    def _seed(self, seed: Optional[int]) -> int:
        if seed is not None:
            return int(seed)
        seeds = self.config.get('plan', {}).get('seeds') or [0]
        return int(seeds[0])

    def _load(self) -> Bundle:
        return load_bundle(self.bundle_path, expected_config=self.config)

    def run_train_base(self, seed: Optional[int] = None) -> Bundle:
        """
        步骤1: 生成基础语料, 训练基础网络, 建立输出层的两层树

        Returns:
            Bundle: 已保存到bundle目录
        """
        _banner("步骤1: 训练基础网络")
        seed = self._seed(seed)
        corpus, base_net, dev_error = train_base_network(self.config, seed)
        bundle = Bundle(config=self.config, base_net=base_net, seed=seed,
                        tree=build_output_tree(self.config, corpus, base_net),
                        metrics={'dev_error': dev_error})
        save_bundle(bundle, self.bundle_path)
        logger.info(f"基础网络训练完成, dev错误率 {dev_error:.4f}")
        return bundle

    def run_harvest(self, kind: str = "lhn") -> Bundle:
        """
        步骤2: 在先验说话人池上逐个自适应, 收集变换样本
        """
        _banner(f"步骤2: 收集 {kind} 变换")
        kind = AdapterKind(kind)
        if kind is AdapterKind.LON_DIRECT:
            raise ConfigError("先验只支持lin/lhn两类adapter")
        bundle = self._load()
        corpus = corpus_for_seed(self.config, bundle.seed)
        jobs = int(self.config.get('runtime', {}).get('jobs', 1))
        samples, _ = harvest_prior(self.config, bundle.base_net, corpus, bundle.seed, kind, jobs)
        bundle.samples[kind] = samples
        save_bundle(bundle, self.bundle_path)
        logger.info(f"收集完成: {len(samples)} 个 {kind.value} 样本")
        return bundle

    def run_fit_prior(self, kind: str = "lhn") -> Bundle:
        """
        步骤3: 由收集到的样本估计高斯先验
        """
        _banner(f"步骤3: 估计 {kind} 先验")
        kind = AdapterKind(kind)
        bundle = self._load()
        samples = bundle.require_samples(kind)
        prior = fit_prior(samples, floor=float(self.config.get('prior', {}).get('floor', 1e-6)))
        gaussianity_report(samples)
        bundle.priors[kind] = prior
        save_bundle(bundle, self.bundle_path)
        logger.info(f"先验维度 {prior.dim}, 方差范围 [{prior.var.min():.3g}, {prior.var.max():.3g}]")
        return bundle

    def run_adapt(self, method: str = "plain", kind: str = "lhn", lambda_: Optional[float] = None,
                  rho: Optional[float] = None, speaker: int = 0, budget: Optional[int] = None) -> Dict[str, float]:
        """
        步骤4: 对一个评测说话人做自适应并评测

        Args:
            method: plain / map / kld
            kind: lin / lhn / lon
            lambda_: MAP强度, 默认取lambda_grid第一个值
            rho: KLD插值系数, 默认取rho_grid第一个值
            speaker: 评测说话人编号
            budget: 句子数, 默认取计划中的最大预算

        Returns:
            Dict: 自适应前后的测试错误率
        """
        _banner(f"步骤4: {method} {kind} 自适应")
        if method not in ADAPT_METHODS:
            raise ConfigError(f"method必须是 {ADAPT_METHODS} 之一")
        kind = AdapterKind(kind)
        bundle = self._load()
        plan = ExperimentPlan.from_config(self.config)
        plan.eval_speakers = max(plan.eval_speakers, speaker + 1)
        budget = budget or plan.max_budget
        if budget > plan.max_budget:
            plan.budgets = plan.budgets + [budget]

        corpus = corpus_for_seed(self.config, bundle.seed)
        target = eval_speakers(self.config, plan, corpus, bundle.seed)[speaker]
        data = truncate_budget(target, budget, corpus)
        cfg = adaptation_train_config(self.config, derive_seed(bundle.seed, "adapt-step", method,
                                                               kind.value, speaker))

        if method == "map":
            prior = bundle.require_prior(kind)
            lam = plan.lambda_grid[0] if lambda_ is None else lambda_
            adapted = adapt_map(bundle.base_net, data, prior, MapConfig(lam, cfg), kind)
            tag = f"map_{kind.value}_lambda{lam:g}"
        elif method == "kld":
            r = plan.rho_grid[0] if rho is None else rho
            adapted = adapt_kld(bundle.base_net, data, KldConfig(r, cfg), kind)
            tag = f"kld_{kind.value}_rho{r:g}"
        else:
            adapted = adapt(bundle.base_net, data, cfg, kind)
            tag = f"plain_{kind.value}"

        before = frame_error_rate(bundle.base_net, target.test)
        after = frame_error_rate(adapted, target.test)
        name = f"{tag}_spk{speaker}_b{budget}"
        if kind is AdapterKind.LON_DIRECT:
            logger.info("LON直接调整输出层, 不单独保存adapter")
        else:
            bundle.adapters[name] = extract_adapter(adapted, kind)
            save_bundle(bundle, self.bundle_path)
        logger.info(f"说话人 {speaker}, {budget} 句: 测试错误率 {before:.4f} → {after:.4f}")
        return {'before': before, 'after': after}

    def run_plan(self, results_path: Optional[Union[str, Path]] = None, reuse_bundle: bool = False) -> ResultTable:
        """
        步骤5: 执行完整实验计划并保存结果表

        Args:
            results_path: 结果CSV路径, 默认output_paths.results
            reuse_bundle: 若bundle存在且其种子在计划内, 沿用其中的基础网络/先验/树
        """
        _banner("步骤5: 执行实验计划")
        plan = ExperimentPlan.from_config(self.config)
        preloaded = {}
        if reuse_bundle:
            try:
                bundle = self._load()
                if bundle.seed in plan.seeds:
                    preloaded[bundle.seed] = bundle
            except BundleError as e:
                logger.warning(f"无法沿用bundle, 全部重新训练: {e}")
        table = run_plan(self.config, plan, preloaded)
        table.to_csv(results_path or self.config['output_paths']['results'])
        return table

    def run_report(self, results_path: Optional[Union[str, Path]] = None, fmt: str = "text") -> str:
        """
        步骤6: 渲染结果表
        """
        path = Path(results_path or self.config['output_paths']['results'])
        if not path.is_file():
            raise ConfigError(f"结果文件不存在: {path}")
        return report(ResultTable.from_csv(path), fmt)

    def run_export_corpus(self, seed: Optional[int] = None, out_dir: Optional[Union[str, Path]] = None) -> Path:
        """
        导出基础语料与评测/先验说话人的帧文件(CSV)
        """
        _banner("导出合成语料")
        seed = self._seed(seed)
        out = Path(out_dir or self.config['output_paths']['corpus'])
        plan = ExperimentPlan.from_config(self.config)
        corpus = corpus_for_seed(self.config, seed)
        train, dev = gen_base_corpus(corpus)
        export_frames(train, out / "train.csv")
        export_frames(dev, out / "dev.csv")
        for spk in eval_speakers(self.config, plan, corpus, seed):
            export_frames(spk.adaptation, out / f"eval_{spk.speaker_id}_adapt.csv")
            export_frames(spk.test, out / f"eval_{spk.speaker_id}_test.csv")
        for spk in prior_speakers(self.config, corpus, seed):
            export_frames(spk.adaptation, out / f"prior_{spk.speaker_id}_adapt.csv")
        logger.info(f"语料已导出到: {out}")
        return out

    def run_full_pipeline(self) -> ResultTable:
        """训练 → 收集/估计计划需要的先验 → 执行计划(沿用bundle) → 报告"""
        logger.info("开始运行Bayes-Adapt完整流程")
        self.run_train_base()
        plan = ExperimentPlan.from_config(self.config)
        for kind in plan.needed_priors():
            self.run_harvest(kind.value)
            self.run_fit_prior(kind.value)
        table = self.run_plan(reuse_bundle=True)
        logger.info("\n" + report(table, "text"))
        _banner("Bayes-Adapt流程运行完成!")
        return table
