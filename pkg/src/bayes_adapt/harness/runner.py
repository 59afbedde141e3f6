"""
Experiment runner
按计划逐格执行: 训练(或读取)基础网络 → 收集先验 → 自适应 → 评测
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
from tqdm import tqdm

from ..adapt_layers import AdapterKind, adapt
from ..bayes_prior import (
    GaussianPrior,
    KldConfig,
    MapConfig,
    adapt_kld,
    adapt_map,
    fit_prior,
    harvest_speaker_transforms,
)
from ..hier_prior import EmbeddingView, HierConfig, SenoneTree, adapt_hier, build_tree
from ..net_core import (
    Activation,
    LabeledFrameSet,
    Network,
    TrainConfig,
    create_network,
    cross_entropy,
    frame_error_rate,
    predict_posteriors,
    sgd_train,
)
from ..speaker_sim import (
    AdaptationBudget,
    CorpusSpec,
    ShiftSpec,
    SpeakerData,
    forgetting_probe,
    gen_base_corpus,
    gen_speaker,
    make_speaker_shift,
    truncate_budget,
)
from ..utils.errors import BayesAdaptError, ConfigError
from ..utils.seeding import derive_seed
from .plan import METHOD_SPECS, Cell, ExperimentPlan, Method
from .results import STATUS_FAILED, ResultTable, cell_row

logger = logging.getLogger(__name__)

PRIOR_SPEAKER_BASE = 1000


@dataclass
class SeedContext:
    """单个计划种子共享的语料、基础网络、说话人、先验与树"""
    seed: int
    corpus: CorpusSpec
    base_net: Network
    dev_error: float
    speakers: List[SpeakerData]
    priors: Dict[AdapterKind, GaussianPrior] = field(default_factory=dict)
    tree: Optional[SenoneTree] = None


def corpus_for_seed(config: Dict[str, Any], seed: int) -> CorpusSpec:
    base_seed = int(config.get('corpus', {}).get('seed', 0))
    return CorpusSpec.from_config(config.get('corpus', {}), seed=derive_seed(base_seed, "plan", seed))


def network_dims(config: Dict[str, Any], corpus: CorpusSpec) -> List[int]:
    net_cfg = config.get('network', {})
    dims = [corpus.feature_dim] + [int(h) for h in net_cfg.get('hidden_dims', [])]
    if net_cfg.get('bottleneck_dim'):
        dims.append(int(net_cfg['bottleneck_dim']))
    return dims + [corpus.class_count]


def base_train_config(config: Dict[str, Any], seed: int) -> TrainConfig:
    return TrainConfig.from_config(
        config.get('training', {}), rng_seed=derive_seed(seed, "train-base"),
        show_progress=bool(config.get('runtime', {}).get('progress', False)),
    )


def adaptation_train_config(config: Dict[str, Any], rng_seed: int) -> TrainConfig:
    """training段打底, adaptation段中非空的键覆盖"""
    section = dict(config.get('training', {}))
    section.update({k: v for k, v in config.get('adaptation', {}).items() if v is not None})
    return TrainConfig.from_config(section, rng_seed=rng_seed)


def train_base_network(config: Dict[str, Any], seed: int):
    """
    生成基础语料并训练基础网络

    Returns:
        (corpus, network, dev错误率)
    """
    corpus = corpus_for_seed(config, seed)
    train, dev = gen_base_corpus(corpus)
    try:
        activation = Activation(config.get('network', {}).get('hidden_activation', 'sigmoid'))
    except ValueError as e:
        raise ConfigError(f"未知激活函数: {e}")
    net = create_network(network_dims(config, corpus), seed=derive_seed(seed, "init"),
                         hidden_activation=activation)
    result = sgd_train(net, train, base_train_config(config, seed))
    dev_error = frame_error_rate(result.network, dev)
    logger.info(f"种子 {seed}: 基础网络 {network_dims(config, corpus)}, dev错误率 {dev_error:.4f}")
    return corpus, result.network, dev_error


def covered_classes(corpus: CorpusSpec, coverage: float, seed: int, speaker: int) -> np.ndarray:
    J = corpus.class_count
    if coverage >= 1.0:
        return np.arange(J)
    n = max(1, int(round(coverage * J)))
    rng = np.random.default_rng(derive_seed(seed, "coverage", speaker))
    return np.sort(rng.choice(J, size=n, replace=False))


def make_speakers(config: Dict[str, Any], corpus: CorpusSpec, seed: int, count: int,
                  sentences: int, pool: str, coverage: float = 1.0,
                  id_offset: int = 1) -> List[SpeakerData]:
    """生成一组说话人; pool名参与失配种子派生, 不同pool互不重叠"""
    shift_spec = ShiftSpec.from_config(config.get('shift', {}))
    speakers = []
    for k in range(count):
        shift = make_speaker_shift(corpus.feature_dim, shift_spec.shift_strength, shift_spec.bias_scale,
                                   shift_spec.noise_scale, derive_seed(seed, pool, k))
        budget = AdaptationBudget(sentences, covered_classes(corpus, coverage, seed, k))
        speakers.append(gen_speaker(corpus, shift, budget, speaker_id=id_offset + k,
                                    test_frames_per_class=shift_spec.test_frames_per_class))
    return speakers


def eval_speakers(config: Dict[str, Any], plan: ExperimentPlan, corpus: CorpusSpec, seed: int) -> List[SpeakerData]:
    return make_speakers(config, corpus, seed, plan.eval_speakers, plan.max_budget, "eval",
                         coverage=plan.coverage)


def prior_speakers(config: Dict[str, Any], corpus: CorpusSpec, seed: int) -> List[SpeakerData]:
    prior_cfg = config.get('prior', {})
    return make_speakers(config, corpus, seed, int(prior_cfg.get('speakers', 8)),
                         int(prior_cfg.get('sentences', 40)), "prior-pool", id_offset=PRIOR_SPEAKER_BASE)


def harvest_prior(config: Dict[str, Any], base_net: Network, corpus: CorpusSpec, seed: int,
                  kind: AdapterKind, jobs: int = 1):
    """
    在独立的先验说话人池上收集变换并估计先验

    Returns:
        (samples, prior)
    """
    pool = prior_speakers(config, corpus, seed)
    cfg = adaptation_train_config(config, derive_seed(seed, "harvest", AdapterKind(kind).value))
    samples = harvest_speaker_transforms(base_net, {s.speaker_id: s.adaptation for s in pool}, cfg, kind,
                                         max_workers=jobs)
    prior = fit_prior(samples, floor=float(config.get('prior', {}).get('floor', 1e-6)))
    return samples, prior


def build_output_tree(config: Dict[str, Any], corpus: CorpusSpec, base_net: Network) -> SenoneTree:
    hier = config.get('hier', {})
    return build_tree(corpus.group_tags(), float(hier.get('lambda1', 0.01)), float(hier.get('lambda2', 0.1)),
                      embeddings=EmbeddingView.from_network(base_net))


def build_seed_context(config: Dict[str, Any], plan: ExperimentPlan, seed: int,
                       preloaded=None) -> SeedContext:
    """
    准备一个种子的共享资源

    Args:
        preloaded: 同一种子的Bundle; 给出时沿用其中的基础网络、先验与树
    """
    jobs = int(config.get('runtime', {}).get('jobs', 1))
    if preloaded is not None:
        corpus = corpus_for_seed(config, seed)
        base_net = preloaded.base_net
        _, dev = gen_base_corpus(corpus)
        dev_error = frame_error_rate(base_net, dev)
        logger.info(f"种子 {seed}: 使用已保存的基础网络, dev错误率 {dev_error:.4f}")
    else:
        corpus, base_net, dev_error = train_base_network(config, seed)

    ctx = SeedContext(seed, corpus, base_net, dev_error, eval_speakers(config, plan, corpus, seed))
    for kind in plan.needed_priors():
        if preloaded is not None and kind in preloaded.priors:
            ctx.priors[kind] = preloaded.priors[kind]
        else:
            _, ctx.priors[kind] = harvest_prior(config, base_net, corpus, seed, kind, jobs)
    if plan.needs_tree:
        if preloaded is not None and preloaded.tree is not None:
            ctx.tree = preloaded.tree
        else:
            ctx.tree = build_output_tree(config, corpus, base_net)
    return ctx


def scaled_lambda(plan: ExperimentPlan, lambda_: float, data: LabeledFrameSet) -> float:
    if plan.lambda_scaling == "per_frame":
        return lambda_ * data.frame_count
    return lambda_


def adapt_for_method(method: Method, cell: Cell, ctx: SeedContext, plan: ExperimentPlan,
                     data: LabeledFrameSet, cfg: TrainConfig) -> Network:
    """把方法名映射到对应的自适应流程"""
    spec = METHOD_SPECS[method]
    if method is Method.BASELINE:
        return ctx.base_net
    if spec.regularizer == "none":
        return adapt(ctx.base_net, data, cfg, spec.kind)
    if spec.regularizer == "kld":
        return adapt_kld(ctx.base_net, data, KldConfig(cell.setting.get("rho"), cfg), spec.kind)
    if spec.regularizer == "map":
        lam = scaled_lambda(plan, cell.setting.get("lambda"), data)
        return adapt_map(ctx.base_net, data, ctx.priors[spec.kind], MapConfig(lam, cfg), spec.kind)
    if spec.regularizer == "hier":
        if ctx.tree is None:
            raise BayesAdaptError("MAP_LHN_HIER需要先建立树")
        flat_lambda = scaled_lambda(plan, cell.setting.get("lambda", 0.0), data)
        hier_cfg = HierConfig(cell.setting.get("lambda1"), cell.setting.get("lambda2"), plan.hier_target,
                              plan.hier_uses_flat_prior, flat_lambda, cfg)
        return adapt_hier(ctx.base_net, data, ctx.tree, hier_cfg, prior=ctx.priors.get(AdapterKind.LHN))
    raise ConfigError(f"方法 {method.value} 没有对应的流程")


def run_cell(config: Dict[str, Any], plan: ExperimentPlan, ctx: SeedContext, cell: Cell) -> Dict[str, Any]:
    """
    执行单个格子, 评测值为各评测说话人的平均

    Returns:
        Dict: 结果表的一行; 库内异常与数值错误(ValueError)记为failed
    """
    per_speaker = []
    try:
        for speaker in ctx.speakers:
            data = truncate_budget(speaker, cell.budget, ctx.corpus)
            rng_seed = derive_seed(cell.seed, "adapt", cell.method.value, cell.setting.label,
                                   cell.budget, speaker.speaker_id)
            cfg = adaptation_train_config(config, rng_seed)
            adapted = adapt_for_method(cell.method, cell, ctx, plan, data, cfg)

            probe = forgetting_probe(ctx.base_net, adapted, speaker.test,
                                     speaker.budget.uncovered_classes(ctx.corpus.class_count))
            xent = cross_entropy(predict_posteriors(adapted, data.frames), data.targets)
            per_speaker.append({
                "frame_error": frame_error_rate(adapted, speaker.test),
                "adapt_xent": xent / data.frame_count,
                "uncovered_error": probe.uncovered_error,
                "covered_delta": probe.covered_delta,
                "uncovered_delta": probe.uncovered_delta,
                "mean_kl": probe.mean_kl,
            })
    except (BayesAdaptError, ValueError) as e:
        logger.error(f"格子 {cell.key} 失败: {e}")
        return cell_row(cell.key, STATUS_FAILED, str(e))

    metrics = {name: float(np.mean([m[name] for m in per_speaker])) for name in per_speaker[0]}
    logger.debug(f"格子 {cell.key}: {metrics}")
    return cell_row(cell.key, metrics=metrics)


def run_plan(config: Dict[str, Any], plan: Optional[ExperimentPlan] = None,
             preloaded: Optional[Mapping[int, Any]] = None) -> ResultTable:
    """
    执行整个实验计划

    Args:
        config: 完整配置
        plan: 默认由config构造
        preloaded: 种子 → Bundle, 这些种子跳过基础网络训练

    Returns:
        ResultTable: 行顺序与plan.cells()一致
    """
    plan = plan or ExperimentPlan.from_config(config)
    preloaded = preloaded or {}
    runtime = config.get('runtime', {})
    jobs = max(1, int(runtime.get('jobs', 1)))
    cells = plan.cells()
    logger.info(f"实验计划: {len(plan.methods)} 个方法, 预算 {plan.budgets}, 种子 {plan.seeds}, 共 {len(cells)} 格")

    contexts: Dict[int, SeedContext] = {}
    context_errors: Dict[int, str] = {}
    for seed in plan.seeds:
        try:
            contexts[seed] = build_seed_context(config, plan, seed, preloaded.get(seed))
        except (BayesAdaptError, ValueError) as e:
            if isinstance(e, ConfigError):
                raise
            logger.error(f"种子 {seed} 准备失败, 该种子的格子全部记为失败: {e}")
            context_errors[seed] = str(e)

    def job(cell: Cell) -> Dict[str, Any]:
        if cell.seed in context_errors:
            return cell_row(cell.key, STATUS_FAILED, context_errors[cell.seed])
        return run_cell(config, plan, contexts[cell.seed], cell)

    progress = bool(runtime.get('progress', False))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        rows = list(tqdm(pool.map(job, cells), total=len(cells), desc="cells", disable=not progress))

    table = ResultTable.from_rows(rows)
    logger.info(f"实验完成: {len(table)} 格, 失败 {table.failed_count}")
    return table
