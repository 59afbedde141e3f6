"""
Command-line interface: bayes-adapt
"""
import argparse
import logging
import sys
from typing import List, Optional

from .pipeline import ADAPT_METHODS, BayesAdaptPipeline
from .utils.errors import BayesAdaptError, ConfigError
from .utils.log import setup_logging

logger = logging.getLogger("bayes_adapt")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='bayes-adapt',
                                     description='前馈分类器的贝叶斯(MAP)自适应实验工具')
    parser.add_argument('--config', type=str, default=None, help='配置文件路径(YAML/JSON), 默认使用内置配置')
    parser.add_argument('--bundle', type=str, default=None, help='bundle目录, 默认output_paths.bundle')
    parser.add_argument('--verbose', '-v', action='store_true', help='输出DEBUG日志')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train-base', help='训练基础网络并写入bundle')
    p.add_argument('--seed', type=int, default=None)

    for name, help_text in (('harvest', '在先验说话人池上收集变换'), ('fit-prior', '由收集的变换估计先验')):
        p = sub.add_parser(name, help=help_text)
        p.add_argument('--kind', choices=['lin', 'lhn'], default='lhn')

    p = sub.add_parser('adapt', help='对单个评测说话人自适应并评测')
    p.add_argument('--method', choices=list(ADAPT_METHODS), default='plain')
    p.add_argument('--kind', choices=['lin', 'lhn', 'lon'], default='lhn')
    p.add_argument('--lambda', dest='lambda_', type=float, default=None, help='MAP强度λ')
    p.add_argument('--rho', type=float, default=None, help='KLD插值系数ρ')
    p.add_argument('--speaker', type=int, default=0)
    p.add_argument('--budget', type=int, default=None, help='自适应句子数')

    p = sub.add_parser('run-plan', help='执行配置中的实验计划')
    p.add_argument('--results', type=str, default=None, help='结果CSV路径')
    p.add_argument('--reuse-bundle', action='store_true', help='沿用bundle中的基础网络/先验/树')

    p = sub.add_parser('report', help='渲染结果表')
    p.add_argument('--results', type=str, default=None)
    p.add_argument('--format', choices=['text', 'csv'], default='text')

    p = sub.add_parser('export-corpus', help='导出合成语料为CSV')
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--out', type=str, default=None)
    return parser


def run(args: argparse.Namespace) -> int:
    pipeline = BayesAdaptPipeline(args.config, bundle_path=args.bundle)
    if not args.verbose:
        setup_logging(pipeline.config.get('runtime', {}).get('log_level', 'INFO'))

    if args.command == 'train-base':
        pipeline.run_train_base(args.seed)
    elif args.command == 'harvest':
        pipeline.run_harvest(args.kind)
    elif args.command == 'fit-prior':
        pipeline.run_fit_prior(args.kind)
    elif args.command == 'adapt':
        result = pipeline.run_adapt(args.method, args.kind, args.lambda_, args.rho, args.speaker, args.budget)
        print(f"frame error: {result['before']:.4f} -> {result['after']:.4f}")
    elif args.command == 'run-plan':
        table = pipeline.run_plan(args.results, reuse_bundle=args.reuse_bundle)
        if table.failed_count:
            logger.error(f"{table.failed_count} 个格子失败")
            return EXIT_FAILURE
    elif args.command == 'report':
        sys.stdout.write(pipeline.run_report(args.results, args.format))
    elif args.command == 'export-corpus':
        pipeline.run_export_corpus(args.seed, args.out)
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """console script入口, 返回退出码: 0 成功, 1 格子失败或运行错误, 2 配置错误"""
    args = build_parser().parse_args(argv)
    setup_logging('DEBUG' if args.verbose else 'INFO')
    try:
        return run(args)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_CONFIG
    except BayesAdaptError as e:
        logger.error(f"运行失败: {e}")
        return EXIT_FAILURE


if __name__ == '__main__':
    sys.exit(main())
