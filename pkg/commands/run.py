"""run：按运行配置执行完整流水线"""
import argparse

from schemas import STAGES, RunConfig
from utils import logger, resolve_seed

from lab.pipeline import load_run_config, run_pipeline

NAME = "run"
HELP = "执行 build → pretrain → baseline → prune → recover → prompt-matrix → sweep"

# 命令行参数 -> 运行配置中的键路径
OVERRIDES = {
    "ratio": ("pruning", "ratio"),
    "policy": ("pruning", "policy"),
    "scorer": ("pruning", "scorer"),
    "rank": ("recovery", "rank"),
    "alpha": ("recovery", "alpha"),
    "shots": ("recovery", "shots"),
    "epochs": ("recovery", "train", "epochs"),
    "lr": ("recovery", "train", "lr"),
    "batch_size": ("recovery", "train", "batch_size"),
}


def register(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="运行配置（.json / .yaml）")
    parser.add_argument("--out", help="输出目录（覆盖配置中的 paths.out_dir）")
    parser.add_argument("--skip", nargs="+", choices=STAGES[1:], default=[], help="跳过的阶段")
    group = parser.add_argument_group("覆盖运行配置")
    group.add_argument("--ratio", type=float, help="pruning.ratio")
    group.add_argument("--policy", choices=["per-layer", "global"], help="pruning.policy")
    group.add_argument("--scorer", choices=["taylor", "magnitude"], help="pruning.scorer")
    group.add_argument("--rank", type=int, help="recovery.rank")
    group.add_argument("--alpha", type=float, help="recovery.alpha")
    group.add_argument("--shots", type=int, help="recovery.shots")
    group.add_argument("--epochs", type=int, help="recovery.train.epochs")
    group.add_argument("--lr", type=float, help="recovery.train.lr")
    group.add_argument("--batch-size", type=int, help="recovery.train.batch_size")
    group.add_argument("--seed", type=int, help="替换配置中的全部种子（PRUNELAB_SEED 优先）")


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    """命令行覆盖写回配置后重新校验，越界取值按配置错误处理"""
    data = config.model_dump()
    changed = []
    for flag, path in OVERRIDES.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        section = data
        for key in path[:-1]:
            section = section[key]
        section[path[-1]] = value
        changed.append(".".join(path))
    if args.skip:
        data["stages"]["skip"] = sorted(set(config.stages.skip) | set(args.skip))
    config = RunConfig(**data)
    if args.seed is not None:
        config = config.with_seed(resolve_seed(args.seed))
        changed.append("seed")
    if changed:
        logger.info(f"命令行覆盖: {changed}")
    return config


def handle(args: argparse.Namespace) -> dict:
    config = apply_overrides(load_run_config(args.config), args)
    logger.info(f"参数: 配置 {args.config} / 跳过 {config.stages.skip}")
    return run_pipeline(config, args.out)
