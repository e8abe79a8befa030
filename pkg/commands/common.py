"""子命令共用的参数组与加载函数"""
import argparse
from pathlib import Path
from typing import Dict, List, Optional

from schemas import EvaluationConfig, EvalReport, ModelConfig, RecoveryConfig, TaskDataset, TrainConfig
from utils import ConfigError, EvaluationError, load_config, logger, read_json, resolve_seed, write_json, write_text

from lab.checkpoint import load_checkpoint
from lab.model import TransformerModel
from lab.pipeline import load_run_config, load_tasks


def add_input_arg(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--in", dest="input", required=required, help="输入检查点")


def add_seed_arg(parser: argparse.ArgumentParser, fallback: bool = True) -> None:
    """fallback 为 False 时默认值为 None，种子由 --config 决定"""
    default = load_config().defaults.seed if fallback else None
    parser.add_argument("--seed", type=int, default=default, help="随机种子（PRUNELAB_SEED 优先）")


def add_model_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("模型结构")
    group.add_argument("--config", help="运行配置（使用其中的 model 段）")
    group.add_argument("--embed-dim", type=int)
    group.add_argument("--layers", type=int, dest="n_layers")
    group.add_argument("--heads", type=int, dest="n_heads")
    group.add_argument("--head-dim", type=int)
    group.add_argument("--ffn-dim", type=int)
    group.add_argument("--max-seq-len", type=int)


def model_config_from_args(args: argparse.Namespace) -> ModelConfig:
    if getattr(args, "config", None):
        base = load_run_config(args.config).model
    else:
        base = ModelConfig(rng_seed=resolve_seed(load_config().defaults.seed))
    updates = {
        key: getattr(args, key)
        for key in ("embed_dim", "n_layers", "n_heads", "head_dim", "ffn_dim", "max_seq_len")
        if getattr(args, key, None) is not None
    }
    if getattr(args, "seed", None) is not None:
        updates["rng_seed"] = resolve_seed(args.seed)
    return ModelConfig(**{**base.model_dump(), **updates})


def add_task_args(parser: argparse.ArgumentParser, multiple: bool = True) -> None:
    if multiple:
        parser.add_argument("--tasks", nargs="+", default=["pattern", "copy", "parity", "keyword"])
    else:
        parser.add_argument("--task", required=True, help="任务名（合成任务或 --task-file 中登记的名称）")
    parser.add_argument(
        "--task-file", action="append", default=[], metavar="NAME=PATH", help="JSONL 任务文件，可重复"
    )
    parser.add_argument("--train-items", type=int, default=200)
    parser.add_argument("--eval-items", type=int, default=100)


def parse_pairs(pairs: List[str], what: str) -> Dict[str, str]:
    """NAME=VALUE 列表 -> 字典"""
    parsed = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name or not value:
            raise ConfigError(f"{what} 需要 NAME=VALUE 形式: {pair}")
        parsed[name] = value
    return parsed


def _seed_or_default(args: argparse.Namespace) -> int:
    seed = getattr(args, "seed", None)
    return load_config().defaults.seed if seed is None else seed


def tasks_from_args(args: argparse.Namespace) -> List[TaskDataset]:
    names = list(args.tasks) if hasattr(args, "tasks") else [args.task]
    files = parse_pairs(args.task_file, "--task-file")
    missing = {name: path for name, path in files.items() if not Path(path).exists()}
    if missing:
        raise ConfigError("任务文件不存在", detail=missing)
    evaluation = EvaluationConfig(
        tasks=names,
        task_files=files,
        train_items=args.train_items,
        eval_items=args.eval_items,
        seed=resolve_seed(_seed_or_default(args)),
    )
    return load_tasks(evaluation)


def add_recovery_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("LoRA 恢复")
    group.add_argument("--rank", type=int, default=8)
    group.add_argument("--alpha", type=float, default=None)
    group.add_argument("--shots", type=int, default=50, help="微调样本数 K")
    group.add_argument("--context-shots", type=int, default=0)
    group.add_argument("--epochs", type=int, default=3)
    group.add_argument("--lr", type=float, default=1e-4)
    group.add_argument("--warmup", type=int, default=100)
    group.add_argument("--batch-size", type=int, default=8)
    group.add_argument("--max-steps", type=int, default=None)
    group.add_argument("--no-mask-context", action="store_true", help="对整条序列计损失")


def recovery_config_from_args(args: argparse.Namespace) -> RecoveryConfig:
    return RecoveryConfig(
        rank=args.rank,
        alpha=args.alpha,
        shots=args.shots,
        context_shots=args.context_shots,
        train=TrainConfig(
            lr=args.lr,
            warmup_steps=args.warmup,
            batch_size=args.batch_size,
            epochs=args.epochs,
            max_steps=args.max_steps,
            seed=resolve_seed(args.seed),
            mask_context=not args.no_mask_context,
        ),
    )


def load_model(path: str) -> TransformerModel:
    model = load_checkpoint(path)
    logger.info(f"✅ 已加载检查点 {path}: {model.config.layer_shapes()}")
    return model


def load_baseline(path: Optional[str]) -> Optional[EvalReport]:
    if not path:
        return None
    if not Path(path).exists():
        raise EvaluationError(f"基线报告不存在: {path}")
    return EvalReport(**read_json(path))


def write_report(prefix: Optional[str], payload, text: str) -> List[str]:
    """写出 <prefix>.json 与 <prefix>.txt；prefix 为空时不落盘"""
    if not prefix:
        return []
    return [str(write_json(f"{prefix}.json", payload)), str(write_text(f"{prefix}.txt", text))]


def sibling(path: str, suffix: str) -> Path:
    """与检查点同目录、同名不同后缀的伴随文件"""
    p = Path(path)
    return p.with_name(p.stem + suffix)
