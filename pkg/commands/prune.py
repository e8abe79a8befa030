"""prune：校准 → 分组打分 → 选择 → 重建紧凑模型"""
import argparse

from schemas import CalibrationConfig, PruningConfig
from utils import logger, resolve_seed, write_json, write_text

from lab.checkpoint import save_checkpoint
from lab.importance import POLICIES, SCORERS
from lab.pipeline import prune_model
from lab.pruner import compression_report
from lab.reporting import render_compression

from .common import add_input_arg, add_seed_arg, load_model, sibling

NAME = "prune"
HELP = "按分组重要性做结构化剪枝，写出剪枝后的检查点与压缩报告"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser)
    add_seed_arg(parser)
    parser.add_argument("--out", required=True, help="剪枝后的检查点")
    parser.add_argument("--ratio", type=float, default=0.2, help="每层（或全局）剪掉的分组比例")
    parser.add_argument("--policy", choices=POLICIES, default="per-layer")
    parser.add_argument("--scorer", choices=SCORERS, default="taylor")
    parser.add_argument("--protect-edge-layers", action="store_true", help="首尾层不参与剪枝")
    parser.add_argument("--calib-count", type=int, default=20, help="校准序列数")
    parser.add_argument("--calib-len", type=int, default=128, help="校准序列长度")
    parser.add_argument("--calib-corpus", default="synthetic-books", help="校准语料：synthetic-books 或文本文件")
    parser.add_argument("--scores-out", help="写出全部分组得分与选中集合")


def handle(args: argparse.Namespace) -> dict:
    model = load_model(args.input)
    calibration = CalibrationConfig(
        count=args.calib_count, seq_len=args.calib_len, corpus=args.calib_corpus, seed=resolve_seed(args.seed)
    )
    pruning = PruningConfig(
        ratio=args.ratio, policy=args.policy, scorer=args.scorer, protect_edge_layers=args.protect_edge_layers
    )
    logger.info(f"参数: {pruning.model_dump()} / 校准 {calibration.model_dump()}")

    pruned, scores, selected, plan = prune_model(model, calibration, pruning)
    report = compression_report(model, pruned, pruning.ratio, pruning.policy)

    save_checkpoint(pruned, args.out, meta={"stage": "prune", "source": args.input})
    written = [
        args.out,
        str(write_json(sibling(args.out, ".plan.json"), plan)),
        str(write_json(sibling(args.out, ".compression.json"), report)),
        str(write_text(sibling(args.out, ".compression.txt"), render_compression(report))),
    ]
    if args.scores_out:
        written.append(str(write_json(args.scores_out, {"scores": scores, "selected": selected})))
    return {"artifacts": written, "compression": report, "selected": len(selected)}
