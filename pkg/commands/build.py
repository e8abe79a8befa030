"""build：按配置初始化模型，可选择在合成任务 + 语料上预训练"""
import argparse

from schemas import CalibrationConfig, PretrainConfig
from utils import logger, write_json

from lab.checkpoint import save_checkpoint
from lab.model import build_model, closed_form_parameter_count, parameter_count
from lab.pipeline import load_run_config, pretrain_model
from lab.tokenizer import ByteTokenizer

from .common import add_model_args, add_seed_arg, add_task_args, model_config_from_args, sibling, tasks_from_args

NAME = "build"
HELP = "初始化（并可选预训练）桌面级模型，写出检查点"


def register(parser: argparse.ArgumentParser) -> None:
    add_model_args(parser)
    add_seed_arg(parser, fallback=False)
    add_task_args(parser)
    parser.add_argument("--pretrain", action="store_true", help="在合成任务与语料上做全参数预训练")
    parser.add_argument("--out", required=True, help="输出检查点")


def handle(args: argparse.Namespace) -> dict:
    config = model_config_from_args(args)
    logger.info(f"参数: {config.model_dump()}")
    model = build_model(config)
    result = {
        "checkpoint": args.out,
        "params": parameter_count(model),
        "closed_form_params": closed_form_parameter_count(config),
    }

    if args.pretrain:
        run = load_run_config(args.config) if args.config else None
        pre = run.pretrain if run else PretrainConfig()
        calibration = run.calibration if run else CalibrationConfig()
        log = pretrain_model(model, tasks_from_args(args), pre, calibration, ByteTokenizer())
        result["train_log"] = str(write_json(sibling(args.out, ".log.json"), log))
        result["final_loss"] = log.final_loss

    save_checkpoint(model, args.out, meta={"stage": "pretrain" if args.pretrain else "build"})
    return result
