"""finetune：挂载 LoRA，用 K 个任务样本微调后合并"""
import argparse

from utils import logger, write_json

from lab.checkpoint import save_checkpoint
from lab.lora import recover
from lab.tasks import get_template, template_for

from .common import (
    add_input_arg,
    add_recovery_args,
    add_seed_arg,
    add_task_args,
    load_model,
    recovery_config_from_args,
    sibling,
    tasks_from_args,
)

NAME = "finetune"
HELP = "在单个任务上做 LoRA 恢复微调，写出合并后的检查点与训练日志"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser)
    add_seed_arg(parser)
    add_task_args(parser, multiple=False)
    add_recovery_args(parser)
    parser.add_argument("--template", help="微调提示词模板（默认使用任务的匹配模板）")
    parser.add_argument("--out", required=True, help="合并后的检查点")


def handle(args: argparse.Namespace) -> dict:
    model = load_model(args.input)
    task = tasks_from_args(args)[0]
    template = get_template(args.template) if args.template else template_for(task)
    config = recovery_config_from_args(args)
    logger.info(f"参数: 任务 {task.task_id} / 模板 {template.template_id} / {config.model_dump()}")

    merged, log = recover(model, task, template, config)
    save_checkpoint(merged, args.out, meta={"stage": "recover", "task": task.task_id, "shots": config.shots})
    log_path = write_json(sibling(args.out, ".log.json"), log)
    return {
        "artifacts": [args.out, str(log_path)],
        "total_steps": log.total_steps,
        "warmup_steps": log.warmup_steps,
        "trainable_params": log.trainable_params,
        "initial_loss": log.initial_loss,
        "final_loss": log.final_loss,
    }
