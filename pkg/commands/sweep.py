"""sweep-shots：对每个 K 重新微调剪枝模型，记录准确率与困惑度"""
import argparse

from schemas import EvaluationConfig
from utils import logger

from lab.evaluation import shots_sweep
from lab.lora import recover
from lab.pipeline import perplexity_corpora
from lab.reporting import render_sweep
from lab.tasks import template_for

from .common import (
    add_input_arg,
    add_recovery_args,
    add_seed_arg,
    add_task_args,
    load_model,
    recovery_config_from_args,
    tasks_from_args,
    write_report,
)

NAME = "sweep-shots"
HELP = "微调样本数 K 扫描"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser)
    add_seed_arg(parser)
    add_task_args(parser, multiple=False)
    add_recovery_args(parser)
    parser.add_argument("--shots-list", type=int, nargs="+", default=[10, 20, 50])
    parser.add_argument("--prompt-shots", type=int, default=0, help="评测提示词中的示例数")
    parser.add_argument("--window", type=int, default=64, help="困惑度窗口长度")
    parser.add_argument("--report", help="报告路径前缀，写出 .json 与 .txt")


def handle(args: argparse.Namespace) -> dict:
    model = load_model(args.input)
    task = tasks_from_args(args)[0]
    template = template_for(task)
    config = recovery_config_from_args(args)
    logger.info(f"参数: 任务 {task.task_id} / K {sorted(set(args.shots_list))}")

    def factory(k: int):
        return recover(model, task, template, config, shots=k)[0]

    rows = shots_sweep(
        factory, task, args.shots_list, config.train.seed, template,
        perplexity_corpora(EvaluationConfig()), args.window, args.prompt_shots,
    )
    written = write_report(args.report, rows, render_sweep(rows))
    return {"artifacts": written, "rows": rows}
