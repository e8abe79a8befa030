"""prompt-matrix：提示词模板 × 任务 准确率矩阵"""
import argparse

from schemas import EvaluationConfig
from utils import ConfigError, logger, resolve_seed

from lab.evaluation import prompt_task_matrix
from lab.pipeline import matrix_templates
from lab.reporting import render_prompt_matrix
from lab.tasks import TEMPLATES

from .common import add_input_arg, add_seed_arg, add_task_args, load_model, parse_pairs, tasks_from_args, write_report

NAME = "prompt-matrix"
HELP = "评测每个 (模板, 任务) 的准确率，标出各任务的最优模板"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser, required=False)
    add_seed_arg(parser)
    add_task_args(parser)
    parser.add_argument(
        "--tuned", action="append", default=[], metavar="TASK=CKPT", help="任务列使用在该任务上微调的检查点，可重复"
    )
    parser.add_argument("--templates", nargs="+", choices=sorted(TEMPLATES), help="默认使用各任务的匹配模板")
    parser.add_argument("--shots", type=int, default=0, help="提示词中拼接的已解答示例数")
    parser.add_argument("--report", help="报告路径前缀，写出 .json 与 .txt")


def handle(args: argparse.Namespace) -> dict:
    tasks = tasks_from_args(args)
    tuned = parse_pairs(args.tuned, "--tuned")
    if tuned:
        missing = [t.task_id for t in tasks if t.task_id not in tuned]
        if missing:
            raise ConfigError("缺少以下任务的微调检查点", detail={"tasks": missing})
        models = {task: load_model(path) for task, path in tuned.items()}
    elif args.input:
        models = load_model(args.input)
    else:
        raise ConfigError("需要 --in 或 --tuned")

    templates = matrix_templates(EvaluationConfig(templates=args.templates or []), tasks)
    logger.info(f"参数: 模板 {[t.template_id for t in templates]} / 任务 {[t.task_id for t in tasks]}")
    matrix = prompt_task_matrix(models, templates, tasks, args.shots, resolve_seed(args.seed))
    written = write_report(args.report, matrix, render_prompt_matrix(matrix))
    return {"artifacts": written, "matrix": matrix}
