"""eval：任务准确率 + 困惑度，可对照基线报告计算恢复率"""
import argparse

from schemas import EvaluationConfig
from utils import logger, resolve_seed

from lab.pipeline import evaluate_suite
from lab.reporting import render_eval_report

from .common import add_input_arg, add_seed_arg, add_task_args, load_baseline, load_model, tasks_from_args, write_report

NAME = "eval"
HELP = "评测分类准确率与困惑度，写出 EvalReport"


def register(parser: argparse.ArgumentParser) -> None:
    add_input_arg(parser)
    add_seed_arg(parser)
    add_task_args(parser)
    parser.add_argument("--shots", type=int, default=0, help="提示词中拼接的已解答示例数")
    parser.add_argument("--window", type=int, default=64, help="困惑度窗口长度")
    parser.add_argument("--label", default="eval")
    parser.add_argument("--baseline", help="基线 EvalReport（JSON），用于计算恢复率")
    parser.add_argument("--report", help="报告路径前缀，写出 .json 与 .txt")


def handle(args: argparse.Namespace) -> dict:
    model = load_model(args.input)
    tasks = tasks_from_args(args)
    evaluation = EvaluationConfig(
        tasks=[t.task_id for t in tasks],
        prompt_shots=args.shots,
        seed=resolve_seed(args.seed),
        ppl_window=args.window,
    )
    logger.info(f"参数: 任务 {evaluation.tasks} / shots {args.shots}")
    report = evaluate_suite(model, tasks, evaluation, args.label, load_baseline(args.baseline))
    written = write_report(args.report, report, render_eval_report(report))
    return {"artifacts": written, "report": report}
