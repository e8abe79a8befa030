"""report：渲染公开结果表，或把运行目录中的 JSON 报告重新渲染为表格"""
import argparse
from pathlib import Path
from typing import Union

from schemas import EvalReport, PromptMatrix, SweepRow
from utils import ConfigError, read_json

from lab.published import (
    published_baseline_row,
    published_compression,
    published_prompt_matrix,
    published_recovery_table,
    published_shot_sweep,
)
from lab.reporting import render_eval_report, render_prompt_matrix, render_recovery_table, render_sweep

NAME = "report"
HELP = "渲染结果表（--published 为公开结果，--dir 为本地运行目录）"


def register(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--published", action="store_true", help="公开结果：恢复率核对、提示词矩阵、K 扫描")
    source.add_argument("--dir", help="run 输出目录")
    parser.add_argument("--json", action="store_true", help="输出 JSON 而不是表格文本")


def _published(as_json: bool) -> Union[str, dict]:
    rows = [published_baseline_row()] + published_recovery_table()
    if as_json:
        return {
            "recovery": rows,
            "prompt_matrix": {ratio: published_prompt_matrix(ratio) for ratio in ("20%", "50%")},
            "shot_sweep": published_shot_sweep(),
            "compression": published_compression(),
        }
    parts = ["# 方法对比与恢复率核对", render_recovery_table(rows)]
    for ratio in ("20%", "50%"):
        parts += [f"# 提示词 × 任务（{ratio}）", render_prompt_matrix(published_prompt_matrix(ratio), scale=1.0)]
    parts += ["# 微调样本数 K（20%）", render_sweep(published_shot_sweep(), scale=1.0)]
    parts += ["# 参数削减"] + [f"{ratio}: {frac:.4f}" for ratio, frac in published_compression().items()]
    return "\n".join(parts) + "\n"


def _local(directory: str, as_json: bool) -> Union[str, dict]:
    out = Path(directory)
    if not out.is_dir():
        raise ConfigError(f"运行目录不存在: {directory}")
    found = {}
    for name in ("baseline", "pruned_eval", "eval_report"):
        if (out / f"{name}.json").exists():
            found[name] = EvalReport(**read_json(out / f"{name}.json"))
    if (out / "prompt_matrix.json").exists():
        found["prompt_matrix"] = PromptMatrix(**read_json(out / "prompt_matrix.json"))
    if (out / "sweep.json").exists():
        found["sweep"] = [SweepRow(**row) for row in read_json(out / "sweep.json")]
    if not found:
        raise ConfigError(f"目录中没有可渲染的报告: {directory}")
    if as_json:
        return found

    parts = []
    for name, payload in found.items():
        if isinstance(payload, EvalReport):
            parts.append(render_eval_report(payload))
        elif isinstance(payload, PromptMatrix):
            parts.append(render_prompt_matrix(payload))
        else:
            parts.append(render_sweep(payload))
    return "\n".join(parts)


def handle(args: argparse.Namespace) -> Union[str, dict]:
    if args.published:
        return _published(args.json)
    return _local(args.dir, args.json)
