"""纯文本报表：与 JSON 报告并排写出，版式对应三类结果表"""
from typing import List, Optional, Sequence

from schemas import CompressionReport, EvalReport, PromptMatrix, RecoveryRow, SweepRow


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        widths = [max(w, len(cell)) for w, cell in zip(widths, row)]
    line = "  ".join("-" * w for w in widths)
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)), line]
    out.extend("  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows)
    return "\n".join(out) + "\n"


def _num(value: Optional[float], scale: float = 1.0) -> str:
    return "-" if value is None else f"{value * scale:.2f}"


def render_prompt_matrix(matrix: PromptMatrix, scale: float = 100.0) -> str:
    """行：提示词模板；列：任务；* 标记该任务的最优模板"""
    rows = []
    for template in matrix.templates:
        cells = [template]
        for task in matrix.tasks:
            mark = "*" if matrix.best_template.get(task) == template else ""
            cells.append(_num(matrix.accuracy[template][task], scale) + mark)
        rows.append(cells)
    return _table(["prompt"] + list(matrix.tasks), rows)


def render_recovery_table(rows: List[RecoveryRow], scale: float = 1.0) -> str:
    tasks: List[str] = []
    corpora: List[str] = []
    for row in rows:
        tasks.extend(t for t in row.accuracies if t not in tasks)
        corpora.extend(c for c in row.perplexity if c not in corpora)

    headers = ["ratio", "method"] + corpora + tasks + ["mean", "recovery", "printed", "delta", "check"]
    body = []
    for row in rows:
        check = "-" if row.consistent is None else ("ok" if row.consistent else "MISMATCH")
        body.append(
            [row.ratio, row.method]
            + [_num(row.perplexity.get(c)) for c in corpora]
            + [_num(row.accuracies.get(t), scale) for t in tasks]
            + [
                _num(row.mean, scale),
                _num(row.recovery_rate),
                _num(row.printed_recovery),
                "-" if row.delta is None else f"{row.delta:+.2f}",
                check,
            ]
        )
    return _table(headers, body)


def render_sweep(rows: List[SweepRow], scale: float = 100.0) -> str:
    corpora: List[str] = []
    tasks: List[str] = []
    for row in rows:
        corpora.extend(c for c in row.perplexity if c not in corpora)
        tasks.extend(t for t in row.accuracy if t not in tasks)
    body = [
        [str(row.shots)]
        + [_num(row.perplexity.get(c)) for c in corpora]
        + [_num(row.accuracy.get(t), scale) for t in tasks]
        + [_num(row.average, scale)]
        for row in rows
    ]
    return _table(["shots"] + corpora + tasks + ["average"], body)


def render_compression(report: CompressionReport) -> str:
    lines = [
        f"original params : {report.original_params}",
        f"pruned params   : {report.pruned_params}",
        f"reduction       : {report.reduction_fraction:.4f}",
    ]
    if report.group_ratio is not None:
        lines.append(f"group ratio     : {report.group_ratio:.4f} ({report.policy})")
    body = [[str(i), str(h), str(f)] for i, (h, f) in enumerate(zip(report.layer_heads, report.layer_ffn))]
    return "\n".join(lines) + "\n\n" + _table(["layer", "heads", "ffn"], body)


def render_eval_report(report: EvalReport) -> str:
    parts = [f"[{report.label}]"]
    if report.accuracy or report.perplexity:
        row = RecoveryRow(
            ratio="-",
            method=report.label,
            accuracies=report.accuracy,
            perplexity=report.perplexity,
            mean=report.mean_accuracy if report.mean_accuracy is not None else 0.0,
            recovery_rate=report.recovery_rate,
        )
        parts.append(render_recovery_table([row], scale=100.0))
    if report.prompt_matrix is not None:
        parts.append(render_prompt_matrix(report.prompt_matrix))
    if report.sweep:
        parts.append(render_sweep(report.sweep))
    return "\n".join(parts)
