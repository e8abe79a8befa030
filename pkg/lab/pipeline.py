"""完整流水线：build → pretrain → baseline → prune → recover → prompt-matrix → sweep

每个阶段结束后写出检查点与 JSON 报告（.txt 为同内容的表格渲染）；
阶段失败时抛出 StageError，携带阶段名与原始异常。
"""
import json
import os
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import torch
import yaml
from schemas import (
    STAGES,
    CalibrationConfig,
    EvalReport,
    EvaluationConfig,
    GroupScore,
    PromptTemplate,
    PruningConfig,
    PretrainConfig,
    PruningPlan,
    RunConfig,
    TaskDataset,
    TrainingLog,
)
from utils import (
    ConfigError,
    EvaluationError,
    PerformanceMonitor,
    StageError,
    logger,
    resolve_seed,
    write_json,
    write_text,
)

from .checkpoint import save_checkpoint
from .evaluation import (
    evaluate_accuracy,
    evaluate_perplexity,
    mean_accuracy,
    prompt_task_matrix,
    recovery_rate,
    shots_sweep,
)
from .importance import (
    accumulate_calibration_gradients,
    build_calibration_set,
    edge_layers,
    score_groups,
    select_groups,
)
from .lora import recover
from .model import TransformerModel, build_model
from .pruner import apply_pruning, compression_report, plan_from_selection
from .reporting import render_compression, render_eval_report, render_prompt_matrix, render_sweep
from .tasks import get_template, load_task_file, make_task, synthetic_corpus, template_for
from .tokenizer import ByteTokenizer
from .training import corpus_examples, examples_for_tasks, mix_examples, pretrain

SYNTHETIC_BOOKS = "synthetic-books"


def load_run_config(path: Union[str, Path]) -> RunConfig:
    """读取 .json / .yaml 运行配置；相对路径以配置文件所在目录为基准"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"运行配置不存在: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            if path.suffix in (".yaml", ".yml"):
                raw = yaml.safe_load(f) or {}
            else:
                raw = json.load(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ConfigError(f"运行配置格式错误: {e}")

    config = RunConfig(**raw)
    base = path.resolve().parent

    def _resolve(p: str) -> str:
        return p if os.path.isabs(p) else str((base / p).resolve())

    updates = {"paths": config.paths.model_copy(update={"out_dir": _resolve(config.paths.out_dir)})}
    task_files = {task: _resolve(f) for task, f in config.evaluation.task_files.items()}
    missing = {task: f for task, f in task_files.items() if not os.path.exists(f)}
    if missing:
        raise ConfigError("配置引用的任务文件不存在", detail=missing)
    updates["evaluation"] = config.evaluation.model_copy(update={"task_files": task_files})

    if config.calibration.corpus != SYNTHETIC_BOOKS:
        corpus = _resolve(config.calibration.corpus)
        if not os.path.exists(corpus):
            raise ConfigError(f"校准语料文件不存在: {corpus}")
        updates["calibration"] = config.calibration.model_copy(update={"corpus": corpus})

    config = config.model_copy(update=updates)
    seed = resolve_seed(config.model.rng_seed)
    if os.environ.get("PRUNELAB_SEED"):
        logger.info(f"PRUNELAB_SEED 覆盖配置种子: {seed}")
        config = config.with_seed(seed)
    return config


def set_determinism(seed: int) -> None:
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def load_tasks(evaluation: EvaluationConfig) -> List[TaskDataset]:
    tasks = []
    for task_id in evaluation.tasks:
        if task_id in evaluation.task_files:
            task = load_task_file(evaluation.task_files[task_id], task_id=task_id)
        else:
            task = make_task(task_id, evaluation.train_items, evaluation.eval_items, evaluation.seed)
        tasks.append(task)
    return tasks


def matrix_templates(evaluation: EvaluationConfig, tasks: Sequence[TaskDataset]) -> List[PromptTemplate]:
    if evaluation.templates:
        return [get_template(t) for t in evaluation.templates]
    seen: List[PromptTemplate] = []
    for task in tasks:
        template = template_for(task)
        if template not in seen:
            seen.append(template)
    return seen


def perplexity_corpora(evaluation: EvaluationConfig) -> Dict[str, str]:
    return {
        name: synthetic_corpus(seed, evaluation.ppl_sentences)
        for name, seed in sorted(evaluation.ppl_corpora.items())
    }


def calibration_text(calibration: CalibrationConfig) -> str:
    if calibration.corpus == SYNTHETIC_BOOKS:
        return synthetic_corpus(calibration.seed, calibration.corpus_sentences)
    with open(calibration.corpus, "r", encoding="utf-8") as f:
        return f.read()


def pretrain_model(
    model: TransformerModel,
    tasks: Sequence[TaskDataset],
    pre: PretrainConfig,
    calibration: CalibrationConfig,
    tokenizer: ByteTokenizer,
) -> TrainingLog:
    """任务样本（只对答案计损失）与语料窗口混合后全参数训练"""
    task_examples = examples_for_tasks(
        tasks, [template_for(t) for t in tasks], pre.items_per_task, pre.train.seed,
        tokenizer, model.config.max_seq_len, pre.context_shots, pre.train.mask_context,
    )
    windows = corpus_examples(
        tokenizer, calibration_text(calibration), pre.corpus_windows,
        min(calibration.seq_len, model.config.max_seq_len), pre.train.seed,
    )
    return pretrain(model, mix_examples(task_examples, windows, seed=pre.train.seed), pre.train)


def evaluate_suite(
    models: Union[TransformerModel, Mapping[str, TransformerModel]],
    tasks: Sequence[TaskDataset],
    evaluation: EvaluationConfig,
    label: str,
    baseline: Optional[EvalReport] = None,
    corpora: Optional[Mapping[str, str]] = None,
) -> EvalReport:
    """各任务用匹配模板评测准确率；困惑度取各任务模型的平均"""
    per_task = models if isinstance(models, Mapping) else {t.task_id: models for t in tasks}
    accuracy = {
        task.task_id: evaluate_accuracy(
            per_task[task.task_id], task, template_for(task), evaluation.prompt_shots, evaluation.seed
        )
        for task in tasks
        if task.kind == "classification"
    }
    corpora = perplexity_corpora(evaluation) if corpora is None else corpora
    distinct = list({id(m): m for m in per_task.values()}.values())
    perplexity = {
        name: sum(evaluate_perplexity(m, text, evaluation.ppl_window) for m in distinct) / len(distinct)
        for name, text in corpora.items()
    }
    mean = mean_accuracy(accuracy) if accuracy else None
    rate = None
    if baseline is not None and accuracy:
        missing = sorted(set(accuracy) - set(baseline.accuracy))
        if missing:
            raise EvaluationError("基线报告缺少任务", detail={"missing": missing})
        rate = recovery_rate(
            [accuracy[t] for t in sorted(accuracy)], [baseline.accuracy[t] for t in sorted(accuracy)]
        )
    return EvalReport(
        label=label,
        accuracy=accuracy,
        perplexity=perplexity,
        mean_accuracy=mean,
        baseline_mean=baseline.mean_accuracy if baseline is not None else None,
        recovery_rate=rate,
    )


def prune_model(
    model: TransformerModel, calibration: CalibrationConfig, pruning: PruningConfig
) -> Tuple[TransformerModel, List[GroupScore], List[GroupScore], PruningPlan]:
    store = None
    if pruning.scorer == "taylor":
        seq_len = min(calibration.seq_len, model.config.max_seq_len)
        calib = build_calibration_set(
            ByteTokenizer(), calibration_text(calibration), calibration.count, seq_len, calibration.seed,
            source=calibration.corpus,
        )
        store = accumulate_calibration_gradients(model, calib)
    scores = score_groups(model, store, scorer=pruning.scorer)
    protected = edge_layers(model.config.n_layers) if pruning.protect_edge_layers else []
    selected = select_groups(scores, pruning.ratio, pruning.policy, protected)
    plan = plan_from_selection(selected, pruning.ratio, pruning.policy, pruning.scorer, scores_ref="scores.json")
    return apply_pruning(model, plan), scores, selected, plan


def _write_report(out_dir: Path, name: str, payload, text: Optional[str] = None) -> List[str]:
    written = [str(write_json(out_dir / f"{name}.json", payload))]
    if text is not None:
        written.append(str(write_text(out_dir / f"{name}.txt", text)))
    return written


class _Stage:
    """阶段执行：计时、日志、异常包装为 StageError"""

    def __init__(self, monitor: PerformanceMonitor, name: str):
        self.monitor = monitor
        self.name = name

    def __enter__(self):
        logger.info(f"⌛️ 阶段 [{self.name}] 开始")
        self.monitor.start(self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.monitor.end(self.name)
        if exc is None:
            logger.info(f"✅ 阶段 [{self.name}] 完成")
            return False
        logger.error(f"❌ 阶段 [{self.name}] 失败: {exc}")
        if isinstance(exc, StageError) or not isinstance(exc, Exception):
            return False
        raise StageError(self.name, exc) from exc


def run_pipeline(
    config: RunConfig,
    out_dir: Optional[Union[str, Path]] = None,
    stages: Optional[Sequence[str]] = None,
) -> Dict[str, object]:
    """按顺序执行各阶段，返回 {stage: 产物列表} 与关键指标"""
    out = Path(out_dir or config.paths.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wanted = [s for s in (stages or STAGES) if not config.skipped(s)]
    set_determinism(config.model.rng_seed)
    monitor = PerformanceMonitor("run")
    tokenizer = ByteTokenizer()
    artifacts: Dict[str, List[str]] = {}
    summary: Dict[str, object] = {"out_dir": str(out), "stages": wanted}

    logger.info(f"🏃 流水线开始: {wanted}，输出目录 {out}")

    with _Stage(monitor, "build"):
        model = build_model(config.model)
        tasks = load_tasks(config.evaluation)
        corpora = perplexity_corpora(config.evaluation)
        artifacts["build"] = [str(save_checkpoint(model, out / "build.ckpt", meta={"stage": "build"}))]

    if "pretrain" in wanted:
        with _Stage(monitor, "pretrain"):
            log = pretrain_model(model, tasks, config.pretrain, config.calibration, tokenizer)
            artifacts["pretrain"] = [
                str(save_checkpoint(model, out / "pretrained.ckpt", meta={"stage": "pretrain"})),
                *_write_report(out, "pretrain_log", log),
            ]

    baseline = None
    if "baseline" in wanted:
        with _Stage(monitor, "baseline"):
            baseline = evaluate_suite(model, tasks, config.evaluation, "baseline", corpora=corpora)
            artifacts["baseline"] = _write_report(out, "baseline", baseline, render_eval_report(baseline))
            summary["baseline"] = baseline.model_dump(mode="json")

    pruned = model
    if "prune" in wanted:
        with _Stage(monitor, "prune"):
            pruned, scores, selected, plan = prune_model(model, config.calibration, config.pruning)
            report = compression_report(model, pruned, config.pruning.ratio, config.pruning.policy)
            pruned_eval = evaluate_suite(pruned, tasks, config.evaluation, "pruned", baseline, corpora)
            artifacts["prune"] = [
                str(save_checkpoint(pruned, out / "pruned.ckpt", meta={"stage": "prune"})),
                *_write_report(out, "scores", {"scores": scores, "selected": selected}),
                *_write_report(out, "plan", plan),
                *_write_report(out, "compression", report, render_compression(report)),
                *_write_report(out, "pruned_eval", pruned_eval, render_eval_report(pruned_eval)),
            ]
            summary["compression"] = report.model_dump(mode="json")
            summary["pruned"] = pruned_eval.model_dump(mode="json")

    tuned: Dict[str, TransformerModel] = {t.task_id: pruned for t in tasks}
    if "recover" in wanted:
        with _Stage(monitor, "recover"):
            written = []
            for task in tasks:
                if task.kind != "classification":
                    continue
                merged, log = recover(pruned, task, template_for(task), config.recovery, tokenizer)
                tuned[task.task_id] = merged
                written.append(
                    str(save_checkpoint(merged, out / f"recovered-{task.task_id}.ckpt", meta={"task": task.task_id}))
                )
                written.extend(_write_report(out, f"recover_log-{task.task_id}", log))
            recovered = evaluate_suite(tuned, tasks, config.evaluation, "recovered", baseline, corpora)
            written.extend(_write_report(out, "eval_report", recovered, render_eval_report(recovered)))
            artifacts["recover"] = written
            summary["recovered"] = recovered.model_dump(mode="json")

    classification = [t for t in tasks if t.kind == "classification"]
    if "prompt-matrix" in wanted and classification:
        with _Stage(monitor, "prompt-matrix"):
            matrix = prompt_task_matrix(
                tuned, matrix_templates(config.evaluation, classification), classification,
                config.evaluation.prompt_shots, config.evaluation.seed, tokenizer,
            )
            artifacts["prompt-matrix"] = _write_report(out, "prompt_matrix", matrix, render_prompt_matrix(matrix))
            summary["prompt_matrix"] = matrix.model_dump(mode="json")

    if "sweep" in wanted:
        with _Stage(monitor, "sweep"):
            sweep_task = next((t for t in tasks if t.task_id == config.evaluation.sweep_task), None)
            if sweep_task is None:
                raise ConfigError(f"扫描任务不在任务列表中: {config.evaluation.sweep_task}")
            template = template_for(sweep_task)

            def factory(k: int) -> TransformerModel:
                return recover(pruned, sweep_task, template, config.recovery, tokenizer, shots=k)[0]

            rows = shots_sweep(
                factory, sweep_task, config.evaluation.sweep_shots, config.evaluation.seed, template,
                corpora, config.evaluation.ppl_window, config.evaluation.prompt_shots, tokenizer,
            )
            artifacts["sweep"] = _write_report(out, "sweep", rows, render_sweep(rows))
            summary["sweep"] = [r.model_dump(mode="json") for r in rows]

    monitor.log_metrics()
    summary["artifacts"] = artifacts
    return summary
