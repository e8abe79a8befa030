"""分类准确率、困惑度与三类实验网格（提示词 × 任务、恢复率、示例数扫描）

选项打分：以拼接好的提示词为条件，选项 token 的对数似然之和除以选项 token 数，
取最大者；差值在 1e-12 以内视为同分，取下标最小的选项。
"""
import math
from statistics import fmean
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from schemas import ClassificationScore, PromptMatrix, PromptTemplate, SweepRow, TaskDataset
from utils import DatasetError, EvaluationError, logger

from .model import TransformerModel, as_token_tensor
from .tasks import assemble_few_shot, sample_shots, template_for
from .tokenizer import BOS_ID, ByteTokenizer

TIE_TOLERANCE = 1e-12

ModelOrModels = Union[TransformerModel, Mapping[str, TransformerModel]]


def _argmax(scores: Sequence[float]) -> int:
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best] + TIE_TOLERANCE:
            best = i
    return best


@torch.no_grad()
def option_log_likelihood(model: TransformerModel, context: List[int], option: List[int]) -> float:
    """按 token 数归一化的选项对数似然；上下文超长时从左侧截断"""
    max_len = model.config.max_seq_len
    if len(option) >= max_len:
        raise EvaluationError("选项长度超过 max_seq_len", detail={"option_tokens": len(option)})
    keep = max_len - len(option)
    context = context[-keep:]
    ids = as_token_tensor(model, context + option)
    logits = model(ids)
    log_probs = F.log_softmax(logits[:-1].to(torch.float64), dim=-1)
    start = len(context)
    total = math.fsum(
        float(log_probs[start - 1 + j, tok]) for j, tok in enumerate(option)
    )
    return total / len(option)


def score_classification(
    model: TransformerModel,
    query: str,
    options: Sequence[str],
    tokenizer: Optional[ByteTokenizer] = None,
) -> ClassificationScore:
    if not options:
        raise EvaluationError("选项不能为空")
    tokenizer = tokenizer or ByteTokenizer()
    context = [BOS_ID] + tokenizer.encode(query)
    scores = []
    for index, option in enumerate(options):
        option_ids = tokenizer.encode(option)
        if not option_ids:
            raise EvaluationError("选项分词后为空", detail={"option": index})
        scores.append(option_log_likelihood(model, context, option_ids))
    return ClassificationScore(predicted=_argmax(scores), scores=scores)


def evaluate_accuracy(
    model: TransformerModel,
    task: TaskDataset,
    template: Optional[PromptTemplate] = None,
    shots: int = 0,
    seed: int = 7,
    tokenizer: Optional[ByteTokenizer] = None,
) -> float:
    """eval 集上的准确率；每个样本的示例按 (seed, 样本) 独立重采样"""
    if not task.eval:
        raise EvaluationError(f"任务 {task.task_id} 的 eval 集为空")
    if shots > len(task.train):
        raise EvaluationError(
            "示例数超过训练池大小", detail={"task": task.task_id, "shots": shots, "pool": len(task.train)}
        )
    template = template or template_for(task)
    tokenizer = tokenizer or ByteTokenizer()

    correct = 0
    for item in task.eval:
        try:
            examples = sample_shots(task.train, shots, item, seed)
        except DatasetError as e:
            raise EvaluationError(e.msg, detail=e.detail)
        prompt = assemble_few_shot(template, examples, item)
        result = score_classification(model, prompt, item.options, tokenizer)
        correct += int(result.predicted == item.gold)
    return correct / len(task.eval)


@torch.no_grad()
def evaluate_perplexity(
    model: TransformerModel,
    corpus: Union[str, Sequence[int]],
    window: int = 64,
    tokenizer: Optional[ByteTokenizer] = None,
) -> float:
    """不重叠窗口上下一个 token 平均负对数似然的指数"""
    tokenizer = tokenizer or ByteTokenizer()
    ids = tokenizer.encode(corpus) if isinstance(corpus, str) else list(corpus)
    if len(ids) < 2:
        raise EvaluationError("困惑度语料至少需要 2 个 token")
    window = min(max(window, 2), model.config.max_seq_len)

    total_nll, count = 0.0, 0
    for start in range(0, len(ids), window):
        chunk = ids[start : start + window]
        if len(chunk) < 2:
            continue
        tokens = torch.tensor(chunk, dtype=torch.long)
        logits = model(tokens).to(torch.float64)
        nll = F.cross_entropy(logits[:-1], tokens[1:], reduction="sum")
        total_nll += float(nll)
        count += len(chunk) - 1
    return math.exp(total_nll / count)


def _model_for(models: ModelOrModels, task_id: str) -> TransformerModel:
    if isinstance(models, Mapping):
        if task_id not in models:
            raise EvaluationError(f"缺少任务 {task_id} 的微调模型")
        return models[task_id]
    return models


def prompt_task_matrix(
    models: ModelOrModels,
    templates: Sequence[PromptTemplate],
    tasks: Sequence[TaskDataset],
    shots: int = 0,
    seed: int = 7,
    tokenizer: Optional[ByteTokenizer] = None,
) -> PromptMatrix:
    """每个 (模板, 任务) 的准确率；任务列使用在该任务上微调的模型（可传入单个模型）"""
    if not templates or not tasks:
        raise EvaluationError("至少需要一个模板和一个任务")
    accuracy: Dict[str, Dict[str, float]] = {}
    for template in templates:
        row = {}
        for task in tasks:
            row[task.task_id] = evaluate_accuracy(
                _model_for(models, task.task_id), task, template, shots, seed, tokenizer
            )
            logger.debug(f"提示词矩阵 [{template.template_id} × {task.task_id}] = {row[task.task_id]:.4f}")
        accuracy[template.template_id] = row

    best: Dict[str, str] = {}
    for task in tasks:
        top = max(accuracy[t.template_id][task.task_id] for t in templates)
        best[task.task_id] = min(
            t.template_id for t in templates if accuracy[t.template_id][task.task_id] >= top - TIE_TOLERANCE
        )
    return PromptMatrix(
        templates=[t.template_id for t in templates],
        tasks=[t.task_id for t in tasks],
        accuracy=accuracy,
        best_template=best,
    )


def mean_accuracy(accuracies: Mapping[str, float]) -> float:
    if not accuracies:
        raise EvaluationError("准确率列表为空")
    return fmean(accuracies.values())


def recovery_rate(accuracies: Sequence[float], baseline: Sequence[float]) -> float:
    """100 × mean(accuracies) / mean(baseline)"""
    if not accuracies or len(accuracies) != len(baseline):
        raise EvaluationError(
            "准确率与基线长度必须相同且非空", detail={"accuracies": len(accuracies), "baseline": len(baseline)}
        )
    return recovery_rate_from_means(fmean(accuracies), fmean(baseline))


def recovery_rate_from_means(mean: float, baseline_mean: float) -> float:
    if baseline_mean <= 0:
        raise EvaluationError("基线平均准确率必须大于 0")
    return 100.0 * mean / baseline_mean


def shots_sweep(
    model_factory: Callable[[int], TransformerModel],
    task: TaskDataset,
    shots_list: Sequence[int],
    seed: int = 7,
    template: Optional[PromptTemplate] = None,
    corpora: Optional[Mapping[str, str]] = None,
    window: int = 64,
    prompt_shots: int = 0,
    tokenizer: Optional[ByteTokenizer] = None,
) -> List[SweepRow]:
    """对每个 K 用 model_factory(K) 得到新微调的模型，评测准确率与困惑度，按 K 升序"""
    too_many = [k for k in shots_list if k > len(task.train)]
    if too_many:
        raise EvaluationError("示例数超过训练池大小", detail={"shots": too_many, "pool": len(task.train)})
    rows = []
    for k in sorted(set(shots_list)):
        model = model_factory(k)
        acc = {task.task_id: evaluate_accuracy(model, task, template, prompt_shots, seed, tokenizer)}
        ppl = {name: evaluate_perplexity(model, text, window, tokenizer) for name, text in (corpora or {}).items()}
        rows.append(SweepRow(shots=k, perplexity=ppl, accuracy=acc, average=mean_accuracy(acc)))
        logger.info(f"示例数扫描 K={k}: 准确率 {acc[task.task_id]:.4f}")
    return rows
