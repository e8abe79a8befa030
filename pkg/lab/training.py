"""训练循环：AdamW + 线性预热，按答案 token 加权的下一个 token 交叉熵

预训练（全参数）与 LoRA 恢复（只训练适配器）共用同一个循环。
"""
import math
import random
from dataclasses import dataclass
from typing import List, Sequence

import torch

from schemas import PromptTemplate, TaskDataset, TrainConfig, TrainingLog, TrainLogEntry
from utils import DatasetError, TrainingError, logger

from .autograd import check_finite
from .model import TransformerModel, batch_next_token_loss, parameter_count
from .tasks import assemble_few_shot, derive_seed, sample_shots
from .tokenizer import BOS_ID, EOS_ID, PAD_ID, ByteTokenizer


@dataclass
class TrainingExample:
    """tokens 与 weights 对齐到目标位置：weights[i] 对应预测 tokens[i+1]"""

    tokens: List[int]
    weights: List[float]

    def __post_init__(self):
        if len(self.tokens) < 2 or len(self.weights) != len(self.tokens) - 1:
            raise DatasetError("训练样本至少 2 个 token，且权重长度为 token 数减 1")


def answer_example(
    tokenizer: ByteTokenizer,
    prompt: str,
    answer: str,
    max_seq_len: int,
    mask_context: bool = True,
) -> TrainingExample:
    prefix = [BOS_ID] + tokenizer.encode(prompt)
    completion = tokenizer.encode(answer) + [EOS_ID]
    tokens = prefix + completion
    if len(completion) + 1 > max_seq_len:
        raise DatasetError("答案长度超过 max_seq_len", detail={"answer": answer})
    # 超长时从左侧截断上下文，答案保持完整
    drop = max(0, len(tokens) - max_seq_len)
    tokens = tokens[drop:]
    answer_start = len(prefix) - drop
    if mask_context:
        weights = [1.0 if i + 1 >= answer_start else 0.0 for i in range(len(tokens) - 1)]
    else:
        weights = [1.0] * (len(tokens) - 1)
    return TrainingExample(tokens=tokens, weights=weights)


def build_training_examples(
    task: TaskDataset,
    template: PromptTemplate,
    count: int,
    seed: int,
    tokenizer: ByteTokenizer,
    max_seq_len: int,
    context_shots: int = 0,
    mask_context: bool = True,
) -> List[TrainingExample]:
    """从 train 池中按种子抽取 count 个样本，拼成 “提示词 + 正确答案” 序列"""
    if count > len(task.train):
        raise DatasetError(
            f"任务 {task.task_id} 的训练池不足 {count} 条", detail={"pool": len(task.train)}
        )
    rng = random.Random(derive_seed("train", task.task_id, seed))
    items = rng.sample(task.train, count)
    examples = []
    for item in items:
        shots = sample_shots(task.train, context_shots, item, seed)
        prompt = assemble_few_shot(template, shots, item)
        examples.append(
            answer_example(tokenizer, prompt, item.options[item.gold], max_seq_len, mask_context)
        )
    return examples


def corpus_examples(
    tokenizer: ByteTokenizer, text: str, windows: int, seq_len: int, seed: int
) -> List[TrainingExample]:
    """语料随机窗口，所有位置都计入损失"""
    if windows <= 0:
        return []
    ids = tokenizer.encode(text)
    if len(ids) < seq_len:
        raise DatasetError("语料长度不足一个训练窗口", detail={"tokens": len(ids), "seq_len": seq_len})
    rng = random.Random(derive_seed("corpus-windows", seed))
    starts = [rng.randrange(0, len(ids) - seq_len + 1) for _ in range(windows)]
    return [
        TrainingExample(tokens=ids[s : s + seq_len], weights=[1.0] * (seq_len - 1)) for s in starts
    ]


def collate(examples: Sequence[TrainingExample]):
    """右侧补齐：tokens (B, T)，weights (B, T−1)，补齐位置权重为 0"""
    width = max(len(e.tokens) for e in examples)
    tokens = torch.full((len(examples), width), PAD_ID, dtype=torch.long)
    weights = torch.zeros((len(examples), width - 1), dtype=torch.float64)
    for row, e in enumerate(examples):
        tokens[row, : len(e.tokens)] = torch.tensor(e.tokens, dtype=torch.long)
        weights[row, : len(e.weights)] = torch.tensor(e.weights, dtype=torch.float64)
    return tokens, weights


def planned_steps(n_examples: int, config: TrainConfig) -> int:
    total = config.epochs * math.ceil(n_examples / config.batch_size)
    if config.max_steps is not None:
        total = min(total, config.max_steps)
    return total


def train_loop(
    model: TransformerModel,
    examples: Sequence[TrainingExample],
    params: Sequence[torch.nn.Parameter],
    config: TrainConfig,
    label: str = "train",
) -> TrainingLog:
    if not examples:
        raise TrainingError("训练集为空")
    params = list(params)
    if not params:
        raise TrainingError("没有可训练的参数")

    total = planned_steps(len(examples), config)
    warmup = min(config.warmup_steps, total)
    if config.warmup_steps > total:
        logger.warning(f"预热步数 {config.warmup_steps} 超过总步数 {total}，按 {warmup} 执行")

    log = TrainingLog(
        total_steps=total,
        warmup_steps=warmup,
        trainable_params=sum(p.numel() for p in params),
    )
    if total == 0:
        return log

    optimizer = torch.optim.AdamW(
        params, lr=config.lr, betas=tuple(config.betas), eps=config.eps, weight_decay=config.weight_decay
    )
    # 第 t 步（从 1 计）使用 lr·min(1, t/warmup)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda s: min(1.0, (s + 1) / warmup) if warmup > 0 else 1.0
    )
    generator = torch.Generator().manual_seed(config.seed)
    per_epoch = math.ceil(len(examples) / config.batch_size)

    logger.info(
        f"⌛️ [{label}] 开始训练: 样本 {len(examples)}，总步数 {total}，"
        f"可训练参数 {log.trainable_params}/{parameter_count(model)}"
    )
    step = 0
    while step < total:
        order = torch.randperm(len(examples), generator=generator).tolist()
        for b in range(per_epoch):
            if step >= total:
                break
            batch = [examples[i] for i in order[b * config.batch_size : (b + 1) * config.batch_size]]
            tokens, weights = collate(batch)
            step += 1
            lr = optimizer.param_groups[0]["lr"]

            loss = batch_next_token_loss(model, tokens, weights)
            check_finite(loss.detach(), f"[{label}] 训练损失", step=step)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            scheduler.step()

            log.entries.append(TrainLogEntry(step=step, loss=float(loss.detach()), lr=lr))
            if step % config.log_every == 0 or step == total:
                logger.info(f"[{label}] step {step}/{total} loss {float(loss.detach()):.4f} lr {lr:.2e}")

    logger.info(f"✅ [{label}] 训练完成: loss {log.initial_loss:.4f} → {log.final_loss:.4f}")
    return log


def pretrain(
    model: TransformerModel, examples: Sequence[TrainingExample], config: TrainConfig
) -> TrainingLog:
    """全参数训练（代替下载的预训练权重）"""
    for p in model.parameters():
        p.requires_grad_(True)
    return train_loop(model, examples, list(model.parameters()), config, label="pretrain")


def mix_examples(*groups: Sequence[TrainingExample], seed: int = 7) -> List[TrainingExample]:
    mixed: List[TrainingExample] = [e for g in groups for e in g]
    random.Random(derive_seed("mix", seed)).shuffle(mixed)
    return mixed


def examples_for_tasks(
    tasks: Sequence[TaskDataset],
    templates: Sequence[PromptTemplate],
    count: int,
    seed: int,
    tokenizer: ByteTokenizer,
    max_seq_len: int,
    context_shots: int = 0,
    mask_context: bool = True,
) -> List[TrainingExample]:
    examples: List[TrainingExample] = []
    for task, template in zip(tasks, templates):
        n = min(count, len(task.train))
        examples.extend(
            build_training_examples(
                task, template, n, seed, tokenizer, max_seq_len, context_shots, mask_context
            )
        )
    return examples
