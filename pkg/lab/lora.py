"""低秩适配器：f(x) = P x + (α/r)·R S x

R 为 (out × r) 高斯初始化（std 0.02），S 为 (r × in) 零初始化，挂载后 ΔP = 0。
基座权重冻结，只训练 R、S；训练结束后把 (α/r)·R S 合并回稠密权重。
"""
import copy
import hashlib
from typing import List, Optional, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from schemas import PromptTemplate, RecoveryConfig, TaskDataset, TrainConfig, TrainingLog
from utils import AdapterError, TrainingError, logger

from .model import TransformerModel, has_adapters, projection_modules
from .tokenizer import ByteTokenizer
from .training import TrainingExample, build_training_examples, train_loop


class LoRALinear(nn.Module):
    """保留原投影的 weight 参数名，适配器参数为 lora_R / lora_S"""

    def __init__(
        self,
        base: nn.Linear,
        rank: int,
        alpha: Optional[float] = None,
        generator: Optional[torch.Generator] = None,
    ):
        super().__init__()
        out_features, in_features = base.weight.shape
        self.in_features = in_features
        self.out_features = out_features
        self.rank = rank
        self.alpha = float(alpha) if alpha is not None else float(rank)
        self.scaling = self.alpha / rank

        self.weight = base.weight
        self.weight.requires_grad_(False)
        dtype = base.weight.dtype
        self.lora_R = nn.Parameter(
            torch.randn(out_features, rank, generator=generator, dtype=dtype) * 0.02
        )
        self.lora_S = nn.Parameter(torch.zeros(rank, in_features, dtype=dtype))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.linear(x, self.weight) + self.scaling * ((x @ self.lora_S.T) @ self.lora_R.T)

    def delta_weight(self) -> torch.Tensor:
        return self.scaling * (self.lora_R @ self.lora_S)

    def merged(self) -> nn.Linear:
        linear = nn.Linear(self.in_features, self.out_features, bias=False)
        with torch.no_grad():
            linear.weight = nn.Parameter(self.weight.detach() + self.delta_weight().detach())
        return linear

    def extra_repr(self) -> str:
        return f"in={self.in_features}, out={self.out_features}, rank={self.rank}, alpha={self.alpha}"


def _parent(model: TransformerModel, layer: int, role: str) -> nn.Module:
    block = model.layers[layer]
    return block.attn if hasattr(block.attn, role) else block.ffn


def attach_adapters(
    model: TransformerModel, rank: int = 8, alpha: Optional[float] = None, seed: int = 7
) -> TransformerModel:
    """返回挂载了适配器的副本，原模型不变"""
    if rank < 1:
        raise AdapterError(f"rank 必须 ≥ 1: {rank}")
    if has_adapters(model):
        raise AdapterError("模型已经挂载了适配器")
    targets = projection_modules(model)
    smallest = min(min(m.weight.shape) for _, _, m in targets)
    if rank > smallest:
        raise AdapterError(
            f"rank {rank} 超过最小投影维度 {smallest}", detail={"rank": rank, "min_dim": smallest}
        )

    adapted = copy.deepcopy(model)
    for p in adapted.parameters():
        p.requires_grad_(False)
    generator = torch.Generator().manual_seed(seed)
    for layer, role, module in projection_modules(adapted):
        setattr(_parent(adapted, layer, role), role, LoRALinear(module, rank, alpha, generator))
    logger.debug(f"已挂载 LoRA 适配器: rank {rank}，可训练参数 {trainable_parameter_count(adapted)}")
    return adapted


def adapter_parameters(model: nn.Module) -> List[nn.Parameter]:
    return [p for name, p in model.named_parameters() if "lora_" in name]


def trainable_parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def merge_adapters(model: TransformerModel) -> TransformerModel:
    """把 (α/r)·R S 合并进基座权重，返回不含额外参数的新模型"""
    if not has_adapters(model):
        raise AdapterError("模型没有挂载适配器，无法合并")
    merged = copy.deepcopy(model)
    for layer, role, module in projection_modules(merged):
        if isinstance(module, LoRALinear):
            setattr(_parent(merged, layer, role), role, module.merged())
    for p in merged.parameters():
        p.requires_grad_(True)
    return merged


def base_checksum(model: nn.Module) -> str:
    """非适配器参数的 sha256，用于证明训练没有改动基座权重"""
    digest = hashlib.sha256()
    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if "lora_" in name:
            continue
        digest.update(name.encode("utf-8"))
        digest.update(p.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def finetune(
    model: TransformerModel, examples: List[TrainingExample], config: TrainConfig
) -> TrainingLog:
    """只训练适配器参数；基座校验和前后必须一致"""
    if not has_adapters(model):
        raise AdapterError("微调前需要先挂载适配器")
    if not examples:
        raise TrainingError("微调数据集为空")
    before = base_checksum(model)
    log = train_loop(model, examples, adapter_parameters(model), config, label="recover")
    after = base_checksum(model)
    if before != after:
        raise TrainingError("基座权重在微调过程中被修改")
    log.base_checksum_before = before
    log.base_checksum_after = after
    return log


def recover(
    model: TransformerModel,
    task: TaskDataset,
    template: PromptTemplate,
    config: RecoveryConfig,
    tokenizer: Optional[ByteTokenizer] = None,
    shots: Optional[int] = None,
) -> Tuple[TransformerModel, TrainingLog]:
    """挂载 → 用 K 个任务样本微调 → 合并，返回合并后的稠密模型与训练日志"""
    tokenizer = tokenizer or ByteTokenizer()
    k = config.shots if shots is None else shots
    examples = build_training_examples(
        task,
        template,
        k,
        config.train.seed,
        tokenizer,
        model.config.max_seq_len,
        context_shots=config.context_shots,
        mask_context=config.train.mask_context,
    )
    adapted = attach_adapters(model, config.rank, config.alpha, seed=config.train.seed)
    log = finetune(adapted, examples, config.train)
    return merge_adapters(adapted), log
