"""桌面级 LLaMA 结构解码器

结构与被剪枝对象一一对应：
  注意力 q/k/v 投影按头分行块，o 投影按头分列块；
  门控 FFN 的 gate/up 投影按通道分行，down 投影按通道分列。
位置编码为逐头旋转编码，不跨头耦合任何参数。
"""
import copy
import math
from typing import List, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from schemas import ModelConfig
from utils import ModelInputError, ShapeError

from .autograd import resolve_dtype

ATTENTION_ROLES = ("q_proj", "k_proj", "v_proj", "o_proj")
FFN_ROLES = ("gate_proj", "up_proj", "down_proj")
PROJECTION_ROLES = ATTENTION_ROLES + FFN_ROLES

TokenInput = Union[Sequence[int], torch.Tensor]


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float):
        super().__init__()
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.weight


def rotary_tables(head_dim: int, max_seq_len: int, base: float, dtype: torch.dtype):
    """逐头共享的旋转相位表 (max_seq_len, head_dim/2)"""
    inv_freq = 1.0 / (base ** (torch.arange(0, head_dim, 2, dtype=torch.float64) / head_dim))
    positions = torch.arange(max_seq_len, dtype=torch.float64)
    angles = torch.outer(positions, inv_freq)
    return angles.cos().to(dtype), angles.sin().to(dtype)


def apply_rotary(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    # x: (B, H, T, hd)，相邻两维成对旋转
    x1, x2 = x[..., 0::2], x[..., 1::2]
    rotated = torch.stack((x1 * cos - x2 * sin, x1 * sin + x2 * cos), dim=-1)
    return rotated.flatten(-2)


class Attention(nn.Module):
    def __init__(self, embed_dim: int, n_heads: int, head_dim: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = head_dim
        inner = n_heads * head_dim
        self.q_proj = nn.Linear(embed_dim, inner, bias=False)
        self.k_proj = nn.Linear(embed_dim, inner, bias=False)
        self.v_proj = nn.Linear(embed_dim, inner, bias=False)
        self.o_proj = nn.Linear(inner, embed_dim, bias=False)

    def forward(self, x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
        B, T, _ = x.shape
        H, hd = self.n_heads, self.head_dim
        q = self.q_proj(x).view(B, T, H, hd).transpose(1, 2)
        k = self.k_proj(x).view(B, T, H, hd).transpose(1, 2)
        v = self.v_proj(x).view(B, T, H, hd).transpose(1, 2)
        q = apply_rotary(q, cos[:T], sin[:T])
        k = apply_rotary(k, cos[:T], sin[:T])

        # 每头独立缩放 1/sqrt(hd)，剪掉其他头不影响
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        causal = torch.triu(torch.ones(T, T, dtype=torch.bool, device=x.device), diagonal=1)
        scores = scores.masked_fill(causal, float("-inf"))
        weights = F.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(B, T, H * hd)
        return self.o_proj(out)


class FeedForward(nn.Module):
    def __init__(self, embed_dim: int, ffn_dim: int):
        super().__init__()
        self.gate_proj = nn.Linear(embed_dim, ffn_dim, bias=False)
        self.up_proj = nn.Linear(embed_dim, ffn_dim, bias=False)
        self.down_proj = nn.Linear(ffn_dim, embed_dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.down_proj(F.silu(self.gate_proj(x)) * self.up_proj(x))


class TransformerBlock(nn.Module):
    def __init__(self, config: ModelConfig, layer: int):
        super().__init__()
        self.attn_norm = RMSNorm(config.embed_dim, config.norm_eps)
        self.attn = Attention(config.embed_dim, config.heads_at(layer), config.head_dim)
        self.ffn_norm = RMSNorm(config.embed_dim, config.norm_eps)
        self.ffn = FeedForward(config.embed_dim, config.ffn_at(layer))

    def forward(self, x, cos, sin):
        x = x + self.attn(self.attn_norm(x), cos, sin)
        return x + self.ffn(self.ffn_norm(x))


class TransformerModel(nn.Module):
    """嵌入与输出头不共享，嵌入维度不参与剪枝"""

    def __init__(self, config: ModelConfig, dtype: Union[str, torch.dtype] = "float32"):
        super().__init__()
        check_config(config)
        self.config = config
        self.embed = nn.Embedding(config.vocab_size, config.embed_dim)
        self.layers = nn.ModuleList(TransformerBlock(config, i) for i in range(config.n_layers))
        self.norm = RMSNorm(config.embed_dim, config.norm_eps)
        self.output = nn.Linear(config.embed_dim, config.vocab_size, bias=False)

        dtype = resolve_dtype(dtype)
        cos, sin = rotary_tables(config.head_dim, config.max_seq_len, config.rope_base, dtype)
        self.register_buffer("rope_cos", cos, persistent=False)
        self.register_buffer("rope_sin", sin, persistent=False)
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.embed.weight.dtype

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        squeeze = tokens.dim() == 1
        if squeeze:
            tokens = tokens.unsqueeze(0)
        x = self.embed(tokens)
        for block in self.layers:
            x = block(x, self.rope_cos, self.rope_sin)
        logits = self.output(self.norm(x))
        return logits[0] if squeeze else logits


def check_config(config: ModelConfig) -> None:
    if config.n_heads * config.head_dim != config.embed_dim:
        raise ShapeError(
            "维度不一致: n_heads × head_dim 必须等于 embed_dim",
            detail={"n_heads": config.n_heads, "head_dim": config.head_dim, "embed_dim": config.embed_dim},
        )
    if config.head_dim % 2:
        raise ShapeError("旋转位置编码要求 head_dim 为偶数", detail={"head_dim": config.head_dim})
    for name, values, limit in (
        ("layer_heads", config.layer_heads, config.n_heads),
        ("layer_ffn", config.layer_ffn, config.ffn_dim),
    ):
        if values is None:
            continue
        if len(values) != config.n_layers:
            raise ShapeError(f"{name} 长度必须等于 n_layers", detail={name: values})
        if any(v < 1 or v > limit for v in values):
            # 任何一层都不允许被剪空
            raise ShapeError(f"{name} 每层取值必须在 [1, {limit}]", detail={name: values})


def build_model(config: ModelConfig, dtype: Union[str, torch.dtype] = "float32") -> TransformerModel:
    """按 rng_seed 确定性初始化：投影为 N(0, 1/fan_in)，嵌入与输出头 N(0, 0.02²)，归一化增益为 1"""
    with torch.random.fork_rng(devices=[]):
        model = TransformerModel(config, dtype)
    generator = torch.Generator().manual_seed(config.rng_seed)
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("norm.weight"):
                param.fill_(1.0)
                continue
            if name in ("embed.weight", "output.weight"):
                std = 0.02
            else:
                std = 1.0 / math.sqrt(param.shape[1])
            param.copy_(torch.randn(param.shape, generator=generator, dtype=param.dtype) * std)
    return model


def empty_like_config(config: ModelConfig, dtype: torch.dtype) -> TransformerModel:
    """按配置构造未初始化的模型（随后整体载入权重），不消耗全局随机数"""
    with torch.random.fork_rng(devices=[]):
        return TransformerModel(config, dtype)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def closed_form_parameter_count(config: ModelConfig) -> int:
    """按形状公式计算参数量（与实际枚举互为校验）"""
    d, hd = config.embed_dim, config.head_dim
    total = 2 * config.vocab_size * d + d
    for layer in range(config.n_layers):
        inner = config.heads_at(layer) * hd
        total += 2 * d + 4 * inner * d + 3 * config.ffn_at(layer) * d
    return total


def as_token_tensor(model: TransformerModel, tokens: TokenInput) -> torch.Tensor:
    ids = tokens if isinstance(tokens, torch.Tensor) else torch.tensor(list(tokens), dtype=torch.long)
    ids = ids.to(torch.long)
    if ids.dim() != 1 or ids.numel() == 0:
        raise ModelInputError("token 序列不能为空且必须为一维")
    if ids.numel() > model.config.max_seq_len:
        raise ModelInputError(
            "序列长度超过 max_seq_len",
            detail={"length": ids.numel(), "max_seq_len": model.config.max_seq_len},
        )
    if int(ids.min()) < 0 or int(ids.max()) >= model.config.vocab_size:
        raise ModelInputError("token id 越界", detail={"vocab_size": model.config.vocab_size})
    return ids


def forward_logits(model: TransformerModel, tokens: TokenInput) -> torch.Tensor:
    """(len, vocab) 的 logits，位置 t 只依赖 ≤ t 的 token"""
    return model(as_token_tensor(model, tokens))


def token_cross_entropy(
    logits: torch.Tensor, targets: torch.Tensor, weights: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """逐位置交叉熵的（加权）平均"""
    ce = F.cross_entropy(logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none")
    if weights is None:
        return ce.mean()
    w = weights.reshape(-1).to(ce.dtype)
    denom = w.sum()
    if float(denom) == 0.0:
        return (ce * w).sum()
    return (ce * w).sum() / denom


def next_token_loss(
    model: TransformerModel, tokens: TokenInput, weights: Optional[torch.Tensor] = None
) -> torch.Tensor:
    """位置 0..len−2 的 logits 对 token 1..len−1 的平均交叉熵"""
    ids = as_token_tensor(model, tokens)
    if ids.numel() < 2:
        raise ModelInputError("计算下一个 token 损失至少需要 2 个 token")
    logits = model(ids)
    return token_cross_entropy(logits[:-1], ids[1:], weights)


def batch_next_token_loss(
    model: TransformerModel, tokens: torch.Tensor, weights: torch.Tensor
) -> torch.Tensor:
    """tokens (B, T) 右侧补齐；weights (B, T−1)，补齐位置权重为 0"""
    if int(tokens.min()) < 0 or int(tokens.max()) >= model.config.vocab_size:
        raise ModelInputError("token id 越界", detail={"vocab_size": model.config.vocab_size})
    logits = model(tokens)
    return token_cross_entropy(logits[:, :-1], tokens[:, 1:], weights)


def projection_modules(model: nn.Module) -> List[tuple]:
    """[(layer, role, module)]：七类线性投影"""
    found = []
    for layer, block in enumerate(model.layers):
        for role in ATTENTION_ROLES:
            found.append((layer, role, getattr(block.attn, role)))
        for role in FFN_ROLES:
            found.append((layer, role, getattr(block.ffn, role)))
    return found


def projection_param_name(layer: int, role: str) -> str:
    sub = "attn" if role in ATTENTION_ROLES else "ffn"
    return f"layers.{layer}.{sub}.{role}.weight"


def has_adapters(model: nn.Module) -> bool:
    return any("lora_" in name for name, _ in model.named_parameters())


def clone_model(model: TransformerModel) -> TransformerModel:
    return copy.deepcopy(model)
