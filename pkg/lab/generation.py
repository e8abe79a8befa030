"""温度 + top-k 采样生成"""
from typing import Optional

import torch
import torch.nn.functional as F

from utils import GenerationError

from .model import TransformerModel, as_token_tensor
from .tokenizer import BOS_ID, EOS_ID, ByteTokenizer


def top_k_filter(logits: torch.Tensor, k: int) -> torch.Tensor:
    k = min(k, logits.shape[-1])
    values, indices = torch.topk(logits, k, dim=-1)
    filtered = torch.full_like(logits, float("-inf"))
    return filtered.scatter(-1, indices, values)


def next_token(
    logits: torch.Tensor, temperature: float, top_k: int, generator: torch.Generator
) -> int:
    if temperature == 0 or top_k == 1:
        return int(torch.argmax(logits))
    logits = top_k_filter(logits / temperature, top_k)
    probs = F.softmax(logits.to(torch.float64), dim=-1)
    return int(torch.multinomial(probs, 1, generator=generator))


@torch.no_grad()
def generate(
    model: TransformerModel,
    prompt: str,
    max_tokens: int = 64,
    temperature: float = 1.0,
    top_k: int = 50,
    seed: int = 7,
    tokenizer: Optional[ByteTokenizer] = None,
) -> str:
    """自回归采样，遇到 eos 或达到 max_tokens 停止；上下文超长时保留最近的 max_seq_len 个 token"""
    if temperature < 0:
        raise GenerationError(f"temperature 不能为负: {temperature}")
    if top_k < 1:
        raise GenerationError(f"top_k 必须 ≥ 1: {top_k}")
    if max_tokens < 0:
        raise GenerationError(f"max_tokens 不能为负: {max_tokens}")

    tokenizer = tokenizer or ByteTokenizer()
    ids = [BOS_ID] + tokenizer.encode(prompt)
    generator = torch.Generator().manual_seed(seed)
    produced = []
    for _ in range(max_tokens):
        window = as_token_tensor(model, ids[-model.config.max_seq_len :])
        token = next_token(model(window)[-1], temperature, top_k, generator)
        if token == EOS_ID:
            break
        produced.append(token)
        ids.append(token)
    return tokenizer.decode(produced)
