from typing import List, Optional
from pydantic import BaseModel, ConfigDict, Field


class ModelConfig(BaseModel):
    """桌面级 LLaMA 结构模型的维度参数

    剪枝后每层的头数 / FFN 宽度记录在 layer_heads / layer_ffn 中，
    为 None 时表示各层与 n_heads / ffn_dim 一致。
    """

    model_config = ConfigDict(extra="forbid")

    vocab_size: int = Field(259, ge=1, description="词表大小（256 字节 + pad/bos/eos）")
    embed_dim: int = Field(32, ge=1, description="残差流宽度")
    n_layers: int = Field(2, ge=1, description="层数")
    n_heads: int = Field(4, ge=1, description="构建时每层注意力头数")
    head_dim: int = Field(8, ge=1, description="每头维度")
    ffn_dim: int = Field(64, ge=1, description="构建时每层 FFN 通道数")
    max_seq_len: int = Field(256, ge=1, description="最大序列长度")
    rng_seed: int = Field(7, description="初始化随机种子")
    rope_base: float = Field(10000.0, gt=0)
    norm_eps: float = Field(1e-6, gt=0)
    layer_heads: Optional[List[int]] = Field(None, description="剪枝后各层头数")
    layer_ffn: Optional[List[int]] = Field(None, description="剪枝后各层 FFN 宽度")

    def heads_at(self, layer: int) -> int:
        return self.layer_heads[layer] if self.layer_heads is not None else self.n_heads

    def ffn_at(self, layer: int) -> int:
        return self.layer_ffn[layer] if self.layer_ffn is not None else self.ffn_dim

    def layer_shapes(self) -> List[tuple]:
        """[(heads, ffn), ...]，依赖图只依赖这份形状记录"""
        return [(self.heads_at(i), self.ffn_at(i)) for i in range(self.n_layers)]

    def with_layer_shapes(self, heads: List[int], ffn: List[int]) -> "ModelConfig":
        return self.model_copy(update={"layer_heads": list(heads), "layer_ffn": list(ffn)})
