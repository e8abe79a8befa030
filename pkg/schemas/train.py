from typing import List, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    """训练超参数（恢复阶段默认值：lr 1e-4、warmup 100、3 epochs、AdamW）"""

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(1e-4, gt=0, description="峰值学习率")
    warmup_steps: int = Field(100, ge=0, description="线性预热步数（0 → lr）")
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    batch_size: int = Field(8, ge=1, description="桌面级默认 8，7B 规模设置为 64")
    epochs: int = Field(3, ge=1)
    max_steps: Optional[int] = Field(None, ge=0, description="步数上限（None 表示不限制）")
    seed: int = 7
    mask_context: bool = Field(True, description="只对答案 token 计损失")
    log_every: int = Field(10, ge=1)


class TrainLogEntry(BaseModel):
    step: int
    loss: float
    lr: float


class TrainingLog(BaseModel):
    """训练日志：逐步 loss / lr，以及冻结权重校验和"""

    total_steps: int
    warmup_steps: int = Field(description="实际生效的预热步数")
    trainable_params: int
    base_checksum_before: Optional[str] = None
    base_checksum_after: Optional[str] = None
    entries: List[TrainLogEntry] = Field(default_factory=list)

    @property
    def initial_loss(self) -> Optional[float]:
        return self.entries[0].loss if self.entries else None

    @property
    def final_loss(self) -> Optional[float]:
        return self.entries[-1].loss if self.entries else None
