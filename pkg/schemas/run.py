from typing import Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .model import ModelConfig
from .train import TrainConfig

STAGES = ("build", "pretrain", "baseline", "prune", "recover", "prompt-matrix", "sweep")


class PretrainConfig(BaseModel):
    """桌面级预训练（代替下载的预训练 LLaMA 权重）"""

    model_config = ConfigDict(extra="forbid")

    items_per_task: int = Field(200, ge=0, description="每个任务取多少训练样本")
    corpus_windows: int = Field(100, ge=0, description="语料窗口数")
    context_shots: int = Field(0, ge=0)
    train: TrainConfig = Field(
        default_factory=lambda: TrainConfig(
            lr=3e-3, warmup_steps=50, batch_size=16, epochs=6, mask_context=True
        )
    )


class CalibrationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    count: int = Field(20, ge=1, description="校准序列数")
    seq_len: int = Field(128, ge=2, description="校准序列长度")
    corpus: str = Field("synthetic-books", description="校准语料来源")
    corpus_sentences: int = Field(2000, ge=1)
    seed: int = 7


class PruningConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ratio: float = Field(0.2, ge=0.0, lt=1.0)
    policy: str = Field("per-layer", pattern="^(per-layer|global)$")
    scorer: str = Field("taylor", pattern="^(taylor|magnitude)$")
    protect_edge_layers: bool = Field(False, description="保护首尾层不剪枝")


class RecoveryConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    rank: int = Field(8, ge=1)
    alpha: Optional[float] = Field(None, gt=0, description="缩放常数，默认等于 rank")
    shots: int = Field(50, ge=1, description="每个任务的微调样本数 K")
    context_shots: int = Field(0, ge=0, description="微调序列中附带的已解答示例数")
    train: TrainConfig = Field(default_factory=TrainConfig)


class EvaluationConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    tasks: List[str] = Field(
        default_factory=lambda: ["pattern", "copy", "parity", "keyword"]
    )
    task_files: Dict[str, str] = Field(default_factory=dict, description="task_id -> JSONL 文件")
    templates: List[str] = Field(default_factory=list, description="为空时使用各任务的匹配模板")
    prompt_shots: int = Field(0, ge=0, description="评测时拼接的已解答示例数")
    train_items: int = Field(200, ge=1)
    eval_items: int = Field(100, ge=1)
    seed: int = 7
    ppl_window: int = Field(64, ge=2)
    ppl_corpora: Dict[str, int] = Field(
        default_factory=lambda: {"wiki-analog": 11, "ptb-analog": 13},
        description="困惑度语料名 -> 生成种子",
    )
    ppl_sentences: int = Field(200, ge=1)
    sweep_task: str = "pattern"
    sweep_shots: List[int] = Field(default_factory=lambda: [10, 20, 50])


class PathsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out_dir: str = "artifacts/run"


class StagesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    skip: List[str] = Field(default_factory=list)

    @field_validator("skip")
    @classmethod
    def _check_stages(cls, v):
        unknown = [s for s in v if s not in STAGES]
        if unknown:
            raise ValueError(f"未知阶段: {unknown}，可选: {list(STAGES)}")
        return v


class RunConfig(BaseModel):
    """流水线完整配置：build → pretrain → baseline → prune → recover → prompt-matrix → sweep"""

    model_config = ConfigDict(extra="forbid", protected_namespaces=())

    model: ModelConfig = Field(default_factory=ModelConfig)
    pretrain: PretrainConfig = Field(default_factory=PretrainConfig)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    pruning: PruningConfig = Field(default_factory=PruningConfig)
    recovery: RecoveryConfig = Field(default_factory=RecoveryConfig)
    evaluation: EvaluationConfig = Field(default_factory=EvaluationConfig)
    paths: PathsConfig = Field(default_factory=PathsConfig)
    stages: StagesConfig = Field(default_factory=StagesConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """所有种子统一替换（PRUNELAB_SEED 覆盖时使用）"""
        data = self.model_dump()
        data["model"]["rng_seed"] = seed
        data["pretrain"]["train"]["seed"] = seed
        data["calibration"]["seed"] = seed
        data["recovery"]["train"]["seed"] = seed
        data["evaluation"]["seed"] = seed
        return RunConfig(**data)

    def skipped(self, stage: str) -> bool:
        return stage in self.stages.skip
