from typing import Dict, List, Optional
from pydantic import BaseModel, Field, field_validator


class ClassificationScore(BaseModel):
    predicted: int
    scores: List[float] = Field(description="各选项按 token 数归一化的对数似然")


class PromptMatrix(BaseModel):
    """提示词 × 任务 准确率矩阵"""

    templates: List[str]
    tasks: List[str]
    accuracy: Dict[str, Dict[str, float]] = Field(description="template -> task -> accuracy")
    best_template: Dict[str, str] = Field(description="task -> 最优模板")


class SweepRow(BaseModel):
    shots: int
    perplexity: Dict[str, float]
    accuracy: Dict[str, float]
    average: float


class RecoveryRow(BaseModel):
    """方法对比行：公开数字或本地实验结果"""

    ratio: str
    method: str
    accuracies: Dict[str, float] = Field(default_factory=dict)
    perplexity: Dict[str, float] = Field(default_factory=dict)
    mean: float
    recovery_rate: Optional[float] = None
    printed_recovery: Optional[float] = None
    delta: Optional[float] = None
    consistent: Optional[bool] = None


class EvalReport(BaseModel):
    label: str
    accuracy: Dict[str, float] = Field(default_factory=dict)
    perplexity: Dict[str, float] = Field(default_factory=dict)
    mean_accuracy: Optional[float] = None
    baseline_mean: Optional[float] = None
    recovery_rate: Optional[float] = None
    prompt_matrix: Optional[PromptMatrix] = None
    sweep: List[SweepRow] = Field(default_factory=list)

    @field_validator("accuracy")
    @classmethod
    def _check_accuracy(cls, v):
        for task, acc in v.items():
            if not 0.0 <= acc <= 1.0:
                raise ValueError(f"{task} 准确率越界: {acc}")
        return v

    @field_validator("perplexity")
    @classmethod
    def _check_ppl(cls, v):
        for corpus, ppl in v.items():
            if ppl < 1.0:
                raise ValueError(f"{corpus} 困惑度不应小于 1: {ppl}")
        return v
