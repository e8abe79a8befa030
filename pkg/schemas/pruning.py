from typing import Dict, List, Optional
from pydantic import BaseModel, ConfigDict, Field, model_validator


class GroupScore(BaseModel):
    """分组重要性 I_G 及各成员的 I_{P_i}"""

    model_config = ConfigDict(frozen=True)

    group_id: str = Field(description="分组标签，例如 layer0.head1")
    layer: int
    kind: str = Field(pattern="^(head|channel)$")
    unit: int
    importance: float = Field(ge=0)
    breakdown: Dict[str, float] = Field(default_factory=dict, description="成员ID -> 成员重要性")
    scorer: str = "taylor"

    @model_validator(mode="after")
    def _check_sum(self):
        if self.breakdown:
            total = sum(self.breakdown.values())
            if abs(total - self.importance) > 1e-9 * max(1.0, abs(total)):
                raise ValueError("importance 必须等于成员重要性之和")
        return self

    def scaled(self, factor: float) -> "GroupScore":
        return self.model_copy(
            update={
                "importance": self.importance * factor,
                "breakdown": {k: v * factor for k, v in self.breakdown.items()},
            }
        )


class PlanEntry(BaseModel):
    layer: int = Field(ge=0)
    kind: str = Field(pattern="^(head|channel)$")
    units: List[int] = Field(default_factory=list)


class PruningPlan(BaseModel):
    """剪枝计划：按 (layer, kind) 列出要删除的单元"""

    entries: List[PlanEntry] = Field(default_factory=list)
    ratio: float = 0.0
    policy: str = "per-layer"
    scorer: str = "taylor"
    scores_ref: Optional[str] = Field(None, description="评分快照文件")

    def units_for(self, layer: int, kind: str) -> List[int]:
        units: List[int] = []
        for entry in self.entries:
            if entry.layer == layer and entry.kind == kind:
                units.extend(entry.units)
        return units

    def is_empty(self) -> bool:
        return all(not e.units for e in self.entries)


class CompressionReport(BaseModel):
    original_params: int
    pruned_params: int
    reduction_fraction: float = Field(description="1 - pruned/original")
    layer_heads: List[int]
    layer_ffn: List[int]
    group_ratio: Optional[float] = Field(None, description="按分组计的剪枝比例（与参数比例分开报告）")
    policy: Optional[str] = None
