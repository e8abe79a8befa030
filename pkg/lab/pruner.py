"""结构化剪枝执行：删除选中分组的行块 / 列块，重建紧凑的稠密模型"""
from typing import Dict, Iterable, List, Optional

import torch

from schemas import CompressionReport, GroupScore, PlanEntry, PruningPlan
from utils import PlanError, logger

from .model import (
    ATTENTION_ROLES,
    TransformerModel,
    closed_form_parameter_count,
    empty_like_config,
    has_adapters,
    parameter_count,
)


def plan_from_selection(
    selected: Iterable[GroupScore],
    ratio: float = 0.0,
    policy: str = "per-layer",
    scorer: str = "taylor",
    scores_ref: Optional[str] = None,
) -> PruningPlan:
    units: Dict[tuple, List[int]] = {}
    for s in selected:
        units.setdefault((s.layer, s.kind), []).append(s.unit)
    entries = [
        PlanEntry(layer=layer, kind=kind, units=sorted(us))
        for (layer, kind), us in sorted(units.items(), key=lambda kv: (kv[0][0], kv[0][1] != "head"))
    ]
    return PruningPlan(entries=entries, ratio=ratio, policy=policy, scorer=scorer, scores_ref=scores_ref)


def validate_plan(model: TransformerModel, plan: PruningPlan) -> None:
    config = model.config
    seen: Dict[tuple, set] = {}
    for entry in plan.entries:
        if entry.layer >= config.n_layers:
            raise PlanError("计划中的层不存在", detail={"layer": entry.layer, "n_layers": config.n_layers})
        count = config.heads_at(entry.layer) if entry.kind == "head" else config.ffn_at(entry.layer)
        bucket = seen.setdefault((entry.layer, entry.kind), set())
        for unit in entry.units:
            if not 0 <= unit < count:
                raise PlanError(
                    "计划中的单元下标越界",
                    detail={"layer": entry.layer, "kind": entry.kind, "unit": unit, "count": count},
                )
            if unit in bucket:
                raise PlanError("计划中的单元重复", detail={"layer": entry.layer, "kind": entry.kind, "unit": unit})
            bucket.add(unit)
        if len(bucket) >= count:
            raise PlanError("剪枝计划会剪空某一层", detail={"layer": entry.layer, "kind": entry.kind})


def _keep_index(count: int, removed: Iterable[int], width: int) -> torch.Tensor:
    removed = set(removed)
    rows = [u * width + i for u in range(count) if u not in removed for i in range(width)]
    return torch.tensor(rows, dtype=torch.long)


def apply_pruning(model: TransformerModel, plan: PruningPlan) -> TransformerModel:
    """返回新模型；被保留的头按原顺序连续重新编号，其余张量逐位复制"""
    if has_adapters(model):
        raise PlanError("带适配器的模型不能直接剪枝，请先合并")
    validate_plan(model, plan)

    config = model.config
    hd = config.head_dim
    if plan.is_empty():
        new_config = config
    else:
        heads = [config.heads_at(l) - len(set(plan.units_for(l, "head"))) for l in range(config.n_layers)]
        ffn = [config.ffn_at(l) - len(set(plan.units_for(l, "channel"))) for l in range(config.n_layers)]
        new_config = config.with_layer_shapes(heads, ffn)

    keep = {}
    for layer in range(config.n_layers):
        keep[(layer, "head")] = _keep_index(config.heads_at(layer), plan.units_for(layer, "head"), hd)
        keep[(layer, "channel")] = _keep_index(config.ffn_at(layer), plan.units_for(layer, "channel"), 1)

    state = {}
    for name, tensor in model.state_dict().items():
        parts = name.split(".")
        if parts[0] == "layers" and parts[-1] == "weight" and parts[-2].endswith("_proj"):
            layer, role = int(parts[1]), parts[-2]
            index = keep[(layer, "head" if role in ATTENTION_ROLES else "channel")]
            # o/down 按列删除，其余按行删除
            axis = 1 if role in ("o_proj", "down_proj") else 0
            state[name] = tensor.index_select(axis, index).clone()
        else:
            state[name] = tensor.clone()

    pruned = empty_like_config(new_config, model.dtype)
    pruned.load_state_dict(state)
    logger.info(
        f"✅ 剪枝完成: 参数量 {parameter_count(model)} → {parameter_count(pruned)}，"
        f"每层头数 {[h for h, _ in new_config.layer_shapes()]}，"
        f"每层 FFN 宽度 {[f for _, f in new_config.layer_shapes()]}"
    )
    return pruned


def compression_fraction(original_params: float, pruned_params: float) -> float:
    if original_params <= 0:
        raise PlanError("原始参数量必须大于 0")
    return 1.0 - pruned_params / original_params


def compression_report(
    original: TransformerModel,
    pruned: TransformerModel,
    group_ratio: Optional[float] = None,
    policy: Optional[str] = None,
) -> CompressionReport:
    original_params = parameter_count(original)
    pruned_params = parameter_count(pruned)
    if pruned_params != closed_form_parameter_count(pruned.config):
        raise PlanError("剪枝后参数量与形状公式不一致")
    shapes = pruned.config.layer_shapes()
    return CompressionReport(
        original_params=original_params,
        pruned_params=pruned_params,
        reduction_fraction=compression_fraction(original_params, pruned_params),
        layer_heads=[h for h, _ in shapes],
        layer_ffn=[f for _, f in shapes],
        group_ratio=group_ratio,
        policy=policy,
    )
