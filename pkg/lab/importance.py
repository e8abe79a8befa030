"""分组重要性评分与剪枝选择

成员重要性取一阶泰勒项 |Σ (∂L/∂P)·P|，只在该成员会被删除的行块 / 列块上求内积；
分组重要性为成员重要性之和。梯度在校准集上逐序列求和。
"""
import math
import random
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence

import torch

from schemas import GroupScore
from utils import DatasetError, ImportanceError, SelectionError, ShapeError, logger

from .autograd import GradientTape, check_finite
from .depgraph import ParamNode, PruningGroup, build_graph, enumerate_groups
from .model import TransformerModel, next_token_loss, projection_modules, projection_param_name
from .tokenizer import ByteTokenizer

SCORERS = ("taylor", "magnitude")
POLICIES = ("per-layer", "global")
_KIND_ORDER = {"head": 0, "channel": 1}


@dataclass
class CalibrationSet:
    sequences: List[List[int]]
    seq_len: int
    source: str = "synthetic-books"
    seed: int = 7

    @property
    def count(self) -> int:
        return len(self.sequences)


@dataclass
class GradientStore:
    """参数名 -> 校准集上梯度之和（float64）"""

    grads: Dict[str, torch.Tensor] = field(default_factory=dict)
    count: int = 0

    def __contains__(self, name: str) -> bool:
        return name in self.grads

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.grads[name]


def build_calibration_set(
    tokenizer: ByteTokenizer,
    corpus: str,
    count: int = 20,
    seq_len: int = 128,
    seed: int = 7,
    source: str = "synthetic-books",
) -> CalibrationSet:
    """从语料中按种子随机截取 count 个长度为 seq_len 的窗口"""
    if seq_len < 2:
        raise DatasetError("校准序列长度至少为 2")
    ids = tokenizer.encode(corpus)
    if len(ids) < seq_len:
        raise DatasetError(
            "语料长度不足一个校准窗口", detail={"tokens": len(ids), "seq_len": seq_len}
        )
    rng = random.Random(seed)
    starts = [rng.randrange(0, len(ids) - seq_len + 1) for _ in range(count)]
    return CalibrationSet(
        sequences=[ids[s : s + seq_len] for s in starts], seq_len=seq_len, source=source, seed=seed
    )


def prunable_parameter_names(model: TransformerModel) -> List[str]:
    return [projection_param_name(layer, role) for layer, role, _ in projection_modules(model)]


@contextmanager
def _tracking(params: Dict[str, torch.Tensor]) -> Iterator[None]:
    # 适配器形态下基座权重被冻结，打分时临时打开
    flags = {name: p.requires_grad for name, p in params.items()}
    try:
        for p in params.values():
            p.requires_grad_(True)
        yield
    finally:
        for name, p in params.items():
            p.requires_grad_(flags[name])


def accumulate_calibration_gradients(
    model: TransformerModel, calib: CalibrationSet, names: Optional[Sequence[str]] = None
) -> GradientStore:
    named = dict(model.named_parameters())
    names = list(names) if names is not None else prunable_parameter_names(model)
    params = {n: named[n] for n in names}
    store = GradientStore(grads={n: torch.zeros(p.shape, dtype=torch.float64) for n, p in params.items()})

    with _tracking(params):
        # 固定顺序逐条求和，保证结果逐位可复现
        for index, seq in enumerate(calib.sequences):
            if not 2 <= len(seq) <= model.config.max_seq_len:
                raise DatasetError("校准序列长度越界", detail={"sequence": index, "length": len(seq)})
            with GradientTape() as tape:
                for n, p in params.items():
                    tape.watch(n, p)
                loss = next_token_loss(model, seq)
                check_finite(loss.detach(), "校准损失", sequence=index)
                grads = tape.gradient(loss)
            for n, g in grads.items():
                check_finite(g, f"校准梯度 {n}", sequence=index)
                store.grads[n] += g.detach().to(torch.float64)
            store.count += 1

    logger.debug(f"校准梯度累计完成，序列数 {store.count}")
    return store


def member_slice(tensor: torch.Tensor, node: ParamNode, head_dim: int) -> torch.Tensor:
    """成员对应的行块 / 列块（剪掉该分组时被删除的部分）"""
    width = head_dim if node.kind == "head" else 1
    start = node.unit * width
    if node.axis == "rows":
        return tensor[start : start + width, :]
    return tensor[:, start : start + width]


def element_importance(weight_slice: torch.Tensor, grad_slice: torch.Tensor) -> float:
    if tuple(weight_slice.shape) != tuple(grad_slice.shape):
        raise ShapeError(
            "权重与梯度形状不一致",
            detail={"weight": list(weight_slice.shape), "grad": list(grad_slice.shape)},
        )
    inner = (grad_slice.to(torch.float64) * weight_slice.to(torch.float64)).sum()
    return abs(float(inner))


def magnitude_importance(weight_slice: torch.Tensor) -> float:
    return float(weight_slice.to(torch.float64).abs().sum())


def group_importance(
    group: PruningGroup,
    model: TransformerModel,
    store: Optional[GradientStore] = None,
    scorer: str = "taylor",
) -> GroupScore:
    if scorer not in SCORERS:
        raise ImportanceError(f"未知评分方式: {scorer}", detail={"allowed": list(SCORERS)})
    named = dict(model.named_parameters())
    head_dim = model.config.head_dim
    breakdown: Dict[str, float] = {}
    for node in group.members:
        weight = member_slice(named[node.param_name].detach(), node, head_dim)
        if scorer == "magnitude":
            breakdown[node.id] = magnitude_importance(weight)
            continue
        if store is None or node.param_name not in store:
            raise ImportanceError("梯度存储缺少分组成员", detail={"member": node.id})
        breakdown[node.id] = element_importance(weight, member_slice(store[node.param_name], node, head_dim))

    return GroupScore(
        group_id=group.label,
        layer=group.layer,
        kind=group.kind,
        unit=group.unit,
        importance=math.fsum(breakdown.values()),
        breakdown=breakdown,
        scorer=scorer,
    )


def score_groups(
    model: TransformerModel,
    store: Optional[GradientStore] = None,
    scorer: str = "taylor",
    groups: Optional[Iterable[PruningGroup]] = None,
) -> List[GroupScore]:
    groups = list(groups) if groups is not None else enumerate_groups(build_graph(model.config))
    return [group_importance(g, model, store, scorer) for g in groups]


def edge_layers(n_layers: int) -> List[int]:
    return sorted({0, n_layers - 1}) if n_layers > 0 else []


def _rank_key(score: GroupScore):
    return (score.importance, score.layer, _KIND_ORDER[score.kind], score.unit)


def select_groups(
    scores: Sequence[GroupScore],
    ratio: float,
    policy: str = "per-layer",
    protected_layers: Iterable[int] = (),
) -> List[GroupScore]:
    """按比例选出重要性最低的分组

    per-layer: 每个 (layer, kind) 内取 ⌊ratio × 数量⌋ 个；
    global: 每种 kind 在全模型范围内统一排序，之后检查没有层被剪空。
    同分按 (layer, kind, unit) 升序。
    """
    if not scores:
        raise SelectionError("分组评分为空")
    if not 0.0 <= ratio < 1.0:
        raise SelectionError(f"剪枝比例必须在 [0, 1) 内: {ratio}")
    if policy not in POLICIES:
        raise SelectionError(f"未知选择策略: {policy}", detail={"allowed": list(POLICIES)})

    protected = set(protected_layers)
    buckets: Dict[tuple, List[GroupScore]] = {}
    for s in scores:
        buckets.setdefault((s.layer, s.kind), []).append(s)

    selected: List[GroupScore] = []
    if policy == "per-layer":
        for (layer, _), members in sorted(buckets.items(), key=lambda kv: (kv[0][0], _KIND_ORDER[kv[0][1]])):
            if layer in protected:
                continue
            k = math.floor(ratio * len(members) + 1e-9)
            if k >= len(members):
                raise SelectionError(
                    "按层选择会剪空某一层",
                    detail={"layer": layer, "kind": members[0].kind, "ratio": ratio},
                )
            selected.extend(sorted(members, key=_rank_key)[:k])
    else:
        for kind in ("head", "channel"):
            candidates = [s for s in scores if s.kind == kind and s.layer not in protected]
            k = math.floor(ratio * len(candidates) + 1e-9)
            selected.extend(sorted(candidates, key=_rank_key)[:k])

        removed: Dict[tuple, int] = {}
        for s in selected:
            removed[(s.layer, s.kind)] = removed.get((s.layer, s.kind), 0) + 1
        for key, count in removed.items():
            if count >= len(buckets[key]):
                raise SelectionError(
                    "全局选择会剪空某一层",
                    detail={"layer": key[0], "kind": key[1], "ratio": ratio},
                )

    return sorted(selected, key=lambda s: (s.layer, _KIND_ORDER[s.kind], s.unit))
