"""参数依赖图与耦合分组

节点是投影矩阵中某个头 / 某个 FFN 通道对应的行块或列块。边按架构连线静态声明：
    第 l 层第 h 个头: q/k/v 的行块 → o 的列块
    第 l 层第 c 个通道: gate/up 的行 → down 的列
边 a→b 满足 Deg⁻(b)=1 或 Deg⁺(a)=1 时视为依赖边，从触发节点沿依赖边
双向扩展到不动点，得到必须一起删除的分组。
"""
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple, Union

from schemas import ModelConfig
from utils import GraphError

from .model import ATTENTION_ROLES, PROJECTION_ROLES, projection_param_name


class Role(str, Enum):
    Q = "q_proj"
    K = "k_proj"
    V = "v_proj"
    O = "o_proj"
    GATE = "gate_proj"
    UP = "up_proj"
    DOWN = "down_proj"


ROW_ROLES = frozenset({Role.Q, Role.K, Role.V, Role.GATE, Role.UP})
_ROLE_ORDER = {role: i for i, role in enumerate(PROJECTION_ROLES)}


@dataclass(frozen=True)
class ParamNode:
    layer: int
    role: Role
    unit: int

    @property
    def axis(self) -> str:
        return "rows" if self.role in ROW_ROLES else "columns"

    @property
    def kind(self) -> str:
        return "head" if self.role.value in ATTENTION_ROLES else "channel"

    @property
    def id(self) -> str:
        return f"layer{self.layer}.{self.role.value}.{self.unit}"

    @property
    def param_name(self) -> str:
        return projection_param_name(self.layer, self.role.value)

    def sort_key(self) -> Tuple[int, int, int]:
        return (self.layer, _ROLE_ORDER[self.role.value], self.unit)


@dataclass(frozen=True)
class PruningGroup:
    """members 按 (layer, role, unit) 排序；相等性只看成员集合"""

    members: Tuple[ParamNode, ...]
    label: str
    trigger: ParamNode = field(compare=False)

    @property
    def layer(self) -> int:
        return self.members[0].layer

    @property
    def kind(self) -> str:
        return self.members[0].kind

    @property
    def unit(self) -> int:
        return self.members[0].unit

    @property
    def member_set(self) -> FrozenSet[ParamNode]:
        return frozenset(self.members)

    def __len__(self) -> int:
        return len(self.members)


ShapeRecord = Union[ModelConfig, Sequence[Tuple[int, int]]]


class DependencyGraph:
    def __init__(self, nodes: Iterable[ParamNode], edges: Iterable[Tuple[ParamNode, ParamNode]]):
        self.nodes: List[ParamNode] = sorted(set(nodes), key=ParamNode.sort_key)
        self._node_set = set(self.nodes)
        self.out_edges: Dict[ParamNode, List[ParamNode]] = {n: [] for n in self.nodes}
        self.in_edges: Dict[ParamNode, List[ParamNode]] = {n: [] for n in self.nodes}
        self.edges: List[Tuple[ParamNode, ParamNode]] = []
        for src, dst in edges:
            if src not in self._node_set or dst not in self._node_set:
                raise GraphError("边引用了不存在的节点", detail={"edge": [src.id, dst.id]})
            self.edges.append((src, dst))
            self.out_edges[src].append(dst)
            self.in_edges[dst].append(src)

    def __contains__(self, node: ParamNode) -> bool:
        return node in self._node_set

    def __len__(self) -> int:
        return len(self.nodes)

    def in_degree(self, node: ParamNode) -> int:
        return len(self.in_edges[node])

    def out_degree(self, node: ParamNode) -> int:
        return len(self.out_edges[node])

    def is_dependency_edge(self, src: ParamNode, dst: ParamNode) -> bool:
        return self.in_degree(dst) == 1 or self.out_degree(src) == 1

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.id,
                    "layer": n.layer,
                    "role": n.role.value,
                    "axis": n.axis,
                    "unit": n.unit,
                    "in_degree": self.in_degree(n),
                    "out_degree": self.out_degree(n),
                }
                for n in self.nodes
            ],
            "edges": [[src.id, dst.id] for src, dst in self.edges],
        }


def _layer_shapes(shape: ShapeRecord) -> List[Tuple[int, int]]:
    if isinstance(shape, ModelConfig):
        return shape.layer_shapes()
    config = getattr(shape, "config", None)
    if isinstance(config, ModelConfig):
        return config.layer_shapes()
    try:
        shapes = [(int(h), int(f)) for h, f in shape]
    except (TypeError, ValueError):
        raise GraphError("形状记录格式错误，应为 [(heads, ffn), ...]")
    for layer, (heads, ffn) in enumerate(shapes):
        if heads < 1 or ffn < 1:
            raise GraphError("每层头数与 FFN 宽度必须 ≥ 1", detail={"layer": layer, "heads": heads, "ffn": ffn})
    return shapes


def build_graph(shape: ShapeRecord) -> DependencyGraph:
    """按层形状声明节点与耦合边（嵌入、归一化与输出头不参与）"""
    nodes: List[ParamNode] = []
    edges: List[Tuple[ParamNode, ParamNode]] = []
    for layer, (heads, ffn) in enumerate(_layer_shapes(shape)):
        for h in range(heads):
            o = ParamNode(layer, Role.O, h)
            sources = [ParamNode(layer, role, h) for role in (Role.Q, Role.K, Role.V)]
            nodes.extend(sources + [o])
            edges.extend((src, o) for src in sources)
        for c in range(ffn):
            down = ParamNode(layer, Role.DOWN, c)
            sources = [ParamNode(layer, role, c) for role in (Role.GATE, Role.UP)]
            nodes.extend(sources + [down])
            edges.extend((src, down) for src in sources)
    return DependencyGraph(nodes, edges)


def group_label(node: ParamNode) -> str:
    return f"layer{node.layer}.{'head' if node.kind == 'head' else 'ffn'}{node.unit}"


def propagate_from_trigger(graph: DependencyGraph, trigger: ParamNode) -> PruningGroup:
    if trigger not in graph:
        raise GraphError("触发节点不在依赖图中", detail={"trigger": getattr(trigger, "id", str(trigger))})

    activated: Set[ParamNode] = {trigger}
    queue = deque([trigger])
    while queue:
        node = queue.popleft()
        # 前向：node → dst
        for dst in graph.out_edges[node]:
            if dst not in activated and graph.is_dependency_edge(node, dst):
                activated.add(dst)
                queue.append(dst)
        # 反向：src → node
        for src in graph.in_edges[node]:
            if src not in activated and graph.is_dependency_edge(src, node):
                activated.add(src)
                queue.append(src)

    members = tuple(sorted(activated, key=ParamNode.sort_key))
    return PruningGroup(members=members, label=group_label(members[0]), trigger=trigger)


def enumerate_groups(graph: DependencyGraph) -> List[PruningGroup]:
    """依次以每个未覆盖节点为触发点，得到互不相交且覆盖全部节点的分组"""
    covered: Set[ParamNode] = set()
    groups: List[PruningGroup] = []
    for node in graph.nodes:
        if node in covered:
            continue
        group = propagate_from_trigger(graph, node)
        covered.update(group.members)
        groups.append(group)
    return sorted(groups, key=lambda g: (g.layer, g.kind != "head", g.unit))


def graph_dump(graph: DependencyGraph) -> dict:
    payload = graph.to_dict()
    payload["groups"] = [
        {
            "label": g.label,
            "layer": g.layer,
            "kind": g.kind,
            "unit": g.unit,
            "members": [m.id for m in g.members],
        }
        for g in enumerate_groups(graph)
    ]
    return payload
