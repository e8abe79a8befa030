import itertools

import pytest

from utils import GraphError

from lab.depgraph import (
    ParamNode,
    Role,
    build_graph,
    enumerate_groups,
    graph_dump,
    propagate_from_trigger,
)

SHAPES = [
    [(heads, ffn)] * layers
    for layers, heads, ffn in itertools.product([1, 2, 3], [2, 3, 4], [4, 5, 6, 7, 8])
]


def _closure_oracle(graph):
    """独立实现：按度数判定依赖边，再求无向连通分量"""
    indeg, outdeg = {}, {}
    for src, dst in graph.edges:
        outdeg[src] = outdeg.get(src, 0) + 1
        indeg[dst] = indeg.get(dst, 0) + 1
    parent = {n: n for n in graph.nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    for src, dst in graph.edges:
        if indeg[dst] == 1 or outdeg[src] == 1:
            parent[find(src)] = find(dst)
    components = {}
    for n in graph.nodes:
        components.setdefault(find(n), set()).add(n)
    return {frozenset(c) for c in components.values()}


@pytest.mark.parametrize("shape", SHAPES, ids=lambda s: f"{len(s)}x{s[0][0]}x{s[0][1]}")
def test_groups_match_brute_force_closure(shape):
    graph = build_graph(shape)
    groups = enumerate_groups(graph)
    assert {g.member_set for g in groups} == _closure_oracle(graph)
    for group in groups:
        for member in group.members:
            assert propagate_from_trigger(graph, member).member_set == group.member_set


def test_group_structure(tiny_config):
    groups = enumerate_groups(build_graph(tiny_config))
    heads = [g for g in groups if g.kind == "head"]
    channels = [g for g in groups if g.kind == "channel"]
    assert len(heads) == 2 * 2 and len(channels) == 2 * 6
    assert all(len(g) == 4 for g in heads)
    assert all(len(g) == 3 for g in channels)
    assert [g.label for g in groups[:3]] == ["layer0.head0", "layer0.head1", "layer0.ffn0"]


def test_head_group_members():
    graph = build_graph([(2, 4)])
    group = propagate_from_trigger(graph, ParamNode(0, Role.V, 1))
    assert [m.id for m in group.members] == [
        "layer0.q_proj.1",
        "layer0.k_proj.1",
        "layer0.v_proj.1",
        "layer0.o_proj.1",
    ]
    assert [m.axis for m in group.members] == ["rows", "rows", "rows", "columns"]
    assert group.label == "layer0.head1"


def test_node_order_follows_projection_order():
    nodes = [
        ParamNode(1, Role.Q, 0),
        ParamNode(0, Role.DOWN, 0),
        ParamNode(0, Role.Q, 1),
        ParamNode(0, Role.O, 0),
        ParamNode(0, Role.GATE, 2),
        ParamNode(0, Role.Q, 0),
    ]
    ordered = sorted(nodes, key=ParamNode.sort_key)
    assert [n.id for n in ordered] == [
        "layer0.q_proj.0",
        "layer0.q_proj.1",
        "layer0.o_proj.0",
        "layer0.gate_proj.2",
        "layer0.down_proj.0",
        "layer1.q_proj.0",
    ]
    assert ParamNode(0, Role.K, 3).sort_key() == (0, 1, 3)


def test_groups_partition_nodes(tiny_config):
    graph = build_graph(tiny_config)
    groups = enumerate_groups(graph)
    seen = [m for g in groups for m in g.members]
    assert len(seen) == len(set(seen)) == len(graph)


def test_build_graph_accepts_models_and_pruned_shapes(tiny_model, tiny_config):
    assert len(build_graph(tiny_model)) == len(build_graph(tiny_config))
    pruned = build_graph(tiny_config.with_layer_shapes([1, 2], [3, 6]))
    assert len(enumerate_groups(pruned)) == (1 + 3) + (2 + 6)


def test_every_edge_is_a_dependency_edge(tiny_config):
    graph = build_graph(tiny_config)
    assert all(graph.is_dependency_edge(src, dst) for src, dst in graph.edges)
    o = ParamNode(0, Role.O, 0)
    assert graph.in_degree(o) == 3 and graph.out_degree(o) == 0


@pytest.mark.parametrize("record", [[(0, 4)], [(2, -1)], ["bad"], 5])
def test_malformed_shape_record(record):
    with pytest.raises(GraphError):
        build_graph(record)


def test_unknown_trigger():
    graph = build_graph([(2, 4)])
    with pytest.raises(GraphError):
        propagate_from_trigger(graph, ParamNode(3, Role.Q, 0))


def test_graph_dump(tiny_config):
    dump = graph_dump(build_graph(tiny_config))
    assert set(dump) == {"nodes", "edges", "groups"}
    assert len(dump["edges"]) == 2 * (2 * 3 + 6 * 2)
    first = dump["groups"][0]
    assert first["label"] == "layer0.head0"
    assert first["members"][-1] == "layer0.o_proj.0"
