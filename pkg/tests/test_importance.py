import pytest
import torch

from schemas import GroupScore
from utils import DatasetError, ImportanceError, SelectionError

from lab.depgraph import build_graph, enumerate_groups
from lab.importance import (
    accumulate_calibration_gradients,
    build_calibration_set,
    edge_layers,
    group_importance,
    member_slice,
    score_groups,
    select_groups,
)
from lab.model import next_token_loss
from lab.tasks import synthetic_corpus


@pytest.fixture
def calib(tokenizer):
    return build_calibration_set(tokenizer, synthetic_corpus(7, 50), count=4, seq_len=16, seed=7)


def _score(layer, kind, unit, importance):
    return GroupScore(group_id=f"layer{layer}.{kind}{unit}", layer=layer, kind=kind, unit=unit, importance=importance)


def test_calibration_set_is_seeded(tokenizer):
    corpus = synthetic_corpus(7, 50)
    a = build_calibration_set(tokenizer, corpus, count=5, seq_len=16, seed=3)
    b = build_calibration_set(tokenizer, corpus, count=5, seq_len=16, seed=3)
    assert a.sequences == b.sequences
    assert a.count == 5 and all(len(s) == 16 for s in a.sequences)


def test_calibration_requires_enough_text(tokenizer):
    with pytest.raises(DatasetError):
        build_calibration_set(tokenizer, "short", count=2, seq_len=16)


def test_gradient_store_sums_per_sequence_gradients(tiny_model64, calib):
    store = accumulate_calibration_gradients(tiny_model64, calib)
    assert store.count == 4
    name = "layers.0.attn.q_proj.weight"
    expected = torch.zeros_like(store[name])
    param = dict(tiny_model64.named_parameters())[name]
    for seq in calib.sequences:
        (g,) = torch.autograd.grad(next_token_loss(tiny_model64, seq), [param])
        expected += g
    assert torch.allclose(store[name], expected, atol=1e-12)


def test_taylor_importance_is_abs_inner_product(tiny_model64, calib):
    store = accumulate_calibration_gradients(tiny_model64, calib)
    named = dict(tiny_model64.named_parameters())
    group = enumerate_groups(build_graph(tiny_model64.config))[1]
    score = group_importance(group, tiny_model64, store)

    for member in group.members:
        w = member_slice(named[member.param_name].detach(), member, 4)
        g = member_slice(store[member.param_name], member, 4)
        assert score.breakdown[member.id] == pytest.approx(abs(float((w * g).sum())), rel=1e-12)
    assert score.importance == pytest.approx(sum(score.breakdown.values()), rel=1e-12)
    assert score.group_id == "layer0.head1"


def test_zeroed_group_scores_zero(tiny_model64, calib):
    group = enumerate_groups(build_graph(tiny_model64.config))[0]
    named = dict(tiny_model64.named_parameters())
    with torch.no_grad():
        for member in group.members:
            member_slice(named[member.param_name], member, 4).zero_()
    store = accumulate_calibration_gradients(tiny_model64, calib)
    assert group_importance(group, tiny_model64, store).importance == 0.0
    assert group_importance(group, tiny_model64, scorer="magnitude").importance == 0.0


def test_scoring_is_bitwise_reproducible(tiny_model64, calib):
    a = score_groups(tiny_model64, accumulate_calibration_gradients(tiny_model64, calib))
    b = score_groups(tiny_model64, accumulate_calibration_gradients(tiny_model64, calib))
    assert [s.importance for s in a] == [s.importance for s in b]


def test_scoring_errors(tiny_model, calib):
    group = enumerate_groups(build_graph(tiny_model.config))[0]
    with pytest.raises(ImportanceError):
        group_importance(group, tiny_model, scorer="random")
    with pytest.raises(ImportanceError):
        group_importance(group, tiny_model, store=None, scorer="taylor")


def test_gradients_leave_requires_grad_flags(tiny_model, calib):
    for p in tiny_model.parameters():
        p.requires_grad_(False)
    accumulate_calibration_gradients(tiny_model, calib)
    assert not any(p.requires_grad for p in tiny_model.parameters())


def test_per_layer_selection_counts():
    scores = [_score(layer, "head", u, float(u)) for layer in range(2) for u in range(4)]
    scores += [_score(layer, "channel", u, float(10 - u)) for layer in range(2) for u in range(6)]
    selected = select_groups(scores, 0.5, "per-layer")
    assert [(s.layer, s.kind, s.unit) for s in selected] == [
        (0, "head", 0), (0, "head", 1),
        (0, "channel", 3), (0, "channel", 4), (0, "channel", 5),
        (1, "head", 0), (1, "head", 1),
        (1, "channel", 3), (1, "channel", 4), (1, "channel", 5),
    ]


def test_ratio_zero_selects_nothing():
    scores = [_score(0, "head", u, 1.0) for u in range(4)]
    assert select_groups(scores, 0.0) == []


def test_ties_break_by_position():
    scores = [_score(layer, "head", u, 1.0) for layer in (1, 0) for u in (2, 0, 1)]
    selected = select_groups(scores, 0.34, "global")
    assert [(s.layer, s.unit) for s in selected] == [(0, 0), (0, 1)]


def test_global_selection_cannot_empty_a_layer():
    scores = [_score(0, "head", u, 0.0) for u in range(2)] + [_score(1, "head", u, 5.0) for u in range(2)]
    with pytest.raises(SelectionError):
        select_groups(scores, 0.5, "global")


def test_per_layer_selection_cannot_empty_a_layer():
    scores = [_score(layer, "head", u, float(u)) for layer in range(2) for u in range(4)]
    with pytest.raises(SelectionError):
        select_groups(scores, 1.0 - 1e-12, "per-layer")
    assert len(select_groups(scores, 0.75, "per-layer")) == 6


@pytest.mark.parametrize("factor", [1e-3, 3.0, 250.0])
def test_selection_ignores_positive_rescaling(tiny_model64, calib, factor):
    scores = score_groups(tiny_model64, accumulate_calibration_gradients(tiny_model64, calib))
    expected = [s.group_id for s in select_groups(scores, 0.5, "per-layer")]
    rescaled = [s.scaled(factor) for s in scores]
    assert rescaled[0].importance == pytest.approx(scores[0].importance * factor)
    assert rescaled[0].breakdown.keys() == scores[0].breakdown.keys()
    assert [s.group_id for s in select_groups(rescaled, 0.5, "per-layer")] == expected

    spread = [_score(layer, "head", u, float(3 * u + layer + 1)) for layer in range(2) for u in range(4)]
    expected = [s.group_id for s in select_groups(spread, 0.25, "global")]
    assert [s.group_id for s in select_groups([s.scaled(factor) for s in spread], 0.25, "global")] == expected


def test_protected_layers_are_skipped():
    scores = [_score(layer, "head", u, float(u)) for layer in range(3) for u in range(4)]
    selected = select_groups(scores, 0.5, "per-layer", protected_layers=edge_layers(3))
    assert {s.layer for s in selected} == {1}
    assert edge_layers(1) == [0]


@pytest.mark.parametrize("ratio, policy", [(1.0, "per-layer"), (-0.1, "per-layer"), (0.5, "random")])
def test_invalid_selection_arguments(ratio, policy):
    with pytest.raises(SelectionError):
        select_groups([_score(0, "head", 0, 1.0)], ratio, policy)
    with pytest.raises(SelectionError):
        select_groups([], 0.2)
