import math

import pytest
import torch
import torch.nn.functional as F

from schemas import TrainConfig
from utils import EvaluationError, ModelInputError

from lab.evaluation import (
    evaluate_accuracy,
    evaluate_perplexity,
    mean_accuracy,
    prompt_task_matrix,
    recovery_rate,
    recovery_rate_from_means,
    score_classification,
    shots_sweep,
)
from lab.lora import attach_adapters
from lab.model import build_model, forward_logits
from lab.tasks import get_template, synthetic_corpus
from lab.tokenizer import BOS_ID
from lab.training import corpus_examples, pretrain


def _silence(model):
    with torch.no_grad():
        model.output.weight.zero_()
    return model


def test_uniform_model_has_vocab_size_perplexity(tiny_model64):
    ppl = evaluate_perplexity(_silence(tiny_model64), synthetic_corpus(3, 10), window=16)
    assert ppl == pytest.approx(259.0, abs=1e-6)


def test_overfit_repeating_text_has_perplexity_near_one(tiny_config, tokenizer):
    model = build_model(tiny_config)
    text = "abc" * 100
    examples = corpus_examples(tokenizer, text, windows=8, seq_len=16, seed=1)
    pretrain(model, examples, TrainConfig(lr=2e-2, warmup_steps=10, batch_size=8, epochs=500))
    assert evaluate_perplexity(model, text, window=16) <= 1.05


def test_perplexity_needs_two_tokens(tiny_model):
    with pytest.raises(EvaluationError):
        evaluate_perplexity(tiny_model, "a")


def test_option_scores_are_length_normalised(tiny_model64, tokenizer):
    result = score_classification(tiny_model64, "ab", ["c", "de"], tokenizer)
    context = [BOS_ID] + tokenizer.encode("ab")
    for option, score in zip(["c", "de"], result.scores):
        ids = context + tokenizer.encode(option)
        log_probs = F.log_softmax(forward_logits(tiny_model64, ids).double(), dim=-1)
        n = len(option)
        expected = sum(float(log_probs[len(context) - 1 + j, ids[len(context) + j]]) for j in range(n)) / n
        assert score == pytest.approx(expected, abs=1e-12)
    assert result.predicted == max(range(2), key=lambda i: result.scores[i])


def test_ties_pick_the_first_option(tiny_model64, tokenizer):
    result = score_classification(_silence(tiny_model64), "q", ["x", "y", "z"], tokenizer)
    assert result.predicted == 0
    assert len(set(result.scores)) == 1


@pytest.mark.parametrize("prefix", ["c", "cd", "zzz"])
@pytest.mark.parametrize("suffixes", [["e", "f", "g"], ["xy", "yx", "xx"]])
def test_shared_option_prefix_keeps_the_argmax(tiny_model64, tokenizer, prefix, suffixes):
    joined = score_classification(tiny_model64, "ab", [prefix + s for s in suffixes], tokenizer)
    moved = score_classification(tiny_model64, "ab" + prefix, suffixes, tokenizer)
    assert joined.predicted == moved.predicted


def test_score_classification_errors(tiny_model, tokenizer):
    with pytest.raises(EvaluationError):
        score_classification(tiny_model, "q", [], tokenizer)
    with pytest.raises(EvaluationError):
        score_classification(tiny_model, "q", [""], tokenizer)
    with pytest.raises(EvaluationError):
        score_classification(tiny_model, "q", ["x" * 16], tokenizer)


def test_scoring_rejects_a_vocab_without_special_tokens(narrow_vocab_model, tokenizer):
    with pytest.raises(ModelInputError):
        score_classification(narrow_vocab_model, "ab", ["c", "d"], tokenizer)


def test_accuracy_is_a_deterministic_fraction(prompt_model, pattern_task):
    a = evaluate_accuracy(prompt_model, pattern_task, shots=2, seed=3)
    b = evaluate_accuracy(prompt_model, pattern_task, shots=2, seed=3)
    assert a == b
    assert 0.0 <= a <= 1.0
    assert a * len(pattern_task.eval) == pytest.approx(round(a * len(pattern_task.eval)))


def test_accuracy_ignores_eval_order(prompt_model, pattern_task):
    expected = evaluate_accuracy(prompt_model, pattern_task, shots=2, seed=3)
    reversed_task = pattern_task.model_copy(update={"eval": list(reversed(pattern_task.eval))})
    interleaved = pattern_task.model_copy(update={"eval": pattern_task.eval[1::2] + pattern_task.eval[::2]})
    assert evaluate_accuracy(prompt_model, reversed_task, shots=2, seed=3) == expected
    assert evaluate_accuracy(prompt_model, interleaved, shots=2, seed=3) == expected


def test_accuracy_errors(prompt_model, pattern_task):
    with pytest.raises(EvaluationError):
        evaluate_accuracy(prompt_model, pattern_task, shots=41)
    with pytest.raises(EvaluationError):
        evaluate_accuracy(prompt_model, pattern_task.model_copy(update={"eval": []}))


def test_adapter_form_evaluates_like_the_base(prompt_model, parity_task):
    adapted = attach_adapters(prompt_model, rank=2)
    assert evaluate_accuracy(adapted, parity_task) == evaluate_accuracy(prompt_model, parity_task)


def test_prompt_matrix_uses_per_task_models(prompt_model, pattern_task, parity_task):
    silent = _silence(build_model(prompt_model.config))
    templates = [get_template("pattern-prompt"), get_template("general")]
    matrix = prompt_task_matrix({"pattern": silent, "parity": prompt_model}, templates, [pattern_task, parity_task])
    assert matrix.templates == ["pattern-prompt", "general"]
    assert matrix.tasks == ["pattern", "parity"]
    # 输出头为零的模型总是选第一个选项
    expected = sum(item.gold == 0 for item in pattern_task.eval) / len(pattern_task.eval)
    assert matrix.accuracy["general"]["pattern"] == pytest.approx(expected)
    assert matrix.accuracy["pattern-prompt"]["pattern"] == pytest.approx(expected)
    assert matrix.best_template["pattern"] == "general"
    assert matrix.accuracy["general"]["parity"] == evaluate_accuracy(
        prompt_model, parity_task, get_template("general")
    )


def test_prompt_matrix_errors(prompt_model, pattern_task, parity_task):
    with pytest.raises(EvaluationError):
        prompt_task_matrix({"pattern": prompt_model}, [get_template("general")], [pattern_task, parity_task])
    with pytest.raises(EvaluationError):
        prompt_task_matrix(prompt_model, [], [pattern_task])


def test_recovery_rate():
    assert recovery_rate([0.5, 0.7], [0.6, 0.6]) == pytest.approx(100.0)
    assert recovery_rate_from_means(61.92, 68.59) == pytest.approx(90.28, abs=1e-2)
    assert mean_accuracy({"a": 0.25, "b": 0.75}) == 0.5
    with pytest.raises(EvaluationError):
        recovery_rate([0.5], [0.5, 0.6])
    with pytest.raises(EvaluationError):
        recovery_rate_from_means(0.5, 0.0)
    with pytest.raises(EvaluationError):
        mean_accuracy({})


def test_shots_sweep_rows_are_sorted(prompt_model, pattern_task):
    calls = []

    def factory(k):
        calls.append(k)
        return prompt_model

    corpora = {"books": synthetic_corpus(1, 5)}
    rows = shots_sweep(factory, pattern_task, [4, 2, 4], corpora=corpora, window=32)
    assert calls == [2, 4]
    assert [r.shots for r in rows] == [2, 4]
    assert rows[0].accuracy == rows[1].accuracy
    assert set(rows[0].perplexity) == {"books"}
    assert rows[0].average == rows[0].accuracy["pattern"]
    assert math.isfinite(rows[0].perplexity["books"])


def test_shots_sweep_rejects_oversized_k(prompt_model, pattern_task):
    with pytest.raises(EvaluationError):
        shots_sweep(lambda k: prompt_model, pattern_task, [10, 41])
