import pytest
import torch

from utils import GenerationError, ModelInputError

from lab.generation import generate, next_token, top_k_filter


def test_greedy_ignores_the_seed(tiny_model):
    a = generate(tiny_model, "ab", max_tokens=6, temperature=0, seed=1)
    b = generate(tiny_model, "ab", max_tokens=6, temperature=0, seed=2)
    assert a == b
    assert generate(tiny_model, "ab", max_tokens=6, top_k=1, seed=3) == a


def test_sampling_is_seeded(tiny_model):
    a = generate(tiny_model, "ab", max_tokens=8, temperature=1.0, top_k=50, seed=4)
    assert generate(tiny_model, "ab", max_tokens=8, temperature=1.0, top_k=50, seed=4) == a


def test_long_prompts_keep_the_latest_context(tiny_model):
    assert isinstance(generate(tiny_model, "x" * 40, max_tokens=3, temperature=0), str)


def test_zero_tokens_returns_empty(tiny_model):
    assert generate(tiny_model, "ab", max_tokens=0) == ""


@pytest.mark.parametrize("kwargs", [{"temperature": -0.5}, {"top_k": 0}, {"max_tokens": -1}])
def test_invalid_arguments(tiny_model, kwargs):
    with pytest.raises(GenerationError):
        generate(tiny_model, "ab", **kwargs)


def test_top_k_filter():
    logits = torch.tensor([0.5, 2.0, -1.0, 1.5])
    filtered = top_k_filter(logits, 2)
    assert filtered.tolist() == [float("-inf"), 2.0, float("-inf"), 1.5]
    assert torch.equal(top_k_filter(logits, 10), logits)


def test_top_k_one_is_argmax():
    generator = torch.Generator().manual_seed(0)
    logits = torch.tensor([0.1, 0.3, 0.2])
    assert all(next_token(logits, 1.0, 1, generator) == 1 for _ in range(5))
    assert next_token(logits, 1.0, 2, generator) in (1, 2)


def test_vocab_too_small_for_the_tokenizer(narrow_vocab_model):
    with pytest.raises(ModelInputError):
        generate(narrow_vocab_model, "ab", max_tokens=2)
