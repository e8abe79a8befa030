import pytest
import torch

from utils import GradientError, NonFiniteError, PrecisionError

from lab.autograd import (
    GradientTape,
    check_finite,
    finite_diff_gradient,
    grad,
    relative_error,
    resolve_dtype,
)
from lab.model import build_model, next_token_loss, token_cross_entropy


def _loss_fn(model, tokens):
    def f(params):
        logits = torch.func.functional_call(model, params, (tokens,))
        return token_cross_entropy(logits[:-1], tokens[1:])

    return f


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_central_differences(small_vocab_config, seed):
    config = small_vocab_config.model_copy(update={"rng_seed": seed})
    model = build_model(config, dtype="float64")
    generator = torch.Generator().manual_seed(seed)
    tokens = torch.randint(0, config.vocab_size, (config.max_seq_len,), generator=generator)
    params = dict(model.named_parameters())

    analytic = grad(next_token_loss(model, tokens), params)
    numeric = finite_diff_gradient(_loss_fn(model, tokens), params, epsilon=1e-6)

    for name in params:
        assert relative_error(analytic[name], numeric[name]) <= 1e-4, name


def test_tape_returns_gradients_by_tag():
    w = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
    b = torch.tensor(0.5, dtype=torch.float64)
    with GradientTape() as tape:
        tape.watch("w", w)
        tape.watch("b", b)
        loss = (w * w).sum() * b
        grads = tape.gradient(loss)
    assert torch.allclose(grads["w"], 2 * w.detach() * 0.5)
    assert float(grads["b"]) == pytest.approx(14.0)


def test_unused_parameter_gets_zero_gradient():
    used = torch.ones(2, dtype=torch.float64)
    unused = torch.ones(3, dtype=torch.float64)
    with GradientTape() as tape:
        tape.watch("used", used)
        tape.watch("unused", unused)
        grads = tape.gradient(used.sum())
    assert torch.equal(grads["unused"], torch.zeros(3, dtype=torch.float64))


def test_tape_is_single_use():
    x = torch.ones(2)
    with GradientTape() as tape:
        tape.watch("x", x)
        loss = (x * 3).sum()
        tape.gradient(loss)
        with pytest.raises(GradientError):
            tape.gradient(loss)


def test_non_scalar_loss_rejected():
    x = torch.ones(2)
    with GradientTape() as tape:
        tape.watch("x", x)
        with pytest.raises(GradientError):
            tape.gradient(x * 2)


def test_duplicate_tag_rejected():
    with GradientTape() as tape:
        tape.watch("x", torch.ones(1))
        with pytest.raises(GradientError):
            tape.watch("x", torch.ones(1))


def test_unknown_tag_rejected():
    x = torch.ones(2)
    with GradientTape() as tape:
        tape.watch("x", x)
        with pytest.raises(GradientError):
            tape.gradient(x.sum(), tags=["y"])


def test_operations_list_inputs_before_outputs():
    x = torch.ones(3)
    with GradientTape() as tape:
        tape.watch("x", x)
        loss = (x * 2).sum()
        ops = tape.operations(loss)
    assert ops[0] == "param:x"
    assert ops[-1].startswith("Sum")
    assert any(op.startswith("Mul") for op in ops)


def test_tape_watches_model_parameters(tiny_model, fixed_inputs):
    with GradientTape() as tape:
        tape.watch_module(tiny_model, ["layers.0.attn.q_proj.weight"])
        grads = tape.gradient(next_token_loss(tiny_model, fixed_inputs[0]))
    assert grads["layers.0.attn.q_proj.weight"].shape == (8, 8)
    with GradientTape() as tape:
        with pytest.raises(GradientError):
            tape.watch_module(tiny_model, ["missing.weight"])


def test_finite_differences_require_float64():
    with pytest.raises(PrecisionError):
        finite_diff_gradient(lambda p: p["x"].sum(), {"x": torch.ones(2)})


def test_finite_differences_reject_non_finite_values():
    x = torch.zeros(1, dtype=torch.float64)
    with pytest.raises(NonFiniteError):
        finite_diff_gradient(lambda p: torch.log(p["x"]).sum() * 0 + float("nan"), {"x": x})


def test_check_finite_reports_location():
    with pytest.raises(NonFiniteError) as info:
        check_finite(torch.tensor([1.0, float("inf")]), "loss", step=4)
    assert info.value.detail == {"step": 4}
    check_finite(torch.tensor([1.0, 2.0]), "loss")


def test_resolve_dtype():
    assert resolve_dtype("float64") is torch.float64
    assert resolve_dtype(torch.float32) is torch.float32
    with pytest.raises(PrecisionError):
        resolve_dtype("float16")


def test_relative_error_of_zero_tensors_is_zero():
    assert relative_error(torch.zeros(3), torch.zeros(3)) == 0.0
    assert relative_error(torch.ones(2), torch.ones(2) * 2) == pytest.approx(0.5)


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (2.5, -0.5), (0.0, 3.0)])
def test_gradient_is_linear_in_the_loss(small_vocab_config, a, b):
    model = build_model(small_vocab_config, dtype="float64")
    params = dict(model.named_parameters())
    generator = torch.Generator().manual_seed(9)
    first, second = (torch.randint(0, 16, (8,), generator=generator) for _ in range(2))

    combined = grad(a * next_token_loss(model, first) + b * next_token_loss(model, second), params)
    grad_f = grad(next_token_loss(model, first), params)
    grad_g = grad(next_token_loss(model, second), params)
    for name in params:
        assert torch.allclose(combined[name], a * grad_f[name] + b * grad_g[name], rtol=0.0, atol=1e-10), name
