import os

os.environ.setdefault("PRUNELAB_ENV", "test")

import pytest
import torch

from schemas import ModelConfig

from lab.model import build_model
from lab.tasks import make_task
from lab.tokenizer import ByteTokenizer


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行桌面级端到端实验")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _clear_seed_override(monkeypatch):
    monkeypatch.delenv("PRUNELAB_SEED", raising=False)


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        vocab_size=259, embed_dim=8, n_layers=2, n_heads=2, head_dim=4, ffn_dim=6, max_seq_len=16, rng_seed=3
    )


@pytest.fixture
def small_vocab_config() -> ModelConfig:
    """有限差分用：词表小，坐标数少"""
    return ModelConfig(
        vocab_size=16, embed_dim=8, n_layers=2, n_heads=2, head_dim=4, ffn_dim=6, max_seq_len=8, rng_seed=5
    )


@pytest.fixture
def prompt_config() -> ModelConfig:
    """能容纳完整提示词的小模型"""
    return ModelConfig(embed_dim=16, n_layers=2, n_heads=2, head_dim=8, ffn_dim=16, max_seq_len=128, rng_seed=7)


@pytest.fixture
def tiny_model(tiny_config):
    return build_model(tiny_config)


@pytest.fixture
def tiny_model64(tiny_config):
    return build_model(tiny_config, dtype="float64")


@pytest.fixture
def prompt_model(prompt_config):
    return build_model(prompt_config)


@pytest.fixture
def tokenizer() -> ByteTokenizer:
    return ByteTokenizer()


@pytest.fixture
def pattern_task():
    return make_task("pattern", train_items=40, eval_items=10, seed=7)


@pytest.fixture
def parity_task():
    return make_task("parity", train_items=40, eval_items=10, seed=7)


@pytest.fixture
def fixed_inputs(tiny_config):
    generator = torch.Generator().manual_seed(11)
    return [
        torch.randint(0, tiny_config.vocab_size, (tiny_config.max_seq_len,), generator=generator) for _ in range(10)
    ]


@pytest.fixture
def narrow_vocab_model():
    """词表装不下字节分词器的 bos/eos"""
    return build_model(
        ModelConfig(vocab_size=100, embed_dim=8, n_layers=1, n_heads=2, head_dim=4, ffn_dim=6, max_seq_len=16)
    )
