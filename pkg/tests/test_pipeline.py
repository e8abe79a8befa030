import json
import time

import pytest
import yaml

from schemas import RunConfig
from utils import ConfigError, StageError, read_json

from lab.pipeline import load_run_config, run_pipeline
from lab.tasks import TASK_TEMPLATES


def _small_config(**overrides) -> dict:
    config = {
        "model": {"embed_dim": 16, "n_layers": 2, "n_heads": 2, "head_dim": 8, "ffn_dim": 16, "max_seq_len": 96,
                  "rng_seed": 3},
        "pretrain": {"items_per_task": 6, "corpus_windows": 4,
                     "train": {"lr": 3e-3, "warmup_steps": 2, "batch_size": 4, "epochs": 1}},
        "calibration": {"count": 2, "seq_len": 32, "corpus_sentences": 40},
        "pruning": {"ratio": 0.5},
        "recovery": {"rank": 2, "shots": 4, "train": {"lr": 1e-3, "warmup_steps": 1, "batch_size": 2, "epochs": 1}},
        "evaluation": {"tasks": ["pattern", "parity"], "train_items": 10, "eval_items": 8, "ppl_window": 32,
                       "ppl_sentences": 5, "sweep_task": "pattern", "sweep_shots": [2, 4]},
    }
    for section, values in overrides.items():
        config[section] = {**config.get(section, {}), **values}
    return config


def _write(path, config):
    if path.suffix == ".json":
        path.write_text(json.dumps(config), encoding="utf-8")
    else:
        path.write_text(yaml.safe_dump(config), encoding="utf-8")
    return path


@pytest.mark.parametrize("name", ["run.json", "run.yaml"])
def test_config_paths_resolve_against_the_config_file(tmp_path, name):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "qa.jsonl").write_text('{"context": "a", "options": ["x", "y"], "gold": 0}\n')
    raw = _small_config(evaluation={"task_files": {"qa": "data/qa.jsonl"}}, paths={"out_dir": "out"})
    config = load_run_config(_write(tmp_path / name, raw))
    assert config.paths.out_dir == str((tmp_path / "out").resolve())
    assert config.evaluation.task_files["qa"] == str((tmp_path / "data" / "qa.jsonl").resolve())
    assert config.pruning.ratio == 0.5


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path / "run.json", _small_config(evaluation={"task_files": {"qa": "nope.jsonl"}})))
    with pytest.raises(ConfigError):
        load_run_config(_write(tmp_path / "corpus.json", _small_config(calibration={"corpus": "books.txt"})))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(broken)


def test_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("PRUNELAB_SEED", "42")
    config = load_run_config(_write(tmp_path / "run.json", _small_config()))
    assert config.model.rng_seed == 42
    assert config.recovery.train.seed == 42
    assert config.evaluation.seed == 42


def test_unpruned_untrained_recovery_matches_baseline(tmp_path):
    raw = _small_config(
        pruning={"ratio": 0.0},
        recovery={"train": {"max_steps": 0}},
        stages={"skip": ["pretrain", "prompt-matrix", "sweep"]},
    )
    summary = run_pipeline(RunConfig(**raw), out_dir=tmp_path)
    baseline, recovered = summary["baseline"], summary["recovered"]
    assert recovered["accuracy"] == baseline["accuracy"]
    for name, ppl in baseline["perplexity"].items():
        assert recovered["perplexity"][name] == pytest.approx(ppl, rel=1e-9)
    assert recovered["recovery_rate"] == pytest.approx(100.0)
    assert summary["compression"]["reduction_fraction"] == 0.0
    assert (tmp_path / "eval_report.txt").exists()
    assert read_json(tmp_path / "plan.json")["entries"] == []


def test_stage_failure_names_the_stage(tmp_path):
    raw = _small_config(evaluation={"sweep_task": "keyword"})
    with pytest.raises(StageError) as info:
        run_pipeline(RunConfig(**raw), out_dir=tmp_path, stages=["build", "sweep"])
    assert info.value.stage == "sweep"
    assert isinstance(info.value.cause, ConfigError)
    assert info.value.exit_status == 2


def test_runs_are_byte_for_byte_reproducible(tmp_path):
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        summary = run_pipeline(RunConfig(**_small_config()), out_dir=out)
        assert summary["stages"][-1] == "sweep"
        outputs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.json"))})
    assert outputs[0] == outputs[1]
    assert {"baseline.json", "scores.json", "plan.json", "eval_report.json", "prompt_matrix.json", "sweep.json"} <= set(
        outputs[0]
    )
    sweep = json.loads(outputs[0]["sweep.json"])
    assert [row["shots"] for row in sweep] == [2, 4]


@pytest.mark.slow
def test_desk_experiment(tmp_path):
    """桌面级完整实验：剪掉 50% 分组后用 K=50、rank 8、lr 1e-4、3 epochs 的 LoRA 恢复"""
    config = load_run_config("configs/desk.json")
    assert (config.recovery.shots, config.recovery.rank) == (50, 8)
    assert (config.recovery.train.lr, config.recovery.train.epochs) == (1e-4, 3)

    started = time.perf_counter()
    summary = run_pipeline(config, out_dir=tmp_path)
    assert time.perf_counter() - started < 600
    assert summary["compression"]["reduction_fraction"] > 0.2

    baseline = summary["baseline"]["accuracy"]
    pruned = summary["pruned"]["accuracy"]
    recovered = summary["recovered"]["accuracy"]
    # 至少一个任务：预训练到 90% 以上，剪枝后下降，恢复到剪枝前的 80% 以上且严格高于剪枝后
    restored = [
        task
        for task in baseline
        if baseline[task] >= 0.9
        and pruned[task] < baseline[task]
        and recovered[task] >= 0.8 * baseline[task]
        and recovered[task] > pruned[task]
    ]
    assert restored, {"baseline": baseline, "pruned": pruned, "recovered": recovered}

    # 任务微调后，匹配模板不低于其余模板的平均准确率（至少 3 / 4 个任务）
    matrix = summary["prompt_matrix"]
    assert set(matrix["tasks"]) == set(config.evaluation.tasks)
    matched = 0
    for task in matrix["tasks"]:
        own = TASK_TEMPLATES[task]
        others = [matrix["accuracy"][t][task] for t in matrix["templates"] if t != own]
        matched += matrix["accuracy"][own][task] >= sum(others) / len(others)
    assert matched >= 3, matrix["accuracy"]

    sweep = {row["shots"]: row for row in summary["sweep"]}
    assert sorted(sweep) == [10, 20, 50]
    task = config.evaluation.sweep_task
    assert sweep[50]["accuracy"][task] >= sweep[10]["accuracy"][task]
