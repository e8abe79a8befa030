import pytest

from lab.published import (
    BASELINE_ACCURACY,
    BASELINE_MEAN,
    TASK_TUNED,
    TASKS,
    published_baseline_row,
    published_compression,
    published_prompt_matrix,
    published_recovery_table,
    published_shot_sweep,
)


def _row(rows, ratio, method):
    return next(r for r in rows if r.ratio == ratio and r.method == method)


def test_recovery_rates_match_printed_values_except_one():
    rows = published_recovery_table()
    assert len(rows) == 12
    inconsistent = [(r.ratio, r.method) for r in rows if not r.consistent]
    assert inconsistent == [("50%", "Shortened-LLaMA")]
    assert _row(rows, "50%", "Shortened-LLaMA").recovery_rate == pytest.approx(80.77, abs=5e-3)


@pytest.mark.parametrize("ratio, expected", [("20%", 95.68), ("50%", 86.54)])
def test_task_tuned_recovery(ratio, expected):
    row = _row(published_recovery_table(), ratio, TASK_TUNED)
    assert row.recovery_rate == pytest.approx(expected, abs=0.01)
    assert list(row.accuracies) == TASKS


def test_baseline_mean_matches_task_scores():
    assert sum(BASELINE_ACCURACY.values()) / len(TASKS) == pytest.approx(BASELINE_MEAN, abs=5e-3)
    assert published_baseline_row().recovery_rate is None


def test_compression_fractions():
    compression = published_compression()
    assert compression["20%"] == pytest.approx(0.194, abs=5e-4)
    assert compression["50%"] == pytest.approx(1 - 4.11 / 6.7)


@pytest.mark.parametrize("ratio", ["20%", "50%"])
def test_tuning_prompt_wins_its_own_task(ratio):
    matrix = published_prompt_matrix(ratio)
    assert matrix.best_template == {task: task for task in TASKS}
    assert matrix.templates[:2] == ["w/o tune", "Alpaca-Cleaned"]


def test_shot_sweep_rows():
    rows = published_shot_sweep()
    assert [r.shots for r in rows] == [10, 20, 30, 40, 50, 100, 200]
    first = rows[0]
    assert sum(first.accuracy.values()) / len(TASKS) == pytest.approx(first.average, abs=5e-3)
    assert set(first.perplexity) == {"WikiText2", "PTB"}
