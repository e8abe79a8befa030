from schemas import CompressionReport, EvalReport, SweepRow

from lab.published import published_prompt_matrix, published_recovery_table, published_shot_sweep
from lab.reporting import render_compression, render_eval_report, render_prompt_matrix, render_recovery_table, render_sweep


def test_prompt_matrix_marks_best_template_per_task():
    text = render_prompt_matrix(published_prompt_matrix("20%"), scale=1.0)
    lines = text.splitlines()
    assert lines[0].split()[0] == "prompt"
    assert text.count("*") == 7
    boolq_row = next(line for line in lines if line.startswith("BoolQ"))
    assert "76.33*" in boolq_row


def test_recovery_table_flags_one_mismatch():
    text = render_recovery_table(published_recovery_table())
    assert text.count("MISMATCH") == 1
    mismatch = next(line for line in text.splitlines() if "MISMATCH" in line)
    assert "Shortened-LLaMA" in mismatch and "80.83" in mismatch and "-0.06" in mismatch


def test_sweep_table():
    text = render_sweep(published_shot_sweep(), scale=1.0)
    lines = text.splitlines()
    assert lines[0].startswith("shots")
    assert len(lines) == 2 + 7
    assert lines[2].split()[0] == "10"


def test_compression_text():
    report = CompressionReport(
        original_params=1000, pruned_params=806, reduction_fraction=0.194, layer_heads=[4, 3], layer_ffn=[64, 51],
        group_ratio=0.2, policy="per-layer",
    )
    text = render_compression(report)
    assert "reduction       : 0.1940" in text
    assert "group ratio     : 0.2000 (per-layer)" in text
    assert text.splitlines()[-1].split() == ["1", "3", "51"]


def test_eval_report_text():
    report = EvalReport(
        label="recovered",
        accuracy={"pattern": 0.75},
        perplexity={"books": 12.5},
        mean_accuracy=0.75,
        recovery_rate=93.75,
        sweep=[SweepRow(shots=10, perplexity={}, accuracy={"pattern": 0.5}, average=0.5)],
    )
    text = render_eval_report(report)
    assert text.startswith("[recovered]")
    assert "75.00" in text and "12.50" in text and "93.75" in text
    assert "shots" in text
