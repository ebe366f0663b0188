"""
Unit Tests for Utilities and Visualizations
===========================================
Tests modules/utils.py (formatting, run loading, export) and the chart
builders in modules/visualizations.py

How to run:
    pytest tests/test_utils.py -v
"""

import json
import os
import sys

import pandas as pd
import plotly.graph_objects as go
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import utils, visualizations  # noqa: E402
from modules.errors import DataFormatError  # noqa: E402
from modules.shrinkage import risk_bench_grid  # noqa: E402


@pytest.fixture
def curves():
    return pd.DataFrame({
        "epoch": [1, 2, 3],
        "l_sure": [0.5, 0.3, 0.2], "l_ins": [4.0, 3.5, 3.2], "l_clu": [1.0, 0.9, 0.85],
        "total": [5.5, 4.7, 4.25],
        "cos_gap": [None, 0.4, 0.6], "ari": [None, 0.7, 0.9], "nmi": [None, 0.75, 0.92],
    })


@pytest.fixture
def bench():
    return {"seed": 0, "grid": risk_bench_grid([3], [1.0], [2.0], [1.0], trials=1000, seed=0)}


# ============================================================================
# TEST 1: Formatting
# ============================================================================
def test_format_score_and_delta():
    assert utils.format_score(0.123456) == "0.1235"
    assert utils.format_score(None) == "–"
    assert utils.format_score(float("nan")) == "–"
    assert utils.format_delta(0.05, 2) == "+0.05"
    assert utils.format_delta(-0.5, 1) == "-0.5"
    print("✅ test_format_score_and_delta PASSED")


def test_final_scores_uses_configured_rule():
    report = {"config": {"final_rule": "kmeans"},
              "final": {"argmax": {"nmi": 0.1}, "kmeans": {"nmi": 0.8, "ari": 0.7},
                        "cosine": {"mean_pos": 0.9, "mean_neg": 0.1, "gap": 0.8}}}

    assert utils.final_scores(report) == {"nmi": 0.8, "ari": 0.7, "cos_gap": 0.8}
    assert utils.final_scores({}) == {}
    print("✅ test_final_scores_uses_configured_rule PASSED")


# ============================================================================
# TEST 2: Run directories and export
# ============================================================================
def test_load_run_collects_present_files(tmp_path, curves, bench):
    curves.to_csv(tmp_path / "curves.csv", index=False)
    (tmp_path / "bench.json").write_text(json.dumps(bench))

    run = utils.load_run(tmp_path)

    assert set(run) == {"curves", "bench"}
    assert list(run["curves"]["epoch"]) == [1, 2, 3]
    assert utils.load_run(tmp_path / "missing") == {}
    print("✅ test_load_run_collects_present_files PASSED")


def test_load_run_rejects_broken_json(tmp_path):
    (tmp_path / "report.json").write_text("{oops")

    with pytest.raises(DataFormatError):
        utils.load_run(tmp_path)
    print("✅ test_load_run_rejects_broken_json PASSED")


def test_bench_table_flattens_grid(bench):
    table = utils.bench_table(bench)

    assert set(table["mode"]) == {"hierarchical", "fixed_theta"}
    hier = table[table["mode"] == "hierarchical"]
    assert list(hier["estimator"]) == ["mle", "js", "js_plus", "map"]
    assert table["closed_form"].isna().sum() == 4  # js and js_plus in both modes
    print("✅ test_bench_table_flattens_grid PASSED")


def test_excel_export_sheets(curves):
    excel = utils.create_excel_export({"curves": curves, "ablation": None, "robustness": pd.DataFrame()})

    sheets = pd.read_excel(excel, sheet_name=None, engine="openpyxl")
    assert list(sheets) == ["Training Curves"]
    assert len(sheets["Training Curves"]) == 3

    empty = pd.read_excel(utils.create_excel_export({}), sheet_name=None, engine="openpyxl")
    assert list(empty) == ["Empty"]
    print("✅ test_excel_export_sheets PASSED")


# ============================================================================
# TEST 3: Charts
# ============================================================================
def test_training_charts(curves):
    losses = visualizations.create_loss_curves(curves)
    metrics = visualizations.create_metric_curves(curves)

    assert isinstance(losses, go.Figure)
    assert [t.name for t in losses.data] == ["l_sure", "l_ins", "l_clu", "total"]
    assert [t.name for t in metrics.data] == ["NMI", "ARI", "COS_GAP"]
    assert list(metrics.data[0].x) == [2, 3]
    print("✅ test_training_charts PASSED")


def test_empty_inputs_give_titled_placeholders():
    for fig in (visualizations.create_loss_curves(pd.DataFrame()),
                visualizations.create_cosine_gap_chart([]),
                visualizations.create_ablation_bar(None),
                visualizations.create_robustness_chart(pd.DataFrame()),
                visualizations.create_risk_bench_bar(pd.DataFrame()),
                visualizations.create_cluster_sizes(pd.DataFrame({"other": [1]}))):
        assert len(fig.data) == 0
        assert fig.layout.title.text.startswith("No ")
    print("✅ test_empty_inputs_give_titled_placeholders PASSED")


def test_experiment_charts(bench):
    ablation = pd.DataFrame({"variant": ["ins", "ins", "sure+ins+clu", "sure+ins+clu"],
                             "seed": [0, 1, 0, 1], "nmi": [0.6, 0.7, 0.8, 0.9]})
    robustness = pd.DataFrame({"rate": [0.0, 0.5, 0.5], "seed": [0, 0, 1], "nmi": [0.9, 0.85, 0.8]})
    assignments = pd.DataFrame({"cluster": [0, 0, 1, 2], "label": [0, 1, 1, 2]})

    bar = visualizations.create_ablation_bar(ablation)
    line = visualizations.create_robustness_chart(robustness)
    risk = visualizations.create_risk_bench_bar(utils.bench_table(bench), "fixed_theta")
    sizes = visualizations.create_cluster_sizes(assignments)

    assert list(bar.data[0].y) == pytest.approx([0.65, 0.85])
    assert list(line.data[0].y) == pytest.approx([0.9, 0.825])
    assert [t.name for t in risk.data] == ["mle", "js", "js_plus"]
    assert len(sizes.data) == 3
    print("✅ test_experiment_charts PASSED")


if __name__ == "__main__":
    print("\n🧪 Running Utility Tests...\n")
    test_format_score_and_delta()
    test_final_scores_uses_configured_rule()
    test_empty_inputs_give_titled_placeholders()
    print("\n✅ All tests PASSED!\n")
