"""
Unit Tests for Data I/O Module
==============================
Tests modules/dataio.py: CSV / Matrix Market ingestion, preprocessing,
synthetic data and downsampling

How to run:
    pytest tests/test_dataio.py -v
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import dataio  # noqa: E402
from modules.clusterer import KmeansConfig, kmeans  # noqa: E402
from modules.errors import ConfigError, DataFormatError  # noqa: E402
from modules.metrics import ari  # noqa: E402
from modules.ndmath import make_rng  # noqa: E402


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# ============================================================================
# TEST 1: CSV ingestion
# ============================================================================
def test_load_csv_with_text_labels(tmp_path):
    """
    Arrange-Act-Assert:
    - Arrange: a 3-cell file with a text label column
    - Act: load_csv
    - Assert: values, ids and labels numbered by first appearance
    """
    # Arrange
    path = write(tmp_path / "m.csv", "cell,g1,g2,g3,label\nc1,1,0,2,T\nc2,0,3,1,B\nc3,4,1,0,T\n")

    # Act
    x = dataio.load_csv(path)

    # Assert
    assert x.values.shape == (3, 3)
    assert x.cell_ids == ["c1", "c2", "c3"]
    assert x.gene_ids == ["g1", "g2", "g3"]
    np.testing.assert_array_equal(x.labels, [0, 1, 0])
    assert x.label_names == ["T", "B"]
    print("✅ test_load_csv_with_text_labels PASSED")


def test_load_csv_detects_tabs(tmp_path):
    path = write(tmp_path / "m.tsv", "cell\tg1\tg2\tg3\nc1\t1\t2\t3\nc2\t4\t5\t6\n")

    x = dataio.load_csv(path)

    np.testing.assert_array_equal(x.values, [[1, 2, 3], [4, 5, 6]])
    assert x.labels is None
    print("✅ test_load_csv_detects_tabs PASSED")


def test_load_csv_reports_row_and_column_of_bad_value(tmp_path):
    """Row is the 1-based data row, col the 1-based file column"""
    path = write(tmp_path / "m.csv", "cell,g1,g2,g3\nc1,1,2,3\nc2,4,abc,6\n")

    with pytest.raises(DataFormatError) as err:
        dataio.load_csv(path)

    assert err.value.row == 2
    assert err.value.col == 3
    assert "(row 2, col 3)" in str(err.value)
    print("✅ test_load_csv_reports_row_and_column_of_bad_value PASSED")


def test_load_csv_rejects_negative_unless_allowed(tmp_path):
    path = write(tmp_path / "m.csv", "cell,g1,g2,g3\nc1,1,-2,3\nc2,4,5,6\n")

    with pytest.raises(DataFormatError) as err:
        dataio.load_csv(path)
    assert (err.value.row, err.value.col) == (1, 3)

    x = dataio.load_csv(path, allow_negative=True)
    assert x.values[0, 1] == -2.0
    print("✅ test_load_csv_rejects_negative_unless_allowed PASSED")


def test_load_csv_ragged_row(tmp_path):
    path = write(tmp_path / "m.csv", "cell,g1,g2,g3\nc1,1,2,3\nc2,4,5\n")

    with pytest.raises(DataFormatError):
        dataio.load_csv(path)
    print("✅ test_load_csv_ragged_row PASSED")


def test_save_then_load_is_exact(tmp_path):
    """repr-precision floats survive the round trip bit for bit"""
    x = dataio.synth(dataio.SynthConfig(n_cells=20, n_genes=5, n_clusters=2), make_rng(3))

    paths = dataio.save_dataset(x, tmp_path)
    back = dataio.load_csv(paths["matrix"], allow_negative=True)
    labels = dataio.load_labels_csv(paths["labels"])

    np.testing.assert_array_equal(back.values, x.values)
    np.testing.assert_array_equal(labels, x.labels)
    assert back.cell_ids == x.cell_ids
    print("✅ test_save_then_load_is_exact PASSED")


# ============================================================================
# TEST 2: Matrix Market
# ============================================================================
def test_load_matrix_market_sums_duplicates(tmp_path):
    mtx = write(tmp_path / "m.mtx",
                "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 4\n1 1 1.5\n2 3 2\n1 1 0.5\n2 2 7\n")
    genes = write(tmp_path / "genes.tsv", "gA\tGeneA\ngB\tGeneB\ngC\tGeneC\n")
    cells = write(tmp_path / "cells.tsv", "c1\nc2\n")

    x = dataio.load_matrix_market(mtx, genes, cells)

    np.testing.assert_array_equal(x.values, [[2.0, 0.0, 0.0], [0.0, 7.0, 2.0]])
    assert x.gene_ids == ["gA", "gB", "gC"]
    print("✅ test_load_matrix_market_sums_duplicates PASSED")


def test_load_matrix_market_genes_by_cells(tmp_path):
    mtx = write(tmp_path / "m.mtx", "%%MatrixMarket matrix coordinate integer general\n3 2 2\n1 2 5\n3 1 1\n")
    genes = write(tmp_path / "genes.tsv", "g1\ng2\ng3\n")
    cells = write(tmp_path / "cells.tsv", "c1\nc2\n")
    labels = write(tmp_path / "labels.txt", "a\nb\n")

    x = dataio.load_matrix_market(mtx, genes, cells, labels, genes_by_cells=True)

    np.testing.assert_array_equal(x.values, [[0.0, 0.0, 1.0], [5.0, 0.0, 0.0]])
    np.testing.assert_array_equal(x.labels, [0, 1])
    print("✅ test_load_matrix_market_genes_by_cells PASSED")


def test_load_matrix_market_bad_header_and_id_mismatch(tmp_path):
    bad = write(tmp_path / "bad.mtx", "%%MatrixMarket matrix array real general\n1 1\n1\n")
    good = write(tmp_path / "m.mtx", "%%MatrixMarket matrix coordinate real general\n2 3 1\n1 1 1\n")
    genes = write(tmp_path / "genes.tsv", "g1\ng2\n")
    cells = write(tmp_path / "cells.tsv", "c1\nc2\n")

    with pytest.raises(DataFormatError):
        dataio.load_matrix_market(bad, genes, cells)
    with pytest.raises(DataFormatError):
        dataio.load_matrix_market(good, genes, cells)
    print("✅ test_load_matrix_market_bad_header_and_id_mismatch PASSED")


# ============================================================================
# TEST 3: Preprocessing
# ============================================================================
def test_default_preprocess_is_identity():
    x = dataio.ExpressionMatrix(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]), ["a", "b"], ["g1", "g2", "g3"])

    out = dataio.preprocess(x, dataio.PreprocessConfig())

    np.testing.assert_array_equal(out.values, x.values)
    print("✅ test_default_preprocess_is_identity PASSED")


def test_scrna_recipe_normalizes_and_selects_genes():
    """Median library size, log1p, top-variance genes, per-gene z-score"""
    counts = np.array([[1.0, 0.0, 9.0, 0.0],
                       [2.0, 2.0, 0.0, 0.0],
                       [0.0, 4.0, 4.0, 0.0],
                       [3.0, 1.0, 1.0, 3.0]])
    x = dataio.ExpressionMatrix(counts, list("abcd"), ["g1", "g2", "g3", "g4"])

    out = dataio.preprocess(x, dataio.PreprocessConfig.scrna_recipe(n_top_genes=2))

    assert out.n_genes == 2
    np.testing.assert_allclose(out.values.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.values.std(axis=0, ddof=1), 1.0)
    print("✅ test_scrna_recipe_normalizes_and_selects_genes PASSED")


def test_standardize_leaves_constant_gene_at_zero():
    x = dataio.ExpressionMatrix(np.array([[1.0, 5.0, 0.0], [3.0, 5.0, 1.0]]), ["a", "b"], ["g1", "g2", "g3"])

    out = dataio.preprocess(x, dataio.PreprocessConfig(standardize=True))

    np.testing.assert_array_equal(out.values[:, 1], [0.0, 0.0])
    print("✅ test_standardize_leaves_constant_gene_at_zero PASSED")


def test_standardize_only_is_idempotent():
    x = dataio.ExpressionMatrix(np.random.default_rng(3).gamma(2.0, 3.0, size=(20, 5)),
                                [f"c{i}" for i in range(20)], [f"g{j}" for j in range(5)])
    cfg = dataio.PreprocessConfig(standardize=True)

    once = dataio.preprocess(x, cfg)
    twice = dataio.preprocess(once, cfg)

    np.testing.assert_allclose(twice.values, once.values, atol=1e-10)
    print("✅ test_standardize_only_is_idempotent PASSED")


# ============================================================================
# TEST 4: Synthetic data
# ============================================================================
def test_synth_is_deterministic_and_balanced():
    cfg = dataio.SynthConfig(n_cells=101, n_genes=10, n_clusters=3, dropout_rate=0.3)

    a = dataio.synth(cfg, make_rng(5))
    b = dataio.synth(cfg, make_rng(5))

    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(np.bincount(a.labels), [34, 34, 33])
    print("✅ test_synth_is_deterministic_and_balanced PASSED")


def test_synth_marginal_variance():
    """Per-gene variance ≈ centroid_scale² + within_std² at N=5000"""
    cfg = dataio.SynthConfig(n_cells=5000, n_genes=40, n_clusters=1000, centroid_scale=2.0,
                             within_std=0.5, dropout_rate=0.0)

    x = dataio.synth(cfg, make_rng(11))

    assert x.values.var(axis=0, ddof=1).mean() == pytest.approx(2.0 ** 2 + 0.5 ** 2, rel=0.05)
    print("✅ test_synth_marginal_variance PASSED")


def test_noiseless_synth_is_recovered_by_kmeans():
    cfg = dataio.SynthConfig(n_cells=40, n_genes=10, n_clusters=4, within_std=0.0, dropout_rate=0.0)
    x = dataio.synth(cfg, make_rng(12))

    result = kmeans(x.values, KmeansConfig(K=4, n_init=5), make_rng(1))

    assert result.inertia == pytest.approx(0.0, abs=1e-12)
    assert ari(result.labels, x.labels) == pytest.approx(1.0)
    print("✅ test_noiseless_synth_is_recovered_by_kmeans PASSED")


def test_synth_config_rejects_more_clusters_than_cells():
    with pytest.raises(ConfigError):
        dataio.synth(dataio.SynthConfig(n_cells=3, n_genes=5, n_clusters=4), make_rng(0))
    print("✅ test_synth_config_rejects_more_clusters_than_cells PASSED")


def test_apportion_largest_remainder():
    np.testing.assert_array_equal(dataio.apportion(10, np.array([1.0, 1.0, 1.0])), [4, 3, 3])
    np.testing.assert_array_equal(dataio.apportion(7, np.array([0.5, 0.25, 0.25])), [3, 2, 2])
    print("✅ test_apportion_largest_remainder PASSED")


# ============================================================================
# TEST 5: Downsampling
# ============================================================================
def test_kept_count_rounds_up():
    assert dataio.kept_count(1000, 0.2) == 800
    assert dataio.kept_count(10, 0.55) == 5
    assert dataio.kept_count(3, 0.5) == 2
    print("✅ test_kept_count_rounds_up PASSED")


def test_stratified_downsample_keeps_every_class():
    labels = np.array([0] * 50 + [1] * 45 + [2] * 5)
    x = dataio.ExpressionMatrix(np.zeros((100, 3)), [f"c{i}" for i in range(100)], ["a", "b", "c"], labels)

    out = dataio.downsample(x, 0.8, "stratified", make_rng(1))

    assert out.n_cells == 20
    assert set(np.unique(out.labels)) == {0, 1, 2}
    assert out.cell_ids == sorted(out.cell_ids, key=lambda c: int(c[1:]))
    print("✅ test_stratified_downsample_keeps_every_class PASSED")


def test_downsample_validation():
    x = dataio.ExpressionMatrix(np.zeros((4, 3)), list("abcd"), ["a", "b", "c"])

    with pytest.raises(ConfigError):
        dataio.downsample(x, 0.0, "random", make_rng(0))
    with pytest.raises(ConfigError):
        dataio.downsample(x, 0.5, "stratified", make_rng(0))
    assert dataio.downsample(x, 0.5, "random", make_rng(0)).n_cells == 2
    print("✅ test_downsample_validation PASSED")


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    print("\n🧪 Running Data I/O Tests...\n")
    for fn in (test_load_csv_with_text_labels, test_load_csv_detects_tabs,
               test_load_csv_reports_row_and_column_of_bad_value,
               test_load_csv_rejects_negative_unless_allowed, test_load_csv_ragged_row,
               test_save_then_load_is_exact, test_load_matrix_market_sums_duplicates,
               test_load_matrix_market_genes_by_cells,
               test_load_matrix_market_bad_header_and_id_mismatch):
        with tempfile.TemporaryDirectory() as tmp:
            fn(Path(tmp))
    test_default_preprocess_is_identity()
    test_scrna_recipe_normalizes_and_selects_genes()
    test_standardize_leaves_constant_gene_at_zero()
    test_standardize_only_is_idempotent()
    test_synth_is_deterministic_and_balanced()
    test_synth_marginal_variance()
    test_noiseless_synth_is_recovered_by_kmeans()
    test_synth_config_rejects_more_clusters_than_cells()
    test_apportion_largest_remainder()
    test_kept_count_rounds_up()
    test_stratified_downsample_keeps_every_class()
    test_downsample_validation()
    print("\n✅ All tests PASSED!\n")
