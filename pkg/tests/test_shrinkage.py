"""
Unit Tests for Shrinkage Module
===============================
Tests modules/shrinkage.py: James-Stein / MAP estimators, risk estimates,
cluster statistics, the SURE loss and the Monte-Carlo bench

How to run:
    pytest tests/test_shrinkage.py -v
"""

import logging
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import shrinkage  # noqa: E402
from modules.errors import ConfigError, DegenerateError, ShapeError  # noqa: E402
from modules.ndmath import Tape, grad, make_rng  # noqa: E402


# ============================================================================
# TEST 1: Single-vector estimators
# ============================================================================
def test_js_estimate_factor_and_positive_part():
    x = np.array([1.0, 0.0, 0.0, 0.0])  # ‖x‖² = 1, P = 4

    plain = shrinkage.js_estimate(x, sigma2=1.0)
    clipped = shrinkage.js_estimate(x, sigma2=1.0, positive_part=True)

    np.testing.assert_allclose(plain, [-1.0, 0.0, 0.0, 0.0])
    np.testing.assert_array_equal(clipped, np.zeros(4))
    np.testing.assert_allclose(shrinkage.js_estimate(np.full(3, 2.0), 1.0), np.full(3, 2.0) * (1 - 1 / 12))
    print("✅ test_js_estimate_factor_and_positive_part PASSED")


def test_js_estimate_errors():
    with pytest.raises(ShapeError):
        shrinkage.js_estimate(np.ones(2), 1.0)
    with pytest.raises(DegenerateError):
        shrinkage.js_estimate(np.zeros(5), 1.0)
    print("✅ test_js_estimate_errors PASSED")


def test_map_estimate_is_convex_combination():
    h = shrinkage.GaussianHierarchy(mu=np.array([1.0, 1.0, 1.0]), tau2=3.0, sigma2=1.0)

    est = shrinkage.map_estimate(np.array([5.0, 1.0, -3.0]), h)

    np.testing.assert_allclose(est, [4.0, 1.0, -2.0])
    with pytest.raises(DegenerateError):
        shrinkage.map_estimate(np.ones(3), shrinkage.GaussianHierarchy(np.zeros(3), 0.0, 0.0))
    with pytest.raises(ShapeError):
        shrinkage.map_estimate(np.ones(2), h)
    print("✅ test_map_estimate_is_convex_combination PASSED")


def test_risk_estimates_agree_when_prior_is_a_point():
    """With τ² = 0 the closed form and Stein's estimate coincide"""
    h = shrinkage.GaussianHierarchy(mu=np.array([0.5, -1.0, 2.0, 0.0]), tau2=0.0, sigma2=0.7)
    x = np.array([1.0, 2.0, -1.0, 0.3])

    assert shrinkage.sure(x, h) == pytest.approx(shrinkage.stein_sure(x, h), rel=1e-12)
    print("✅ test_risk_estimates_agree_when_prior_is_a_point PASSED")


# ============================================================================
# TEST 2: Monte-Carlo risk checks
# ============================================================================
def test_stein_risk_estimate_is_unbiased():
    """P=50, σ=1, τ=2, 2·10⁴ draws: |mean(SURE) − MSE(MAP)| / MSE ≤ 2%"""
    cfg = shrinkage.RiskBenchConfig(dim=50, sigma=1.0, tau=2.0, trials=20000)

    report = shrinkage.risk_bench(cfg, make_rng(2024))

    entry = report["estimators"]["map"]
    assert abs(entry["stein_sure_mean"] - entry["empirical_mse"]) / entry["empirical_mse"] <= 0.02
    assert entry["empirical_mse"] == pytest.approx(entry["closed_form"], rel=0.02)
    print("✅ test_stein_risk_estimate_is_unbiased PASSED")


def test_js_dominates_mle_and_matches_predicted_reduction():
    """P=10, σ=1: MSE(JS) < MSE(MLE) for ‖θ‖ ∈ {0, 1, 10}; reduction within 5%"""
    for norm in (0.0, 1.0, 10.0):
        report = shrinkage.risk_bench(
            shrinkage.RiskBenchConfig(dim=10, sigma=1.0, theta_norm=norm, trials=200000),
            make_rng(int(norm) + 1))

        est = report["estimators"]
        assert est["js"]["empirical_mse"] < est["mle"]["empirical_mse"]
        assert est["js_plus"]["empirical_mse"] <= est["js"]["empirical_mse"]
        assert report["js_reduction"]["relative_gap"] <= 0.05
    print("✅ test_js_dominates_mle_and_matches_predicted_reduction PASSED")


def test_map_risk_against_prior_mean():
    """P=20, σ=1, τ=2: mean ‖θ̂ − μ‖² within 2% of P·τ⁴/(σ²+τ²) = 64"""
    report = shrinkage.risk_bench(shrinkage.RiskBenchConfig(dim=20, sigma=1.0, tau=2.0, trials=10000),
                                  make_rng(77))

    entry = report["estimators"]["map"]
    assert entry["closed_form_vs_prior"] == pytest.approx(64.0)
    assert entry["empirical_mse_vs_prior"] == pytest.approx(64.0, rel=0.02)
    print("✅ test_map_risk_against_prior_mean PASSED")


def test_risk_bench_config_validation():
    with pytest.raises(ConfigError):
        shrinkage.RiskBenchConfig(dim=5, tau=1.0, trials=999).validate()
    with pytest.raises(ConfigError):
        shrinkage.RiskBenchConfig(dim=5, tau=1.0, theta_norm=1.0).validate()
    with pytest.raises(ConfigError):
        shrinkage.RiskBenchConfig(dim=5).validate()
    print("✅ test_risk_bench_config_validation PASSED")


def test_risk_bench_grid_covers_both_modes():
    reports = shrinkage.risk_bench_grid([3], [1.0], [0.5, 2.0], [0.0], trials=1000, seed=1)

    assert [r["config"]["mode"] for r in reports] == ["hierarchical", "hierarchical", "fixed_theta"]
    assert "map" not in reports[2]["estimators"]
    print("✅ test_risk_bench_grid_covers_both_modes PASSED")


# ============================================================================
# TEST 3: Cluster statistics and the SURE loss
# ============================================================================
def test_cluster_stats_values():
    h = np.array([[0.0, 0.0], [2.0, 4.0], [10.0, 10.0], [12.0, 10.0], [11.0, 13.0]])
    labels = np.array([0, 0, 1, 1, 1])

    stats = shrinkage.cluster_stats(h, labels, 2)

    np.testing.assert_allclose(stats.mu_hat, [[1.0, 2.0], [11.0, 11.0]])
    np.testing.assert_allclose(stats.sigma2_pk[0], [2.0, 8.0])
    np.testing.assert_allclose(stats.sigma2_k, [5.0, 2.0])
    np.testing.assert_allclose(stats.tau2_k, [2.5, 2.0 / 3.0])
    np.testing.assert_array_equal(stats.n_k, [2, 3])
    assert not stats.degenerate.any()
    print("✅ test_cluster_stats_values PASSED")


def test_sure_loss_vanishes_on_its_own_statistics():
    """100 random instances, N ∈ [10, 500], P ∈ [2, 64], K ∈ [2, 8]"""
    gen = np.random.default_rng(31)
    for _ in range(100):
        k = int(gen.integers(2, 9))
        n = int(gen.integers(max(10, 2 * k), 501))
        p = int(gen.integers(2, 65))
        h = gen.normal(scale=gen.uniform(0.1, 5.0), size=(n, p))
        labels = gen.permutation(np.arange(n) % k)

        stats = shrinkage.cluster_stats(h, labels, k)
        loss = float(shrinkage.sure_loss(h, stats))

        assert abs(loss) <= 1e-8 * n * p
    print("✅ test_sure_loss_vanishes_on_its_own_statistics PASSED")


def test_sure_loss_gradient_is_scaled_residual():
    """∂L/∂h_i = 2·s_k·(h_i − μ̂_k) with statistics held fixed"""
    gen = np.random.default_rng(5)
    h = gen.normal(size=(12, 4))
    labels = np.arange(12) % 3
    stats = shrinkage.cluster_stats(h, labels, 3)
    moved = h + gen.normal(scale=0.1, size=h.shape)

    tape = Tape()
    var = tape.watch(moved)
    (g,) = grad(shrinkage.sure_loss(var, stats), [var])

    factors = stats.shrink_factors()[labels][:, None]
    np.testing.assert_allclose(g, 2.0 * factors * (moved - stats.mu_hat[labels]), rtol=1e-12, atol=1e-14)
    print("✅ test_sure_loss_gradient_is_scaled_residual PASSED")


def test_degenerate_clusters_warn_and_raise(caplog):
    h = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [5.0, 5.0]])
    labels = np.array([0, 0, 0, 1])

    with caplog.at_level(logging.WARNING, logger="modules.shrinkage"):
        stats = shrinkage.cluster_stats(h, labels, 2)

    np.testing.assert_array_equal(stats.degenerate, [False, True])
    assert "Degenerate clusters" in caplog.text
    with pytest.raises(DegenerateError):
        shrinkage.sure_loss(h, stats)
    assert float(shrinkage.sure_loss(h[:3], stats, labels[:3])) == pytest.approx(0.0, abs=1e-12)
    assert shrinkage.sure_loss(np.zeros((0, 2)), stats, np.zeros(0, dtype=int)) == 0.0
    print("✅ test_degenerate_clusters_warn_and_raise PASSED")


def test_cluster_stats_label_checks():
    with pytest.raises(ShapeError):
        shrinkage.cluster_stats(np.ones((3, 2)), [0, 1], 2)
    with pytest.raises(ConfigError):
        shrinkage.cluster_stats(np.ones((3, 2)), [0, 1, 2], 2)
    print("✅ test_cluster_stats_label_checks PASSED")


if __name__ == "__main__":
    print("\n🧪 Running Shrinkage Tests...\n")
    test_js_estimate_factor_and_positive_part()
    test_js_estimate_errors()
    test_map_estimate_is_convex_combination()
    test_risk_estimates_agree_when_prior_is_a_point()
    test_stein_risk_estimate_is_unbiased()
    test_js_dominates_mle_and_matches_predicted_reduction()
    test_map_risk_against_prior_mean()
    test_risk_bench_config_validation()
    test_risk_bench_grid_covers_both_modes()
    test_cluster_stats_values()
    test_sure_loss_vanishes_on_its_own_statistics()
    test_sure_loss_gradient_is_scaled_residual()
    test_cluster_stats_label_checks()
    print("\n✅ All tests PASSED!\n")
