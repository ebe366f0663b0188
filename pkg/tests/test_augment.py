"""
Unit Tests for Augmentation Module
==================================
Tests modules/augment.py: masking rate, noise placement and reproducibility

How to run:
    pytest tests/test_augment.py -v
"""

import os
import sys

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules.augment import AugmentConfig, augment_pair  # noqa: E402
from modules.errors import ConfigError  # noqa: E402
from modules.ndmath import make_rng  # noqa: E402


# ============================================================================
# TEST 1: Masking rate
# ============================================================================
def test_mask_fraction_matches_expectation():
    """Zeroed fraction over 10⁵ coordinates passes a χ² test at α = 0.001"""
    # Arrange: strictly positive input so zeros come only from masking
    x = np.ones((500, 200))
    cfg = AugmentConfig(mask_fraction=0.2, noise_enabled=False)

    # Act
    view_a, _ = augment_pair(x, cfg, make_rng(8))

    # Assert
    zeros = int(np.sum(view_a == 0.0))
    n = view_a.size
    expected = np.array([0.2 * n, 0.8 * n])
    _, p = stats.chisquare([zeros, n - zeros], expected)
    assert p > 0.001
    print("✅ test_mask_fraction_matches_expectation PASSED")


def test_noise_lands_only_on_unmasked_entries():
    x = np.full((50, 40), 3.0)
    cfg = AugmentConfig(mask_fraction=0.3, noise_std=0.5, noise_enabled=True)

    view_a, view_b = augment_pair(x, cfg, make_rng(2))

    for view in (view_a, view_b):
        masked = view == 0.0
        assert masked.any()
        assert np.all(view[~masked] != 3.0)
    print("✅ test_noise_lands_only_on_unmasked_entries PASSED")


def test_no_noise_keeps_values():
    x = np.arange(1.0, 21.0).reshape(4, 5)
    cfg = AugmentConfig(mask_fraction=0.5, noise_enabled=False)

    view_a, view_b = augment_pair(x, cfg, make_rng(4))

    for view in (view_a, view_b):
        kept = view != 0.0
        np.testing.assert_array_equal(view[kept], x[kept])
    print("✅ test_no_noise_keeps_values PASSED")


# ============================================================================
# TEST 2: Shapes, edge rates, reproducibility
# ============================================================================
def test_single_vector_and_extreme_rates():
    x = np.ones(10)

    a, b = augment_pair(x, AugmentConfig(mask_fraction=0.0, noise_enabled=False), make_rng(0))
    np.testing.assert_array_equal(a, x)
    np.testing.assert_array_equal(b, x)

    a, _ = augment_pair(x, AugmentConfig(mask_fraction=1.0, noise_std=1.0), make_rng(0))
    np.testing.assert_array_equal(a, np.zeros(10))
    print("✅ test_single_vector_and_extreme_rates PASSED")


def test_views_are_independent_and_reproducible():
    x = np.ones((30, 30))
    cfg = AugmentConfig()

    a1, b1 = augment_pair(x, cfg, make_rng(11))
    a2, b2 = augment_pair(x, cfg, make_rng(11))

    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(b1, b2)
    assert not np.array_equal(a1, b1)
    print("✅ test_views_are_independent_and_reproducible PASSED")


def test_invalid_config():
    with pytest.raises(ConfigError):
        augment_pair(np.ones(3), AugmentConfig(mask_fraction=1.5), make_rng(0))
    with pytest.raises(ConfigError):
        augment_pair(np.ones(3), AugmentConfig(noise_std=-0.1), make_rng(0))
    print("✅ test_invalid_config PASSED")


if __name__ == "__main__":
    print("\n🧪 Running Augmentation Tests...\n")
    test_mask_fraction_matches_expectation()
    test_noise_lands_only_on_unmasked_entries()
    test_no_noise_keeps_values()
    test_single_vector_and_extreme_rates()
    test_views_are_independent_and_reproducible()
    test_invalid_config()
    print("\n✅ All tests PASSED!\n")
