"""
Unit Tests for Encoder Module
=============================
Tests modules/encoder.py: initialization, forward passes, momentum update
and checkpoints

How to run:
    pytest tests/test_encoder.py -v
"""

import json
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules import encoder  # noqa: E402
from modules.errors import CheckpointError, ConfigError, ShapeError  # noqa: E402
from modules.ndmath import make_rng  # noqa: E402


def small_model():
    model = encoder.ModelSpec(encoder_hidden=[6], feature_dim=4, instance_hidden=[5],
                              instance_dim=3, momentum=0.9)
    rng = make_rng(0)
    pair = encoder.init_encoder_pair(model.encoder_spec(7), model.momentum, rng)
    heads = encoder.init_heads(model, 3, rng)
    return model, pair, heads


# ============================================================================
# TEST 1: Initialization
# ============================================================================
def test_init_shapes_and_glorot_bounds():
    spec = encoder.MlpSpec([10, 8, 4])

    mlp = encoder.init_mlp(spec, make_rng(1))

    assert [w.shape for w in mlp.weights] == [(10, 8), (8, 4)]
    assert [b.shape for b in mlp.biases] == [(1, 8), (1, 4)]
    assert np.all(np.abs(mlp.weights[0]) <= np.sqrt(6.0 / 18))
    assert all(np.all(b == 0) for b in mlp.biases)
    print("✅ test_init_shapes_and_glorot_bounds PASSED")


def test_key_encoder_starts_as_copy():
    _, pair, _ = small_model()

    for q, k in zip(pair.query.parameters(), pair.key.parameters()):
        np.testing.assert_array_equal(q, k)
        assert q is not k
    print("✅ test_key_encoder_starts_as_copy PASSED")


def test_invalid_specs():
    with pytest.raises(ConfigError):
        encoder.init_mlp(encoder.MlpSpec([5]), make_rng(0))
    with pytest.raises(ConfigError):
        encoder.init_mlp(encoder.MlpSpec([5, 3], activation="gelu"), make_rng(0))
    with pytest.raises(ConfigError):
        encoder.init_heads(encoder.ModelSpec(), 1, make_rng(0))
    print("✅ test_invalid_specs PASSED")


# ============================================================================
# TEST 2: Forward passes
# ============================================================================
def test_forward_shapes_and_simplex_rows():
    _, pair, heads = small_model()
    x = np.random.default_rng(3).normal(size=(5, 7))

    h = encoder.forward_features(pair.query, x)
    z = encoder.project_instance(heads.instance, h)
    y = encoder.project_cluster(heads.cluster, h)

    assert h.shape == (5, 4)
    assert z.shape == (5, 3)
    assert y.shape == (5, 3)
    np.testing.assert_allclose(y.sum(axis=1), 1.0)
    assert np.all(y >= 0)
    print("✅ test_forward_shapes_and_simplex_rows PASSED")


def test_forward_rejects_wrong_width():
    _, pair, _ = small_model()

    with pytest.raises(ShapeError):
        encoder.forward_features(pair.query, np.ones((2, 6)))
    print("✅ test_forward_rejects_wrong_width PASSED")


# ============================================================================
# TEST 3: Momentum update
# ============================================================================
def test_momentum_update_blends_parameters():
    """θ_k ← m·θ_k + (1 − m)·θ_q; θ_q untouched"""
    _, pair, _ = small_model()
    for q in pair.query.parameters():
        q += 1.0
    before_q = [q.copy() for q in pair.query.parameters()]
    before_k = [k.copy() for k in pair.key.parameters()]

    updated = encoder.momentum_update(pair)

    for q, k_old, k_new, q_now in zip(before_q, before_k, updated.key.parameters(), updated.query.parameters()):
        np.testing.assert_allclose(k_new, 0.9 * k_old + 0.1 * q, rtol=0, atol=1e-12)
        np.testing.assert_array_equal(q_now, q)
    print("✅ test_momentum_update_blends_parameters PASSED")


def test_momentum_extremes():
    """m = 1 freezes θ_k exactly; m = 0 copies θ_q exactly"""
    _, pair, _ = small_model()
    for q in pair.query.parameters():
        q *= 1.37
    key_before = [k.copy() for k in pair.key.parameters()]

    frozen = encoder.momentum_update(encoder.EncoderPair(pair.query, pair.key, 1.0))
    copied = encoder.momentum_update(encoder.EncoderPair(pair.query, pair.key, 0.0))

    for k, before in zip(frozen.key.parameters(), key_before):
        np.testing.assert_array_equal(k, before)
    for k, q in zip(copied.key.parameters(), pair.query.parameters()):
        np.testing.assert_array_equal(k, q)
    print("✅ test_momentum_extremes PASSED")


# ============================================================================
# TEST 4: Checkpoints
# ============================================================================
def test_checkpoint_round_trip_is_exact(tmp_path):
    _, pair, heads = small_model()
    path = tmp_path / "ckpt.json"

    encoder.save_checkpoint(path, pair, heads, meta={"epoch": 4})
    pair2, heads2, meta = encoder.load_checkpoint(path)

    originals = pair.query.parameters() + pair.key.parameters() + heads.instance.parameters() + heads.cluster.parameters()
    loaded = pair2.query.parameters() + pair2.key.parameters() + heads2.instance.parameters() + heads2.cluster.parameters()
    for a, b in zip(originals, loaded):
        np.testing.assert_array_equal(a, b)
    assert pair2.momentum == pair.momentum
    assert meta == {"epoch": 4}
    print("✅ test_checkpoint_round_trip_is_exact PASSED")


def test_corrupt_checkpoints(tmp_path):
    _, pair, heads = small_model()
    path = tmp_path / "ckpt.json"
    encoder.save_checkpoint(path, pair, heads)
    doc = json.loads(path.read_text())

    garbage = tmp_path / "garbage.json"
    garbage.write_text("{not json")
    with pytest.raises(CheckpointError):
        encoder.load_checkpoint(garbage)

    doc["networks"]["f_q"]["weights"][0] = doc["networks"]["f_q"]["weights"][0][:-1]
    truncated = tmp_path / "truncated.json"
    truncated.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        encoder.load_checkpoint(truncated)

    doc["format"] = "something-else"
    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps(doc))
    with pytest.raises(CheckpointError):
        encoder.load_checkpoint(wrong)
    print("✅ test_corrupt_checkpoints PASSED")


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    print("\n🧪 Running Encoder Tests...\n")
    test_init_shapes_and_glorot_bounds()
    test_key_encoder_starts_as_copy()
    test_invalid_specs()
    test_forward_shapes_and_simplex_rows()
    test_forward_rejects_wrong_width()
    test_momentum_update_blends_parameters()
    test_momentum_extremes()
    with tempfile.TemporaryDirectory() as tmp:
        test_checkpoint_round_trip_is_exact(Path(tmp))
    with tempfile.TemporaryDirectory() as tmp:
        test_corrupt_checkpoints(Path(tmp))
    print("\n✅ All tests PASSED!\n")
