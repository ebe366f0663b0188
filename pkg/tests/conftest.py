"""
Shared pytest fixtures

Statistical end-to-end checks at full scale are marked ``slow`` and only run
when SHRINKCL_RUN_SLOW=1.
"""

import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import modules
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from modules.dataio import SynthConfig, synth  # noqa: E402
from modules.encoder import ModelSpec  # noqa: E402
from modules.ndmath import make_rng  # noqa: E402
from modules.trainer import TrainConfig  # noqa: E402

RUN_SLOW = os.environ.get("SHRINKCL_RUN_SLOW") == "1"


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale statistical checks (SHRINKCL_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if RUN_SLOW:
        return
    skip = pytest.mark.skip(reason="set SHRINKCL_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def rng():
    return make_rng(12345)


@pytest.fixture
def tiny_blobs():
    """60 cells × 12 genes, 3 well-separated clusters"""
    cfg = SynthConfig(n_cells=60, n_genes=12, n_clusters=3, centroid_scale=3.0,
                      within_std=0.2, dropout_rate=0.0)
    return synth(cfg, make_rng(7))


@pytest.fixture
def tiny_train_config():
    """A few epochs of a small network: fast enough for every default test run"""
    return TrainConfig(
        n_clusters=3,
        epochs=3,
        batch_size=20,
        learning_rate=1e-3,
        model=ModelSpec(encoder_hidden=[16], feature_dim=8, instance_hidden=[8],
                        instance_dim=6, activation="relu", momentum=0.9),
        kmeans_n_init=2,
        eval_every=1,
        seed=3,
    )


@pytest.fixture
def labelings():
    """200 random (pred, truth) pairs with N ≤ 12"""
    gen = np.random.default_rng(99)
    out = []
    for _ in range(200):
        n = int(gen.integers(2, 13))
        out.append((gen.integers(0, int(gen.integers(1, 5)), n),
                    gen.integers(0, int(gen.integers(1, 5)), n)))
    return out
