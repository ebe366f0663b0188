"""
Augmentation Module
Two stochastic views of each cell: random masking plus optional Gaussian noise
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

import config
from modules.errors import ConfigError
from modules.ndmath import as_matrix


@dataclass
class AugmentConfig:
    mask_fraction: float = config.DEFAULT_MASK_FRACTION
    noise_std: float = config.DEFAULT_NOISE_STD
    noise_enabled: bool = True

    def validate(self):
        if not 0.0 <= self.mask_fraction <= 1.0:
            raise ConfigError(f"mask_fraction must be in [0, 1], got {self.mask_fraction}")
        if self.noise_std < 0:
            raise ConfigError(f"noise_std must be non-negative, got {self.noise_std}")


def _view(x: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    masked = rng.random(x.shape) < cfg.mask_fraction
    out = np.where(masked, 0.0, x)
    if cfg.noise_enabled and cfg.noise_std > 0:
        noise = rng.normal(0.0, cfg.noise_std, size=x.shape)
        out = np.where(masked, 0.0, out + noise)
    return out


def augment_pair(x, cfg: AugmentConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Draw views a and b of one cell or of a whole batch

    Each coordinate is zeroed with probability mask_fraction; noise, when
    enabled, lands only on unmasked coordinates so masked entries are exactly
    zero. The two views use independent child streams seeded from rng.

    Args:
        x: Vector of G values, or a B × G batch (rows augmented independently)
        cfg (AugmentConfig): Masking and noise settings
        rng (np.random.Generator): Parent stream

    Returns:
        tuple: (view_a, view_b), shaped like x
    """
    cfg.validate()
    arr = np.asarray(x, dtype=np.float64)
    batch = as_matrix(arr, "augmentation input")
    seed_a, seed_b = rng.integers(0, 2 ** 63, size=2)
    view_a = _view(batch, cfg, np.random.Generator(np.random.PCG64(int(seed_a))))
    view_b = _view(batch, cfg, np.random.Generator(np.random.PCG64(int(seed_b))))
    if arr.ndim == 1:
        return view_a[0], view_b[0]
    return view_a, view_b
