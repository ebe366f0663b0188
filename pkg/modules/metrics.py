"""
Metrics Module
Clustering agreement (ARI, NMI) and the positive/negative cosine-gap diagnostic
"""

from dataclasses import dataclass
from typing import Dict, NamedTuple

import numpy as np
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score
from sklearn.metrics.cluster import contingency_matrix

from modules.errors import ConfigError, DegenerateError, ShapeError
from modules.ndmath import as_matrix, row_norms

NMI_AVERAGES = ("arithmetic", "geometric")


def _check_labelings(pred, truth):
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.size != truth.size:
        raise ShapeError(f"labelings differ in length: {pred.size} vs {truth.size}")
    if pred.size < 2:
        raise DegenerateError(f"agreement scores need N ≥ 2, got {pred.size}")
    return pred, truth


@dataclass
class ContingencyTable:
    """counts[i, j] = points in predicted cluster i and true class j"""
    counts: np.ndarray

    @classmethod
    def from_labels(cls, pred, truth) -> "ContingencyTable":
        pred, truth = _check_labelings(pred, truth)
        # sklearn puts the first argument's classes on the rows
        return cls(np.asarray(contingency_matrix(pred, truth), dtype=np.int64))

    @property
    def pred_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def true_marginals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def ari(pred, truth) -> float:
    """Adjusted Rand index from scikit-learn's int64 pair confusion counts"""
    pred, truth = _check_labelings(pred, truth)
    return float(adjusted_rand_score(truth, pred))


def nmi(pred, truth, average_method: str = "arithmetic") -> float:
    """
    Mutual information normalized by the arithmetic (default) or geometric
    mean of the two entropies; two single-cluster labelings score 1
    """
    if average_method not in NMI_AVERAGES:
        raise ConfigError(f"unknown NMI normalization {average_method!r}; choose from {NMI_AVERAGES}")
    pred, truth = _check_labelings(pred, truth)
    return float(normalized_mutual_info_score(truth, pred, average_method=average_method))


class CosineGap(NamedTuple):
    mean_pos: float
    mean_neg: float
    gap: float

    def to_dict(self) -> Dict[str, float]:
        return self._asdict()


def cosine_gap(z_a, z_b) -> CosineGap:
    """
    Mean cosine over positive pairs (a_i, b_i) minus the mean over negative
    pairs: every unordered pair of the 2N embeddings except self-pairs and
    positive pairs

    Args:
        z_a: N × D embeddings of view a
        z_b: N × D embeddings of view b

    Returns:
        CosineGap: (mean_pos, mean_neg, gap)
    """
    a = as_matrix(z_a, "Z_a")
    b = as_matrix(z_b, "Z_b")
    if a.shape != b.shape:
        raise ShapeError(f"Z_a {a.shape} and Z_b {b.shape} differ")
    n = a.shape[0]
    if n < 2:
        raise DegenerateError("cosine gap needs at least two rows for negative pairs")
    for view, rows in (("a", a), ("b", b)):
        zero = np.flatnonzero(row_norms(rows) == 0)
        if zero.size:
            raise DegenerateError(f"row {int(zero[0])} of view {view} has zero norm")

    stacked = np.vstack([a, b])
    unit = stacked / row_norms(stacked)[:, None]
    sim = unit @ unit.T
    pos = np.einsum("ij,ij->i", unit[:n], unit[n:])
    upper = (sim.sum() - np.trace(sim)) / 2.0
    mean_pos = float(pos.mean())
    mean_neg = float((upper - pos.sum()) / (2 * n * (n - 1)))
    return CosineGap(mean_pos, mean_neg, mean_pos - mean_neg)
