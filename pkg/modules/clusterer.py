"""
Clusterer Module
K-means for temporal labels and final cluster assignment
"""

import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from sklearn.cluster import kmeans_plusplus

import config
from modules.errors import ConfigError, ShapeError
from modules.ndmath import as_matrix

logger = logging.getLogger(__name__)

INIT_METHODS = ("kmeans++", "random")
FINAL_RULES = ("argmax", "kmeans")


@dataclass
class KmeansConfig:
    K: int
    max_iters: int = config.DEFAULT_KMEANS_MAX_ITERS
    tol: float = config.DEFAULT_KMEANS_TOL
    n_init: int = config.DEFAULT_KMEANS_N_INIT
    init: str = config.DEFAULT_KMEANS_INIT

    def validate(self):
        if self.K < 2:
            raise ConfigError(f"K must be ≥ 2, got {self.K}")
        if self.max_iters < 1 or self.n_init < 1:
            raise ConfigError("max_iters and n_init must be ≥ 1")
        if self.tol < 0:
            raise ConfigError(f"tol must be non-negative, got {self.tol}")
        if self.init not in INIT_METHODS:
            raise ConfigError(f"unknown init {self.init!r}; choose from {INIT_METHODS}")


class KmeansResult(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float


class LloydTrace(NamedTuple):
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: List[float]
    iterations: int


def _sq_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (np.sum(points ** 2, axis=1)[:, None] - 2.0 * points @ centroids.T
          + np.sum(centroids ** 2, axis=1)[None, :])
    return np.maximum(d2, 0.0)


def inertia_of(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    """Σ_i ‖x_i − c_label(i)‖², computed from explicit differences"""
    diff = points - centroids[labels]
    return float(np.sum(diff * diff))


def _update(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    k = centroids.shape[0]
    counts = np.bincount(labels, minlength=k)
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, points)
    new = np.where(counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centroids)

    empty = np.flatnonzero(counts == 0)
    if empty.size:
        # farthest points from their (updated) centroids seed the empty clusters
        cost = np.sum((points - new[labels]) ** 2, axis=1)
        order = np.argsort(-cost, kind="stable")
        for k_empty, idx in zip(empty, order):
            new[k_empty] = points[idx]
        logger.debug("Re-seeded %d empty clusters", empty.size)
    return new


def lloyd(points, init_centroids, max_iters: int = config.DEFAULT_KMEANS_MAX_ITERS,
          tol: float = config.DEFAULT_KMEANS_TOL) -> LloydTrace:
    """
    Lloyd iterations from fixed starting centroids

    Stops when the total squared centroid shift is ≤ tol or after max_iters.
    history holds the inertia after every assignment step and is
    non-increasing.
    """
    points = as_matrix(points, "points")
    centroids = np.array(init_centroids, dtype=np.float64)
    history = []
    iterations = 0
    for iterations in range(1, max_iters + 1):
        labels = np.argmin(_sq_distances(points, centroids), axis=1)
        history.append(inertia_of(points, labels, centroids))
        new = _update(points, labels, centroids)
        shift = float(np.sum((new - centroids) ** 2))
        centroids = new
        if shift <= tol:
            break
    labels = np.argmin(_sq_distances(points, centroids), axis=1)
    final = inertia_of(points, labels, centroids)
    history.append(final)
    return LloydTrace(labels, centroids, final, history, iterations)


def _initial_centroids(points: np.ndarray, cfg: KmeansConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.init == "random":
        return points[rng.choice(points.shape[0], size=cfg.K, replace=False)].copy()
    centers, _ = kmeans_plusplus(points, n_clusters=cfg.K, random_state=int(rng.integers(0, 2 ** 31 - 1)))
    return centers


def kmeans(points, cfg: KmeansConfig, rng: np.random.Generator) -> KmeansResult:
    """
    Best-of-n_init Lloyd's algorithm

    Restarts are compared by (inertia, restart index), so ties keep the
    earliest run. Deterministic for a given rng state.

    Args:
        points: N × P data, N ≥ K
        cfg (KmeansConfig): Settings
        rng (np.random.Generator): Random stream for seeding

    Returns:
        KmeansResult: (labels, centroids, inertia)
    """
    cfg.validate()
    points = as_matrix(points, "points")
    if points.shape[0] < cfg.K:
        raise ShapeError(f"k-means needs N ≥ K, got N={points.shape[0]}, K={cfg.K}")

    best: Optional[LloydTrace] = None
    for _ in range(cfg.n_init):
        trace = lloyd(points, _initial_centroids(points, cfg, rng), cfg.max_iters, cfg.tol)
        if best is None or trace.inertia < best.inertia:
            best = trace
    return KmeansResult(best.labels, best.centroids, best.inertia)


def assign_final(scores, rule: str = "argmax", kmeans_cfg: Optional[KmeansConfig] = None,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    Final cluster labels

    "argmax" takes the most probable cluster per row of the cluster-head
    output, lowest index on ties. "kmeans" clusters the given embeddings.

    Args:
        scores: N × K probabilities (argmax) or N × P embeddings (kmeans)
        rule (str): "argmax" or "kmeans"
        kmeans_cfg (KmeansConfig): Needed for "kmeans"
        rng (np.random.Generator): Needed for "kmeans"

    Returns:
        np.ndarray: N labels
    """
    scores = as_matrix(scores, "scores")
    if rule == "argmax":
        labels = np.argmax(scores, axis=1)
        tied = np.sum(scores == scores.max(axis=1, keepdims=True), axis=1) > 1
        if tied.any():
            logger.warning("Degenerate assignment: %d of %d rows tie for the top cluster; lowest index chosen",
                           int(tied.sum()), scores.shape[0])
        return labels
    if rule == "kmeans":
        if kmeans_cfg is None or rng is None:
            raise ConfigError("the kmeans rule needs a KmeansConfig and an rng")
        return kmeans(scores, kmeans_cfg, rng).labels
    raise ConfigError(f"unknown assignment rule {rule!r}; choose from {FINAL_RULES}")
