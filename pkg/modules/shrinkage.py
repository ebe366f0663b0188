"""
Shrinkage Module
James-Stein and MAP estimators, Stein's risk estimate, per-cluster plug-in
statistics and the aggregate SURE loss used during training
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

import config
from modules.errors import ConfigError, DegenerateError, ShapeError
from modules.ndmath import as_matrix, derive_rng, gaussian_sample, mul, square, sub, total, value

logger = logging.getLogger(__name__)


def _vector(x, name: str = "x") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or Inf")
    return arr


@dataclass
class GaussianHierarchy:
    """θ_p ~ Normal(μ_p, τ²), X_p | θ_p ~ Normal(θ_p, σ²)"""
    mu: np.ndarray
    tau2: float
    sigma2: float

    def __post_init__(self):
        self.mu = _vector(self.mu, "mu")
        if self.tau2 < 0 or self.sigma2 < 0:
            raise ConfigError(f"variances must be non-negative, got tau2={self.tau2}, sigma2={self.sigma2}")

    @property
    def dim(self) -> int:
        return self.mu.size

    def denominator(self) -> float:
        denom = self.tau2 + self.sigma2
        if denom <= 0:
            raise DegenerateError("tau2 + sigma2 is zero")
        return denom

    def check(self, x: np.ndarray):
        if x.size != self.dim:
            raise ShapeError(f"x has {x.size} components, prior mean has {self.dim}")


# ============ Single-vector estimators ============

def js_estimate(x, sigma2: float, positive_part: bool = False) -> np.ndarray:
    """
    James-Stein shrinkage toward the origin: (1 − (P−2)σ²/‖x‖²)·x

    The plain form may flip the sign of x when the factor is negative;
    positive_part clips the factor at zero.

    Args:
        x: Observation vector of P ≥ 3 components
        sigma2 (float): Observation variance
        positive_part (bool): Use max(factor, 0)

    Returns:
        np.ndarray: Shrunk vector
    """
    x = _vector(x)
    if x.size < 3:
        raise ShapeError(f"James-Stein needs P ≥ 3, got {x.size}")
    if sigma2 < 0:
        raise ConfigError(f"sigma2 must be non-negative, got {sigma2}")
    norm2 = float(x @ x)
    if norm2 == 0:
        raise DegenerateError("James-Stein is undefined at the zero vector")
    factor = 1.0 - (x.size - 2) * sigma2 / norm2
    if positive_part:
        factor = max(factor, 0.0)
    return factor * x


def map_estimate(x, h: GaussianHierarchy) -> np.ndarray:
    """(τ²/(τ²+σ²))·x + (σ²/(τ²+σ²))·μ"""
    x = _vector(x)
    h.check(x)
    denom = h.denominator()
    return (h.tau2 / denom) * x + (h.sigma2 / denom) * h.mu


def sure(x, h: GaussianHierarchy) -> float:
    """
    Closed-form risk estimate (σ²/(τ²+σ²))·(‖μ − x‖² + P(τ²−σ²))

    This is the form the aggregate loss is built from. Its expectation under
    the hierarchy is 2Pσ²τ²/(σ²+τ²); use stein_sure for an unbiased estimate
    of the MAP risk.
    """
    x = _vector(x)
    h.check(x)
    diff = h.mu - x
    return float(h.sigma2 / h.denominator() * (diff @ diff + h.dim * (h.tau2 - h.sigma2)))


def stein_sure(x, h: GaussianHierarchy) -> float:
    """
    Stein's unbiased risk estimate of the MAP estimator

    −Pσ² + ‖θ̂ − x‖² + 2σ²·div θ̂, with div θ̂ = P·τ²/(τ²+σ²). Its mean equals
    E‖θ̂ − θ‖² for any θ.
    """
    x = _vector(x)
    estimate = map_estimate(x, h)
    resid = estimate - x
    divergence = h.dim * h.tau2 / h.denominator()
    return float(-h.dim * h.sigma2 + resid @ resid + 2.0 * h.sigma2 * divergence)


# ============ Cluster statistics ============

@dataclass
class ClusterStats:
    """
    Plug-in estimates per temporal cluster

    Attributes:
        K (int): Cluster count
        labels (np.ndarray): N temporal labels
        mu_hat (np.ndarray): K × P cluster means
        sigma2_pk (np.ndarray): K × P per-component sample variances (n_k − 1)
        sigma2_k (np.ndarray): K row means of sigma2_pk
        tau2_k (np.ndarray): K values sigma2_k / n_k
        n_k (np.ndarray): K member counts
        degenerate (np.ndarray): K flags, n_k ≤ 1 or sigma2_k == 0
    """
    K: int
    labels: np.ndarray
    mu_hat: np.ndarray
    sigma2_pk: np.ndarray
    sigma2_k: np.ndarray
    tau2_k: np.ndarray
    n_k: np.ndarray
    degenerate: np.ndarray

    @property
    def dim(self) -> int:
        return self.mu_hat.shape[1]

    def shrink_factors(self) -> np.ndarray:
        """σ²_k/(σ²_k/N_k + σ²_k); zero for degenerate clusters"""
        denom = self.tau2_k + self.sigma2_k
        return np.divide(self.sigma2_k, denom, out=np.zeros(self.K), where=~self.degenerate)


def cluster_stats(h_batch, labels, K: int) -> ClusterStats:
    """
    Per-cluster mean, Bessel-corrected component variances, σ²_k and τ²_k

    Clusters with fewer than two members, or with zero variance, are flagged
    degenerate and a warning is logged.

    Args:
        h_batch: N × P features
        labels: N ints in [0, K)
        K (int): Number of clusters

    Returns:
        ClusterStats: Frozen statistics
    """
    h = as_matrix(h_batch, "features")
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size != h.shape[0]:
        raise ShapeError(f"{labels.size} labels for {h.shape[0]} points")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ConfigError(f"labels must lie in [0, {K})")

    p = h.shape[1]
    n_k = np.bincount(labels, minlength=K)
    mu_hat = np.zeros((K, p))
    sigma2_pk = np.zeros((K, p))
    for k in range(K):
        members = h[labels == k]
        if n_k[k] >= 1:
            mu_hat[k] = members.mean(axis=0)
        if n_k[k] >= 2:
            sigma2_pk[k] = members.var(axis=0, ddof=1)
    sigma2_k = sigma2_pk.mean(axis=1)
    tau2_k = np.divide(sigma2_k, n_k, out=np.zeros(K), where=n_k > 0)
    degenerate = (n_k <= 1) | (sigma2_k == 0)

    if degenerate.any():
        logger.warning("Degenerate clusters %s (sizes %s) are excluded from the SURE loss",
                       np.flatnonzero(degenerate).tolist(), n_k[degenerate].tolist())
    return ClusterStats(K=K, labels=labels, mu_hat=mu_hat, sigma2_pk=sigma2_pk,
                        sigma2_k=sigma2_k, tau2_k=tau2_k, n_k=n_k, degenerate=degenerate)


def sure_loss(h_batch, stats: ClusterStats, labels: Optional[np.ndarray] = None):
    """
    Aggregate SURE loss against frozen statistics

    Σ_i s_k·(‖μ̂_k − h_i‖² + P(τ²_k − σ²_k)) with s_k = σ²_k/(τ²_k + σ²_k)
    and k = label(i). Statistics are constants, so the gradient for h_i is
    2·s_k·(h_i − μ̂_k). Evaluated on the set the statistics came from, the
    sum is zero up to rounding.

    Args:
        h_batch: B × P features (array or Var)
        stats (ClusterStats): Frozen statistics
        labels: B batch labels; defaults to stats.labels

    Returns:
        Scalar loss (Var when h_batch is a Var); 0.0 for an empty batch
    """
    labels = stats.labels if labels is None else np.asarray(labels, dtype=np.int64).reshape(-1)
    hv = value(h_batch)
    if labels.size == 0:
        return 0.0
    if hv.ndim != 2 or hv.shape[0] != labels.size:
        raise ShapeError(f"features of shape {hv.shape} for {labels.size} labels")
    if hv.shape[1] != stats.dim:
        raise ShapeError(f"features have {hv.shape[1]} components, statistics have {stats.dim}")
    bad = labels[stats.degenerate[labels]]
    if bad.size:
        raise DegenerateError(f"batch point labeled with degenerate cluster {int(bad[0])}")

    factor = stats.shrink_factors()[labels][:, None]
    offset = (stats.dim * (stats.tau2_k - stats.sigma2_k))[labels][:, None]
    sq = total(square(sub(h_batch, stats.mu_hat[labels])), axis=1, keepdims=True)
    return total(mul(factor, sq + offset))


# ============ Monte-Carlo risk bench ============

@dataclass
class RiskBenchConfig:
    """
    Fixed-θ mode when theta_norm is set, hierarchical mode when tau is set

    In fixed-θ mode every component of θ equals theta_norm/√P. In
    hierarchical mode θ ~ Normal(0, τ²) per trial.
    """
    dim: int
    sigma: float = 1.0
    tau: Optional[float] = None
    theta_norm: Optional[float] = None
    trials: int = config.DEFAULT_BENCH_TRIALS

    def validate(self):
        if self.trials < config.MIN_BENCH_TRIALS:
            raise ConfigError(f"trials must be ≥ {config.MIN_BENCH_TRIALS}, got {self.trials}")
        if self.dim < 1:
            raise ConfigError(f"dim must be ≥ 1, got {self.dim}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be non-negative, got {self.sigma}")
        if (self.tau is None) == (self.theta_norm is None):
            raise ConfigError("set exactly one of tau (hierarchical) or theta_norm (fixed θ)")
        if self.tau is not None and self.tau < 0:
            raise ConfigError(f"tau must be non-negative, got {self.tau}")

    @property
    def mode(self) -> str:
        return "hierarchical" if self.tau is not None else "fixed_theta"


def _summary(sq_err: np.ndarray, trials: int) -> Dict:
    return {
        "empirical_mse": float(sq_err.mean()),
        "trials": trials,
        "ci95": float(1.96 * sq_err.std(ddof=1) / np.sqrt(trials)),
    }


def _js_rows(x: np.ndarray, sigma2: float, positive_part: bool) -> np.ndarray:
    norm2 = np.einsum("ij,ij->i", x, x)
    factor = 1.0 - (x.shape[1] - 2) * sigma2 / norm2
    if positive_part:
        factor = np.maximum(factor, 0.0)
    return factor[:, None] * x


def risk_bench(cfg: RiskBenchConfig, rng: np.random.Generator) -> Dict:
    """
    Monte-Carlo squared-error risk of MLE, James-Stein and MAP

    Returns:
        dict: {"config", "estimators": {name → {empirical_mse, closed_form?,
        trials, ci95, ...}}, "js_reduction"?}
    """
    cfg.validate()
    p, n = cfg.dim, cfg.trials
    sigma2 = cfg.sigma ** 2
    if cfg.mode == "fixed_theta":
        theta = np.full((n, p), cfg.theta_norm / np.sqrt(p))
    else:
        theta = gaussian_sample(rng, n, p, 0.0, cfg.tau)
    x = theta + gaussian_sample(rng, n, p, 0.0, cfg.sigma)

    def sq_err(est):
        d = est - theta
        return np.einsum("ij,ij->i", d, d)

    estimators = {"mle": _summary(sq_err(x), n)}
    estimators["mle"]["closed_form"] = p * sigma2
    report = {"config": {"mode": cfg.mode, "dim": p, "sigma": cfg.sigma, "tau": cfg.tau,
                         "theta_norm": cfg.theta_norm, "trials": n},
              "estimators": estimators}

    if p >= 3:
        js = _js_rows(x, sigma2, positive_part=False)
        estimators["js"] = _summary(sq_err(js), n)
        estimators["js_plus"] = _summary(sq_err(_js_rows(x, sigma2, positive_part=True)), n)
        predicted = (p - 2) ** 2 * sigma2 ** 2 * float(np.mean(1.0 / np.einsum("ij,ij->i", x, x)))
        measured = estimators["mle"]["empirical_mse"] - estimators["js"]["empirical_mse"]
        report["js_reduction"] = {
            "predicted": predicted,
            "measured": measured,
            "relative_gap": abs(measured - predicted) / predicted if predicted > 0 else 0.0,
        }

    if cfg.mode == "hierarchical":
        tau2 = cfg.tau ** 2
        denom = tau2 + sigma2
        if denom == 0:
            raise DegenerateError("tau and sigma are both zero")
        shrunk = (tau2 / denom) * x
        dev = np.einsum("ij,ij->i", shrunk, shrunk)
        resid = shrunk - x
        stein = -p * sigma2 + np.einsum("ij,ij->i", resid, resid) + 2.0 * sigma2 * p * tau2 / denom
        closed = (sigma2 / denom) * (np.einsum("ij,ij->i", x, x) + p * (tau2 - sigma2))
        entry = _summary(sq_err(shrunk), n)
        entry.update({
            "closed_form": p * sigma2 * tau2 / denom,
            "empirical_mse_vs_prior": float(dev.mean()),
            "closed_form_vs_prior": p * tau2 ** 2 / denom,
            "ci95_vs_prior": float(1.96 * dev.std(ddof=1) / np.sqrt(n)),
            "sure_mean": float(closed.mean()),
            "stein_sure_mean": float(stein.mean()),
        })
        estimators["map"] = entry
    return report


def risk_bench_grid(dims: Sequence[int], sigmas: Sequence[float], taus: Sequence[float],
                    theta_norms: Sequence[float], trials: int, seed: int) -> List[Dict]:
    """
    Every (P, σ, τ) point in hierarchical mode and every (P, σ, ‖θ‖) point in
    fixed-θ mode, each on its own derived random stream
    """
    reports = []
    for p in dims:
        for sigma in sigmas:
            for tau in taus:
                cfg = RiskBenchConfig(dim=int(p), sigma=float(sigma), tau=float(tau), trials=trials)
                reports.append(risk_bench(cfg, derive_rng(seed, "bench", "tau", len(reports))))
            for norm in theta_norms:
                cfg = RiskBenchConfig(dim=int(p), sigma=float(sigma), theta_norm=float(norm), trials=trials)
                reports.append(risk_bench(cfg, derive_rng(seed, "bench", "theta", len(reports))))
    logger.info("Risk bench finished: %d grid points, %d trials each", len(reports), trials)
    return reports
