"""
Contrastive Module
Instance-level and cluster-level contrastive losses, the marginal
regularizer and the cosine / Euclidean identity check
"""

from dataclasses import dataclass

import numpy as np

import config
from modules.errors import ConfigError, DegenerateError, ShapeError
from modules.ndmath import (
    add, concat_rows, div, log, logsumexp_rows, matmul, mean, mul, normalize_rows,
    pick, row_norms, sub, total, transpose, value,
)


@dataclass
class ContrastConfig:
    """
    Attributes:
        tau_i (float): Instance temperature
        tau_c (float): Cluster temperature
        exclude_self (bool): Drop the anchor's self-pair from the denominator
        entropy_eps (float): Clamp for log P in the regularizer
        strict_paper_sign (bool): Subtract Σ P log P instead of adding it
    """
    tau_i: float = config.DEFAULT_TAU_I
    tau_c: float = config.DEFAULT_TAU_C
    exclude_self: bool = True
    entropy_eps: float = config.DEFAULT_ENTROPY_EPS
    strict_paper_sign: bool = False

    def validate(self):
        if self.tau_i <= 0 or self.tau_c <= 0:
            raise ConfigError(f"temperatures must be positive, got tau_i={self.tau_i}, tau_c={self.tau_c}")
        if not 0 < self.entropy_eps <= 1e-6:
            raise ConfigError(f"entropy_eps must be in (0, 1e-6], got {self.entropy_eps}")


def cos_sim(u, v) -> float:
    """uᵀv / (‖u‖‖v‖)"""
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if u.shape != v.shape:
        raise ShapeError(f"vectors have {u.size} and {v.size} components")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DegenerateError("cosine similarity of a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def nt_xent(emb_a, emb_b, temperature: float, exclude_self: bool = True):
    """
    Normalized temperature-scaled cross entropy over 2n anchors

    Row i of emb_a and row i of emb_b form the positive pair; every other row
    of either view is a negative.

    Args:
        emb_a: n × d embeddings of view a (array or Var)
        emb_b: n × d embeddings of view b
        temperature (float): Logit scale
        exclude_self (bool): Leave the anchor out of its own denominator

    Returns:
        Mean loss over anchors
    """
    va, vb = value(emb_a), value(emb_b)
    if va.shape != vb.shape or va.ndim != 2:
        raise ShapeError(f"views have shapes {va.shape} and {vb.shape}")
    n = va.shape[0]
    if n < 1:
        raise DegenerateError("contrastive loss over an empty batch")
    for view, rows in (("a", va), ("b", vb)):
        zero = np.flatnonzero(row_norms(rows) == 0)
        if zero.size:
            raise DegenerateError(f"row {int(zero[0])} of view {view} has zero norm")
    unit = normalize_rows(concat_rows([emb_a, emb_b]))
    logits = div(matmul(unit, transpose(unit)), temperature)
    anchors = np.arange(2 * n)
    mask = np.ones((2 * n, 2 * n), dtype=bool)
    if exclude_self:
        mask[anchors, anchors] = False
    positives = pick(logits, anchors, (anchors + n) % (2 * n))
    return mean(sub(logsumexp_rows(logits, mask), positives))


def instance_loss(z_a, z_b, cfg: ContrastConfig):
    """Contrast rows of Z_a against rows of Z_b at temperature tau_i"""
    return nt_xent(z_a, z_b, cfg.tau_i, cfg.exclude_self)


def marginal_entropy_term(y, eps: float = config.DEFAULT_ENTROPY_EPS):
    """
    Σ_k P_k log P_k with P_k = column mass of Y over its total mass

    Lies in [−log K, 0]; 0·log 0 evaluates to 0.
    """
    mass = total(y, axis=0, keepdims=True)
    marginal = div(mass, total(mass))
    return total(mul(marginal, log(marginal, eps=eps)))


def _check_stochastic(name: str, y: np.ndarray):
    if y.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {y.shape}")
    if np.any(y < 0) or np.any(np.abs(y.sum(axis=1) - 1.0) > 1e-9):
        raise DegenerateError(f"{name} rows are not probability vectors")


def cluster_loss(y_a, y_b, cfg: ContrastConfig):
    """
    Column-wise contrast of the cluster-probability matrices plus the
    marginal regularizer R = Σ P log P (view a) + Σ P log P (view b)

    R is added, so minimization pushes cluster marginals toward uniform;
    strict_paper_sign subtracts it instead.

    Args:
        y_a: N × K row-stochastic matrix for view a
        y_b: N × K row-stochastic matrix for view b
        cfg (ContrastConfig): Temperatures and sign convention

    Returns:
        Scalar loss
    """
    va, vb = value(y_a), value(y_b)
    _check_stochastic("Y_a", va)
    _check_stochastic("Y_b", vb)
    if va.shape != vb.shape:
        raise ShapeError(f"Y_a {va.shape} and Y_b {vb.shape} differ")
    if va.shape[1] < 2:
        raise ShapeError(f"cluster loss needs K ≥ 2, got {va.shape[1]}")
    try:
        pair = nt_xent(transpose(y_a), transpose(y_b), cfg.tau_c, cfg.exclude_self)
    except DegenerateError as err:
        raise DegenerateError(f"empty cluster column: {err}") from err
    reg = add(marginal_entropy_term(y_a, cfg.entropy_eps), marginal_entropy_term(y_b, cfg.entropy_eps))
    return sub(pair, reg) if cfg.strict_paper_sign else add(pair, reg)


def cosine_euclid_identity_check(z_i, z_j) -> float:
    """|s(z_i, z_j) − (‖z_i‖² + ‖z_j‖² − ‖z_i − z_j‖²) / (2‖z_i‖‖z_j‖)|"""
    z_i = np.asarray(z_i, dtype=np.float64).reshape(-1)
    z_j = np.asarray(z_j, dtype=np.float64).reshape(-1)
    ni, nj = np.linalg.norm(z_i), np.linalg.norm(z_j)
    diff = z_i - z_j
    via_distance = (ni * ni + nj * nj - diff @ diff) / (2.0 * ni * nj)
    return float(abs(cos_sim(z_i, z_j) - via_distance))


def total_loss(l_sure, l_ins, l_clu, alpha: float = config.DEFAULT_ALPHA, beta: float = config.DEFAULT_BETA):
    """l_sure + α·l_ins + β·l_clu"""
    if alpha < 0 or beta < 0:
        raise ConfigError(f"loss weights must be non-negative, got alpha={alpha}, beta={beta}")
    return add(add(l_sure, mul(alpha, l_ins)), mul(beta, l_clu))
