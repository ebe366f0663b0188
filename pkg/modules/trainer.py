"""
Trainer Module
Training loop (augment → encode → losses → optimize), epoch-level statistics
refresh, minimum-L_SURE checkpointing, and the ablation / robustness drivers
"""

import copy
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats as scipy_stats

import config
from modules.augment import AugmentConfig, augment_pair
from modules.clusterer import FINAL_RULES, KmeansConfig, assign_final, kmeans
from modules.contrastive import ContrastConfig, cluster_loss, instance_loss, total_loss
from modules.dataio import ExpressionMatrix, downsample
from modules.encoder import (
    EncoderPair, Heads, ModelSpec, forward_features, init_encoder_pair, init_heads,
    momentum_update, project_cluster, project_instance, save_checkpoint,
)
from modules.errors import ConfigError, DegenerateError, ShrinkCLError, TrainingError
from modules.metrics import CosineGap, ari, cosine_gap, nmi
from modules.ndmath import Tape, derive_rng, grad, mul, row_norms, take_rows, value
from modules.shrinkage import ClusterStats, cluster_stats, sure_loss

logger = logging.getLogger(__name__)


# ============ Configuration ============

def parse_loss_set(spec) -> Tuple[str, ...]:
    """
    "sure+ins+clu", "ins,sure" or an iterable of names → canonical tuple

    The canonical order follows config.LOSS_TERMS; an empty set is invalid.
    """
    if isinstance(spec, str):
        names = [s.strip().lower() for s in spec.replace(",", "+").split("+") if s.strip()]
    else:
        names = [str(s).strip().lower() for s in spec]
    unknown = sorted(set(names) - set(config.LOSS_TERMS))
    if unknown:
        raise ConfigError(f"unknown loss terms {unknown}; choose from {list(config.LOSS_TERMS)}")
    terms = tuple(t for t in config.LOSS_TERMS if t in names)
    if not terms:
        raise ConfigError("a loss set needs at least one of " + ", ".join(config.LOSS_TERMS))
    return terms


def loss_set_name(terms: Sequence[str]) -> str:
    return "+".join(terms)


@dataclass
class TrainConfig:
    n_clusters: int
    epochs: int = config.DEFAULT_EPOCHS
    batch_size: int = config.DEFAULT_BATCH_SIZE
    learning_rate: float = config.DEFAULT_LEARNING_RATE
    adam_beta1: float = config.DEFAULT_ADAM_BETA1
    adam_beta2: float = config.DEFAULT_ADAM_BETA2
    adam_eps: float = config.DEFAULT_ADAM_EPS
    alpha: float = config.DEFAULT_ALPHA
    beta: float = config.DEFAULT_BETA
    loss_terms: Tuple[str, ...] = config.LOSS_TERMS
    model: ModelSpec = field(default_factory=ModelSpec)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    contrast: ContrastConfig = field(default_factory=ContrastConfig)
    kmeans_max_iters: int = config.DEFAULT_KMEANS_MAX_ITERS
    kmeans_tol: float = config.DEFAULT_KMEANS_TOL
    kmeans_n_init: int = config.DEFAULT_KMEANS_N_INIT
    kmeans_init: str = config.DEFAULT_KMEANS_INIT
    final_rule: str = "argmax"
    seed: int = config.DEFAULT_SEED
    eval_every: int = config.DEFAULT_EVAL_EVERY

    def __post_init__(self):
        self.loss_terms = parse_loss_set(self.loss_terms)

    @property
    def kmeans(self) -> KmeansConfig:
        return KmeansConfig(K=self.n_clusters, max_iters=self.kmeans_max_iters, tol=self.kmeans_tol,
                            n_init=self.kmeans_n_init, init=self.kmeans_init)

    @property
    def sure_weight(self) -> float:
        return 1.0 if "sure" in self.loss_terms else 0.0

    @property
    def effective_alpha(self) -> float:
        return self.alpha if "ins" in self.loss_terms else 0.0

    @property
    def effective_beta(self) -> float:
        return self.beta if "clu" in self.loss_terms else 0.0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be ≥ 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be ≥ 2, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1) or self.adam_eps <= 0:
            raise ConfigError("Adam decays must lie in [0, 1) and eps must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"loss weights must be non-negative, got alpha={self.alpha}, beta={self.beta}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be ≥ 1, got {self.eval_every}")
        if self.final_rule not in FINAL_RULES:
            raise ConfigError(f"unknown final rule {self.final_rule!r}; choose from {FINAL_RULES}")
        self.model.validate()
        self.augment.validate()
        self.contrast.validate()
        self.kmeans.validate()

    def to_dict(self) -> Dict:
        doc = asdict(self)
        doc["loss_terms"] = list(self.loss_terms)
        return doc

    @classmethod
    def from_dict(cls, doc: Dict) -> "TrainConfig":
        doc = dict(doc)
        try:
            doc["model"] = ModelSpec(**doc.get("model", {}))
            doc["augment"] = AugmentConfig(**doc.get("augment", {}))
            doc["contrast"] = ContrastConfig(**doc.get("contrast", {}))
            return cls(**doc)
        except TypeError as err:
            raise ConfigError(f"invalid training configuration: {err}") from err


# ============ Records ============

@dataclass
class LossBreakdown:
    """total = sure_weight·l_sure + alpha·l_ins + beta·l_clu"""
    epoch: int
    step: Optional[int]
    l_sure: float
    l_ins: float
    l_clu: float
    total: float
    sure_weight: float = 1.0
    alpha: float = config.DEFAULT_ALPHA
    beta: float = config.DEFAULT_BETA

    def recombined(self) -> float:
        return self.sure_weight * self.l_sure + self.alpha * self.l_ins + self.beta * self.l_clu


@dataclass
class Evaluation:
    epoch: int
    cosine: CosineGap
    scores: Dict[str, Dict[str, float]]
    predictions: Dict[str, np.ndarray]

    def to_dict(self) -> Dict:
        doc = {"epoch": self.epoch, "cosine": self.cosine.to_dict()}
        doc.update(self.scores)
        return doc


@dataclass
class TrainReport:
    config: Dict
    n_cells: int
    n_genes: int
    epochs: List[Dict] = field(default_factory=list)
    steps: List[LossBreakdown] = field(default_factory=list)
    evals: List[Evaluation] = field(default_factory=list)
    best_epoch: int = 0
    best_l_sure: Optional[float] = None
    best_drift: Optional[float] = None
    checkpoint_id: Optional[str] = None
    final: Optional[Evaluation] = None
    wall_clock_seconds: float = 0.0

    def gap_summary(self) -> Dict[str, float]:
        """Mean and variance of the cosine gap across evaluations"""
        gaps = np.array([e.cosine.gap for e in self.evals])
        if gaps.size == 0:
            return {"mean": 0.0, "var": 0.0}
        return {"mean": float(gaps.mean()), "var": float(gaps.var())}

    def to_dict(self) -> Dict:
        """JSON form; wall-clock time is left out so reruns are byte-identical"""
        return {
            "config": self.config,
            "n_cells": self.n_cells,
            "n_genes": self.n_genes,
            "epochs": self.epochs,
            "evals": [e.to_dict() for e in self.evals],
            "cos_gap_summary": self.gap_summary(),
            "best": {"epoch": self.best_epoch, "l_sure_monitored": self.best_l_sure,
                     "sure_drift": self.best_drift, "checkpoint_id": self.checkpoint_id},
            "final": None if self.final is None else self.final.to_dict(),
        }

    def curves(self) -> pd.DataFrame:
        """One row per epoch: losses plus metrics at evaluation epochs"""
        frame = pd.DataFrame([{k: e[k] for k in ("epoch", "l_sure", "l_ins", "l_clu", "total")}
                              for e in self.epochs])
        evals = []
        for ev in self.evals:
            row = {"epoch": ev.epoch, "cos_gap": ev.cosine.gap}
            primary = ev.scores.get(self.config.get("final_rule", "argmax"))
            if primary:
                row.update({"ari": primary["ari"], "nmi": primary["nmi"]})
            evals.append(row)
        if evals:
            frame = frame.merge(pd.DataFrame(evals), on="epoch", how="left")
        return frame


# ============ Optimizer ============

class Adam:
    """Adaptive moment estimation, updating parameter arrays in place"""

    def __init__(self, params: Sequence[np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def trainable_parameters(pair: EncoderPair, heads: Heads) -> List[np.ndarray]:
    """θ_q and both heads; θ_k only moves through momentum_update"""
    return pair.query.parameters() + heads.instance.parameters() + heads.cluster.parameters()


# ============ Steps ============

def step_losses(pair: EncoderPair, heads: Heads, x_a: np.ndarray, x_b: np.ndarray,
                stats: Optional[ClusterStats], batch_labels: Optional[np.ndarray],
                cfg: TrainConfig, watched: Optional[List] = None):
    """
    Forward pass of one minibatch: returns (l_sure, l_ins, l_clu, total)

    With a tape, ``watched`` holds the Vars standing in for
    trainable_parameters(pair, heads) and every loss is recorded. View b
    goes through f_k as plain arrays, so no gradient reaches θ_k.
    """
    if watched is None:
        q_params = i_params = c_params = None
    else:
        nq = len(pair.query.parameters())
        ni = len(heads.instance.parameters())
        q_params, i_params, c_params = watched[:nq], watched[nq:nq + ni], watched[nq + ni:]

    h_a = forward_features(pair.query, x_a, q_params)
    h_b = forward_features(pair.key, x_b)
    z_a = project_instance(heads.instance, h_a, i_params)
    z_b = project_instance(heads.instance, h_b, i_params)
    y_a = project_cluster(heads.cluster, h_a, c_params)
    y_b = project_cluster(heads.cluster, h_b, c_params)

    l_sure = 0.0
    if stats is not None and batch_labels is not None:
        usable = np.flatnonzero(~stats.degenerate[batch_labels])
        if usable.size == batch_labels.size:
            l_sure = sure_loss(h_a, stats, batch_labels)
        elif usable.size:
            l_sure = sure_loss(take_rows(h_a, usable), stats, batch_labels[usable])
    keep = nonzero_pairs(z_a, z_b)
    if keep.size == value(z_a).shape[0]:
        l_ins = instance_loss(z_a, z_b, cfg.contrast)
    elif keep.size:
        l_ins = instance_loss(take_rows(z_a, keep), take_rows(z_b, keep), cfg.contrast)
    else:
        l_ins = 0.0
    l_clu = cluster_loss(y_a, y_b, cfg.contrast)
    total = total_loss(mul(cfg.sure_weight, l_sure), l_ins, l_clu, cfg.effective_alpha, cfg.effective_beta)
    return l_sure, l_ins, l_clu, total


def nonzero_pairs(z_a, z_b) -> np.ndarray:
    """
    Indices of rows whose embeddings are nonzero in both views

    A row with every ReLU of its head switched off embeds to the zero vector,
    which has no direction; such pairs are left out of the cosine losses.
    """
    norms_a, norms_b = row_norms(z_a), row_norms(z_b)
    keep = np.flatnonzero((norms_a > 0) & (norms_b > 0))
    if keep.size < norms_a.size:
        logger.warning("%d of %d rows embed to the zero vector and are left out of the cosine terms",
                       norms_a.size - keep.size, norms_a.size)
    return keep


def _scalar(v) -> float:
    return float(np.asarray(getattr(v, "value", v)).reshape(-1)[0])


def train_step(pair: EncoderPair, heads: Heads, opt: Adam, x_a: np.ndarray, x_b: np.ndarray,
               stats: ClusterStats, batch_labels: np.ndarray, cfg: TrainConfig,
               epoch: int, step: int) -> Tuple[EncoderPair, LossBreakdown]:
    """One optimizer step on θ_q and the heads, then the momentum update of θ_k"""
    params = trainable_parameters(pair, heads)
    tape = Tape()
    watched = [tape.watch(p) for p in params]
    l_sure, l_ins, l_clu, total = step_losses(pair, heads, x_a, x_b, stats, batch_labels, cfg, watched)
    opt.step(params, grad(total, watched))
    breakdown = LossBreakdown(epoch, step, _scalar(l_sure), _scalar(l_ins), _scalar(l_clu), _scalar(total),
                              cfg.sure_weight, cfg.effective_alpha, cfg.effective_beta)
    return momentum_update(pair), breakdown


def _sure_on_view(pair: EncoderPair, view: np.ndarray, stats: ClusterStats) -> float:
    return sure_drift(forward_features(pair.query, view), stats)[0]


def sure_drift(h, stats: ClusterStats) -> Tuple[float, Optional[float]]:
    """
    L_SURE of features against frozen statistics, raw and relative

    The relative drift is |L_SURE| divided by Σ_i s_k·P·σ²_k, the size of
    the loss's offset term over the same rows. It is zero when the features
    are the ones the statistics came from and does not change when features
    and statistics are rescaled together. Rows of degenerate clusters are
    skipped; with none left the drift is None.

    Args:
        h: N × P features, row i labeled stats.labels[i]
        stats (ClusterStats): Frozen statistics

    Returns:
        tuple: (l_sure, relative drift or None)
    """
    usable = np.flatnonzero(~stats.degenerate[stats.labels])
    if usable.size == 0:
        return 0.0, None
    labels = stats.labels[usable]
    l_sure = _scalar(sure_loss(np.asarray(h)[usable], stats, labels))
    scale = float(np.sum(stats.shrink_factors()[labels] * stats.dim * stats.sigma2_k[labels]))
    return l_sure, abs(l_sure) / scale


def _batches(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    batches = [order[i:i + batch_size] for i in range(0, order.size, batch_size)]
    if batches and batches[-1].size < 2:
        logger.debug("Dropping a final batch of %d sample", batches[-1].size)
        batches.pop()
    return batches


# ============ Evaluation ============

def eval_views(x: ExpressionMatrix, cfg: TrainConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed augmented views used for the cosine-gap diagnostic"""
    return augment_pair(x.values, cfg.augment, derive_rng(cfg.seed, "eval-views"))


def evaluate(pair: EncoderPair, heads: Heads, x: ExpressionMatrix, cfg: TrainConfig,
             epoch: int = 0, views: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Evaluation:
    """
    Score the current parameters on un-augmented inputs

    Both assignment rules are reported (argmax of the cluster head, k-means
    on f_q features); ARI and NMI need labels. The cosine gap compares
    instance embeddings of the fixed evaluation views, skipping rows that
    embed to the zero vector.
    """
    h = forward_features(pair.query, x.values)
    predictions = {
        "argmax": assign_final(project_cluster(heads.cluster, h), "argmax"),
        "kmeans": assign_final(h, "kmeans", cfg.kmeans, derive_rng(cfg.seed, "final-kmeans")),
    }
    view_a, view_b = views if views is not None else eval_views(x, cfg)
    z_a = project_instance(heads.instance, forward_features(pair.query, view_a))
    z_b = project_instance(heads.instance, forward_features(pair.query, view_b))
    keep = nonzero_pairs(z_a, z_b)
    if keep.size >= 2:
        gap = cosine_gap(z_a[keep], z_b[keep])
    else:
        gap = CosineGap(float("nan"), float("nan"), float("nan"))
    scores = {}
    if x.labels is not None:
        for rule, pred in predictions.items():
            scores[rule] = {
                "ari": ari(pred, x.labels),
                "nmi": nmi(pred, x.labels),
                "nmi_geometric": nmi(pred, x.labels, average_method="geometric"),
            }
    return Evaluation(epoch, gap, scores, predictions)


# ============ Training ============

def _snapshot(pair: EncoderPair, heads: Heads) -> Tuple[EncoderPair, Heads]:
    return (EncoderPair(pair.query.copy(), pair.key.copy(), pair.momentum),
            Heads(heads.instance.copy(), heads.cluster.copy()))


def train(x: ExpressionMatrix, cfg: TrainConfig, checkpoint_path=None) -> Tuple[EncoderPair, Heads, TrainReport]:
    """
    Train the encoder pair and heads

    Each epoch: fresh augmented views; temporal labels and cluster
    statistics from f_q(view a) of the full dataset, frozen for the epoch;
    shuffled minibatch steps. From epoch 2 on, the updated features are
    scored against the previous epoch's statistics (see sure_drift); the
    epoch with the smallest relative drift is the checkpoint. A one-epoch
    run keeps its last parameters.

    Args:
        x (ExpressionMatrix): Preprocessed data
        cfg (TrainConfig): Training settings
        checkpoint_path: Where to write the best checkpoint, if anywhere

    Returns:
        tuple: (best EncoderPair, best Heads, TrainReport)
    """
    cfg.validate()
    x.check_shape()
    n, g = x.values.shape
    if cfg.n_clusters > n:
        raise ConfigError(f"n_clusters ({cfg.n_clusters}) exceeds the number of cells ({n})")

    started = time.perf_counter()
    init_rng = derive_rng(cfg.seed, "init")
    pair = init_encoder_pair(cfg.model.encoder_spec(g), cfg.model.momentum, init_rng)
    heads = init_heads(cfg.model, cfg.n_clusters, init_rng)
    opt = Adam(trainable_parameters(pair, heads), cfg.learning_rate,
               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    views_eval = eval_views(x, cfg)
    report = TrainReport(config=cfg.to_dict(), n_cells=n, n_genes=g)
    best = _snapshot(pair, heads)
    prev_stats: Optional[ClusterStats] = None

    logger.info("Training on %d cells × %d genes, K=%d, losses %s, %d epochs",
                n, g, cfg.n_clusters, loss_set_name(cfg.loss_terms), cfg.epochs)

    for epoch in range(1, cfg.epochs + 1):
        step = None
        try:
            view_a, view_b = augment_pair(x.values, cfg.augment, derive_rng(cfg.seed, "augment", epoch))
            h_full = forward_features(pair.query, view_a)
            temporal = kmeans(h_full, cfg.kmeans, derive_rng(cfg.seed, "kmeans", epoch))
            stats = cluster_stats(h_full, temporal.labels, cfg.n_clusters)
            fresh = _sure_on_view(pair, view_a, stats)

            order = derive_rng(cfg.seed, "shuffle", epoch).permutation(n)
            records = []
            for step, idx in enumerate(_batches(order, cfg.batch_size)):
                pair, breakdown = train_step(pair, heads, opt, view_a[idx], view_b[idx],
                                             stats, stats.labels[idx], cfg, epoch, step)
                records.append(breakdown)
            step = None
            # this epoch's trained features against the previous epoch's statistics
            monitored, drift = (None, None) if prev_stats is None else \
                sure_drift(forward_features(pair.query, view_a), prev_stats)

            means = {k: float(np.mean([getattr(r, k) for r in records])) for k in ("l_sure", "l_ins", "l_clu")}
            total = cfg.sure_weight * means["l_sure"] + cfg.effective_alpha * means["l_ins"] \
                + cfg.effective_beta * means["l_clu"]
            report.steps.extend(records)
            report.epochs.append({
                "epoch": epoch, **means, "total": total, "n_steps": len(records),
                "l_sure_fresh": fresh, "l_sure_monitored": monitored, "sure_drift": drift,
                "degenerate_clusters": int(stats.degenerate.sum()),
            })
            logger.info("Epoch %d/%d: L_SURE %.4f, L_INS %.4f, L_CLU %.4f, total %.4f, SURE drift %s",
                        epoch, cfg.epochs, means["l_sure"], means["l_ins"], means["l_clu"], total,
                        "–" if drift is None else f"{drift:.6f}")

            if drift is not None and (report.best_drift is None or drift < report.best_drift):
                best = _snapshot(pair, heads)
                _mark_best(report, epoch, monitored, drift)
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, *best, meta=_checkpoint_meta(cfg, report, x))
                logger.info("New best checkpoint at epoch %d (SURE drift %.6f)", epoch, drift)
            prev_stats = stats

            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                ev = evaluate(pair, heads, x, cfg, epoch, views_eval)
                report.evals.append(ev)
                _log_eval(ev, cfg.final_rule)
        except TrainingError:
            raise
        except ShrinkCLError as err:
            raise TrainingError(str(err), epoch, step) from err

    if report.best_epoch == 0:
        # a single epoch has no previous statistics to compare against
        best = _snapshot(pair, heads)
        _mark_best(report, cfg.epochs, None, None)
        if checkpoint_path is not None:
            save_checkpoint(checkpoint_path, *best, meta=_checkpoint_meta(cfg, report, x))
    report.final = evaluate(*best, x, cfg, report.best_epoch, views_eval)
    report.wall_clock_seconds = time.perf_counter() - started
    logger.info("Training finished in %.1fs; best epoch %d", report.wall_clock_seconds, report.best_epoch)
    return best[0], best[1], report


def _mark_best(report: TrainReport, epoch: int, l_sure: Optional[float], drift: Optional[float]):
    report.best_epoch = epoch
    report.best_l_sure = l_sure
    report.best_drift = drift
    report.checkpoint_id = f"epoch-{epoch:04d}"


def _checkpoint_meta(cfg: TrainConfig, report: TrainReport, x: ExpressionMatrix) -> Dict:
    return {"train_config": cfg.to_dict(), "epoch": report.best_epoch,
            "l_sure_monitored": report.best_l_sure, "sure_drift": report.best_drift,
            "gene_ids": list(x.gene_ids)}


def _log_eval(ev: Evaluation, rule: str):
    primary = ev.scores.get(rule)
    if primary:
        logger.info("Eval epoch %d: ARI %.4f, NMI %.4f, cosine gap %.4f",
                    ev.epoch, primary["ari"], primary["nmi"], ev.cosine.gap)
    else:
        logger.info("Eval epoch %d: cosine gap %.4f", ev.epoch, ev.cosine.gap)


# ============ Experiments ============

def _with_seed(cfg: TrainConfig, seed: int, **changes) -> TrainConfig:
    new = copy.deepcopy(cfg)
    new.seed = int(seed)
    for key, val in changes.items():
        setattr(new, key, val)
    return new


def _final_scores(report: TrainReport, rule: str) -> Dict[str, float]:
    scores = report.final.scores.get(rule, {}) if report.final else {}
    return {"nmi": scores.get("nmi", float("nan")), "ari": scores.get("ari", float("nan"))}


def ablate(x: ExpressionMatrix, cfg: TrainConfig, variants: Iterable, seeds: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """
    Train every loss combination with identical seeds

    Args:
        x (ExpressionMatrix): Labeled, preprocessed data
        cfg (TrainConfig): Base configuration
        variants: Loss sets, e.g. ["ins", "sure+ins", ("sure", "ins", "clu")]
        seeds: Seeds shared by all variants; defaults to [cfg.seed]

    Returns:
        pd.DataFrame: One row per (variant, seed) with NMI, ARI and cosine-gap mean/variance
    """
    parsed = [parse_loss_set(v) for v in variants]
    if not parsed:
        raise ConfigError("ablation needs at least one variant")
    seeds = [cfg.seed] if seeds is None else list(seeds)
    rows = []
    for terms in parsed:
        for seed in seeds:
            _, _, report = train(x, _with_seed(cfg, seed, loss_terms=terms))
            summary = report.gap_summary()
            rows.append({"variant": loss_set_name(terms), "seed": int(seed),
                         **_final_scores(report, cfg.final_rule),
                         "cos_gap_mean": summary["mean"], "cos_gap_var": summary["var"],
                         "best_epoch": report.best_epoch})
    return pd.DataFrame(rows)


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> Dict[str, float]:
    """Two-sided paired t-test of a against b"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise DegenerateError("a paired t-test needs at least two pairs")
    diff = a - b
    if np.all(diff == diff[0]):
        t, p = (0.0, 1.0) if diff[0] == 0 else (float(np.copysign(np.inf, diff[0])), 0.0)
    else:
        result = scipy_stats.ttest_rel(a, b)
        t, p = float(result.statistic), float(result.pvalue)
    return {"t": t, "p_value": p, "n": int(a.size), "mean_difference": float(diff.mean())}


def noise_toggle_experiment(x: ExpressionMatrix, cfg: TrainConfig, dataset_name: str = "dataset",
                            seeds: Optional[Sequence[int]] = None,
                            noise_arms: Tuple[bool, bool] = (True, False)) -> Dict:
    """
    Paired runs differing only in augment.noise_enabled

    Returns:
        dict: {dataset_name: {"with", "without", "difference", "per_seed", "t_test"?}}
    """
    seeds = [cfg.seed] if seeds is None else list(seeds)
    arms = {}
    for label, enabled in zip(("with", "without"), noise_arms):
        values = []
        for seed in seeds:
            arm_cfg = _with_seed(cfg, seed)
            arm_cfg.augment.noise_enabled = bool(enabled)
            _, _, report = train(x, arm_cfg)
            values.append(_final_scores(report, cfg.final_rule)["nmi"])
        arms[label] = values
    entry = {
        "with": float(np.mean(arms["with"])),
        "without": float(np.mean(arms["without"])),
        "difference": float(np.mean(np.subtract(arms["with"], arms["without"]))),
        "per_seed": [{"seed": int(s), "with": w, "without": wo}
                     for s, w, wo in zip(seeds, arms["with"], arms["without"])],
    }
    if len(seeds) >= 2:
        entry["t_test"] = paired_t_test(arms["with"], arms["without"])
    return {dataset_name: entry}


def downsample_experiment(x: ExpressionMatrix, cfg: TrainConfig,
                          rates: Sequence[float] = tuple(config.DEFAULT_DOWNSAMPLE_RATES),
                          mode: str = "stratified", seeds: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """
    Train on the full data and on downsampled copies for every (rate, seed)

    Returns:
        pd.DataFrame: rate, seed, n_cells, nmi, ari, nmi_full, ari_full, delta_nmi
    """
    seeds = [cfg.seed] if seeds is None else list(seeds)
    rows = []
    for seed in seeds:
        run_cfg = _with_seed(cfg, seed)
        _, _, full = train(x, run_cfg)
        base = _final_scores(full, cfg.final_rule)
        rows.append({"rate": 0.0, "seed": int(seed), "n_cells": x.n_cells, **base,
                     "nmi_full": base["nmi"], "ari_full": base["ari"], "delta_nmi": 0.0})
        for rate in rates:
            subset = downsample(x, float(rate), mode, derive_rng(seed, "downsample", str(rate)))
            _, _, report = train(subset, run_cfg)
            scores = _final_scores(report, cfg.final_rule)
            rows.append({"rate": float(rate), "seed": int(seed), "n_cells": subset.n_cells, **scores,
                         "nmi_full": base["nmi"], "ari_full": base["ari"],
                         "delta_nmi": base["nmi"] - scores["nmi"]})
            logger.info("Downsampling %s at %.0f%% (seed %d): NMI %.4f (full %.4f)",
                        mode, 100 * rate, seed, scores["nmi"], base["nmi"])
    return pd.DataFrame(rows)


def write_outputs(out_dir, pair: EncoderPair, heads: Heads, report: TrainReport,
                  x: ExpressionMatrix, cfg: TrainConfig, extra_meta: Optional[Dict] = None) -> Dict[str, Path]:
    """checkpoint.json, report.json, curves.csv and assignments.csv"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {name: out_dir / config.OUTPUT_FILES[name]
             for name in ("checkpoint", "report", "curves", "assignments")}
    meta = _checkpoint_meta(cfg, report, x)
    meta.update(extra_meta or {})
    save_checkpoint(paths["checkpoint"], pair, heads, meta=meta)
    paths["report"].write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    report.curves().to_csv(paths["curves"], index=False, lineterminator="\n")
    final = report.final
    assignments = pd.DataFrame({"cell_id": x.cell_ids,
                                "cluster": final.predictions[cfg.final_rule],
                                "cluster_argmax": final.predictions["argmax"],
                                "cluster_kmeans": final.predictions["kmeans"]})
    if x.labels is not None:
        assignments["label"] = x.labels
    assignments.to_csv(paths["assignments"], index=False, lineterminator="\n")
    return paths
