"""
Command-line entry point for shrinkage contrastive clustering

Usage:
    python cli.py synth --cells 100 --genes 50 --clusters 3 --seed 1 --out data/
    python cli.py train --data data/matrix.csv --labels data/labels.csv --out run/
    python cli.py eval --checkpoint run/checkpoint.json --data data/matrix.csv --labels data/labels.csv
    python cli.py bench-estimators --trials 10000

Settings are resolved as flags > --config JSON file > defaults.
SHRINKCL_THREADS caps BLAS/OpenMP worker threads.
"""

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path
from typing import Dict, List, Optional

from threadpoolctl import threadpool_limits

import config
from modules.dataio import (
    ExpressionMatrix, SynthConfig, downsample, load_csv, load_labels_csv, load_matrix_market,
    preprocess, save_dataset, synth,
)
from modules.encoder import load_checkpoint
from modules.errors import CheckpointError, ConfigError, DataFormatError, ShrinkCLError
from modules.ndmath import derive_rng, make_rng
from modules.settings import CliConfig
from modules.shrinkage import risk_bench_grid
from modules.trainer import (
    TrainConfig, ablate, downsample_experiment, evaluate, noise_toggle_experiment, paired_t_test,
    train, write_outputs,
)
from modules.utils import bench_table

logger = logging.getLogger("shrinkcl")

VALIDATION_ERRORS = (ConfigError, DataFormatError, CheckpointError)


# ============ Argument helpers ============

def _floats(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration (flags override it)")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _add_data(p: argparse.ArgumentParser):
    g = p.add_argument_group("data")
    g.add_argument("--data", help="matrix file (.csv/.tsv, or .mtx with --format mtx)")
    g.add_argument("--labels", help="labels file (cell_id,label CSV or one label per line for mtx)")
    g.add_argument("--format", choices=["csv", "mtx"])
    g.add_argument("--genes", help="gene id file for --format mtx")
    g.add_argument("--cells", help="cell id file for --format mtx")
    g.add_argument("--genes-by-cells", action="store_const", const=True,
                   help="the .mtx rows are genes (10x layout)")
    g = p.add_argument_group("preprocessing")
    g.add_argument("--scrna-recipe", action="store_true",
                   help="median-library normalization, log1p, top-variance genes, z-score")
    g.add_argument("--n-top-genes", type=int)
    g.add_argument("--no-standardize", dest="standardize", action="store_const", const=False)


def _add_training(p: argparse.ArgumentParser):
    g = p.add_argument_group("training")
    g.add_argument("--clusters", type=int, help="K (defaults to the number of label classes)")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--lr", type=float, dest="learning_rate")
    g.add_argument("--eval-every", type=int)
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--tau-i", type=float)
    g.add_argument("--tau-c", type=float)
    g.add_argument("--loss-set", help="e.g. sure+ins+clu, ins, sure+ins")
    g.add_argument("--include-self", dest="exclude_self", action="store_const", const=False,
                   help="keep the anchor's self-pair in the contrastive denominator")
    g.add_argument("--strict-paper-sign", action="store_const", const=True,
                   help="subtract the marginal regularizer instead of adding it")
    g.add_argument("--momentum", type=float)
    g.add_argument("--feature-dim", type=int)
    g.add_argument("--mask-fraction", type=float)
    g.add_argument("--noise-std", type=float)
    g.add_argument("--no-noise", dest="noise_enabled", action="store_const", const=False)
    g.add_argument("--final-rule", choices=["argmax", "kmeans"])
    g.add_argument("--kmeans-n-init", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinkcl", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic clustered dataset")
    _add_common(p)
    p.add_argument("--cells", type=int, default=config.DEFAULT_SYNTH_CELLS)
    p.add_argument("--genes", type=int, default=config.DEFAULT_SYNTH_GENES)
    p.add_argument("--clusters", type=int, default=config.DEFAULT_SYNTH_CLUSTERS)
    p.add_argument("--centroid-scale", type=float, default=config.DEFAULT_CENTROID_SCALE)
    p.add_argument("--within-std", type=float, default=config.DEFAULT_WITHIN_STD)
    p.add_argument("--dropout", type=float, default=config.DEFAULT_DROPOUT_RATE)
    p.add_argument("--weights", type=_floats, help="comma-separated cluster weights")
    p.add_argument("--out", required=True)

    p = sub.add_parser("preprocess", help="preprocess a matrix and write matrix.csv")
    _add_common(p)
    _add_data(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train and write checkpoint, report, curves, assignments")
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument("--out")

    p = sub.add_parser("eval", help="score a checkpoint on a dataset")
    _add_common(p)
    _add_data(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="also write the scores to this JSON file")

    p = sub.add_parser("bench-estimators", help="Monte-Carlo risk of MLE / James-Stein / MAP")
    _add_common(p)
    p.add_argument("--dims", type=_ints, default=list(config.DEFAULT_BENCH_DIMS))
    p.add_argument("--sigmas", type=_floats, default=list(config.DEFAULT_BENCH_SIGMAS))
    p.add_argument("--taus", type=_floats, default=list(config.DEFAULT_BENCH_TAUS))
    p.add_argument("--theta-norms", type=_floats, default=list(config.DEFAULT_BENCH_THETA_NORMS))
    p.add_argument("--trials", type=int, default=config.DEFAULT_BENCH_TRIALS)
    p.add_argument("--out", help="write the JSON report here")

    p = sub.add_parser("ablate", help="train several loss combinations with shared seeds")
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument("--variants", nargs="+", default=["ins", "sure+ins", "ins+clu", "sure+ins+clu"])
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--out")

    p = sub.add_parser("downsample", help="write a downsampled copy of a dataset")
    _add_common(p)
    _add_data(p)
    p.add_argument("--rate", type=float, required=True)
    p.add_argument("--mode", choices=["random", "stratified"], default="stratified")
    p.add_argument("--out", required=True)

    p = sub.add_parser("robustness", help="train on downsampled copies and compare NMI")
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument("--rates", type=_floats, default=list(config.DEFAULT_DOWNSAMPLE_RATES))
    p.add_argument("--mode", choices=["random", "stratified"], default="stratified")
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--out")

    p = sub.add_parser("noise-toggle", help="paired runs with and without augmentation noise")
    _add_common(p)
    _add_data(p)
    _add_training(p)
    p.add_argument("--seeds", type=_ints)
    p.add_argument("--dataset-name", default="dataset")
    p.add_argument("--out")
    return parser


# ============ Config resolution ============

def resolve_config(args: argparse.Namespace, base: Optional[CliConfig] = None) -> CliConfig:
    """flags > config file (or ``base``) > defaults"""
    if getattr(args, "config", None):
        cfg = CliConfig.load(args.config)
    else:
        cfg = base if base is not None else CliConfig()
    get = lambda name: getattr(args, name, None)  # noqa: E731
    overrides: Dict[str, Dict] = {
        "data": {"matrix": get("data"), "labels": get("labels"), "format": get("format"),
                 "genes": get("genes"), "cells": get("cells"), "genes_by_cells": get("genes_by_cells")},
        "preprocess": {"n_top_genes": get("n_top_genes"), "standardize": get("standardize")},
        "augment": {"mask_fraction": get("mask_fraction"), "noise_std": get("noise_std"),
                    "noise_enabled": get("noise_enabled")},
        "model": {"momentum": get("momentum"), "feature_dim": get("feature_dim")},
        "losses": {"loss_set": get("loss_set"), "alpha": get("alpha"), "beta": get("beta"),
                   "tau_i": get("tau_i"), "tau_c": get("tau_c"), "exclude_self": get("exclude_self"),
                   "strict_paper_sign": get("strict_paper_sign")},
        "kmeans": {"final_rule": get("final_rule"), "n_init": get("kmeans_n_init")},
        "train": {"epochs": get("epochs"), "batch_size": get("batch_size"),
                  "learning_rate": get("learning_rate"), "eval_every": get("eval_every"),
                  "seed": get("seed")},
        "output": {"dir": get("out")},
    }
    if args.command in ("train", "ablate", "robustness", "noise-toggle"):
        overrides["kmeans"]["n_clusters"] = get("clusters")
    if get("scrna_recipe"):
        explicit = get("standardize")
        overrides["preprocess"].update({"normalize_library_size": True, "log1p": True,
                                        "standardize": True if explicit is None else explicit})
        if cfg.preprocess.n_top_genes is None and get("n_top_genes") is None:
            overrides["preprocess"]["n_top_genes"] = config.DEFAULT_N_TOP_GENES
    return cfg.update(overrides)


def load_dataset(cfg: CliConfig) -> ExpressionMatrix:
    """Read the configured matrix and labels, then preprocess"""
    data, prep = cfg.data, cfg.preprocess
    if not data.matrix:
        raise ConfigError("no input matrix: pass --data or set data.matrix")
    counts_expected = prep.normalize_library_size or prep.log1p
    if data.format == "mtx":
        if not (data.genes and data.cells):
            raise ConfigError("--format mtx needs --genes and --cells")
        x = load_matrix_market(data.matrix, data.genes, data.cells, data.labels,
                               genes_by_cells=data.genes_by_cells, allow_negative=not counts_expected)
    elif data.format == "csv":
        x = load_csv(data.matrix, allow_negative=not counts_expected)
        if data.labels:
            labels = load_labels_csv(data.labels)
            x = ExpressionMatrix(x.values, x.cell_ids, x.gene_ids, labels)
    else:
        raise ConfigError(f"unknown data format {data.format!r}")
    x.check_shape()

    pcfg = cfg.preprocess_config()
    if pcfg.n_top_genes is not None and pcfg.n_top_genes > x.n_genes:
        logger.info("n_top_genes %d exceeds %d genes; keeping all genes", pcfg.n_top_genes, x.n_genes)
        pcfg.n_top_genes = x.n_genes
    return preprocess(x, pcfg)


def _train_config(cfg: CliConfig, x: ExpressionMatrix) -> TrainConfig:
    tcfg = cfg.train_config(x.n_classes)
    tcfg.validate()
    return tcfg


def _out_dir(cfg: CliConfig) -> Path:
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(doc, path: Optional[Path] = None):
    text = json.dumps(doc, indent=2)
    if path is not None:
        path.write_text(text, encoding="utf-8")
    print(text)


# ============ Commands ============

def cmd_synth(args) -> int:
    scfg = SynthConfig(n_cells=args.cells, n_genes=args.genes, n_clusters=args.clusters,
                       centroid_scale=args.centroid_scale, within_std=args.within_std,
                       dropout_rate=args.dropout, cluster_weights=args.weights)
    seed = config.DEFAULT_SEED if args.seed is None else args.seed
    x = synth(scfg, make_rng(seed))
    paths = save_dataset(x, args.out)
    print(f"synth: {x.n_cells} cells × {x.n_genes} genes, {scfg.n_clusters} clusters "
          f"(seed {seed}) → {', '.join(str(p) for p in paths.values())}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    paths = save_dataset(x, args.out)
    print(f"preprocess: {x.n_cells} cells × {x.n_genes} genes → {paths['matrix']}")
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    tcfg = _train_config(cfg, x)
    out = _out_dir(cfg)
    pair, heads, report = train(x, tcfg, checkpoint_path=out / config.OUTPUT_FILES["checkpoint"])
    paths = write_outputs(out, pair, heads, report, x, tcfg, extra_meta={"cli_config": cfg.to_dict()})
    final = report.final.to_dict()
    print(json.dumps({"best_epoch": report.best_epoch, "final": final}, indent=2))
    print(f"train: wrote {', '.join(p.name for p in paths.values())} to {out}")
    return 0


def cmd_eval(args) -> int:
    pair, heads, meta = load_checkpoint(args.checkpoint)
    base = CliConfig()
    if isinstance(meta.get("cli_config"), dict):
        # preprocessing must match training
        base.update({"preprocess": meta["cli_config"].get("preprocess", {})})
    cfg = resolve_config(args, base)
    x = load_dataset(cfg)
    try:
        tcfg = TrainConfig.from_dict(meta["train_config"])
    except KeyError as err:
        raise CheckpointError("checkpoint has no training configuration") from err
    if meta.get("gene_ids") and list(meta["gene_ids"]) != list(x.gene_ids):
        raise ConfigError("the dataset's genes differ from the checkpoint's training genes")
    ev = evaluate(pair, heads, x, tcfg, epoch=int(meta.get("epoch", 0)))
    if x.labels is None:
        logger.warning("No labels supplied: ARI and NMI are omitted, only the cosine gap is reported")
    _emit(ev.to_dict(), Path(args.out) if args.out else None)
    return 0


def cmd_bench_estimators(args) -> int:
    seed = config.DEFAULT_SEED if args.seed is None else args.seed
    doc = {"seed": seed, "grid": risk_bench_grid(args.dims, args.sigmas, args.taus,
                                                 args.theta_norms, args.trials, seed)}
    logger.info("\n%s", bench_table(doc).to_string(index=False))
    _emit(doc, Path(args.out) if args.out else None)
    return 0


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    tcfg = _train_config(cfg, x)
    table = ablate(x, tcfg, args.variants, args.seeds)
    out = _out_dir(cfg)
    table.to_csv(out / config.OUTPUT_FILES["ablation"], index=False, lineterminator="\n")
    summary = {"variants": table.groupby("variant", sort=False)[["nmi", "ari", "cos_gap_mean"]]
               .mean().reset_index().to_dict(orient="records")}
    full = "+".join(config.LOSS_TERMS)
    if table["seed"].nunique() >= 2 and full in set(table["variant"]):
        base = table[table["variant"] == full].sort_values("seed")
        summary["paired_vs_full"] = {}
        for variant, group in table.groupby("variant", sort=False):
            if variant == full:
                continue
            group = group.sort_values("seed")
            summary["paired_vs_full"][variant] = {
                "nmi": paired_t_test(base["nmi"].to_numpy(), group["nmi"].to_numpy()),
                "cos_gap_mean": paired_t_test(base["cos_gap_mean"].to_numpy(), group["cos_gap_mean"].to_numpy()),
            }
    _emit(summary, out / config.OUTPUT_FILES["ablation_summary"])
    return 0


def cmd_downsample(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    seed = cfg.train.seed
    subset = downsample(x, args.rate, args.mode, derive_rng(seed, "downsample", str(args.rate)))
    paths = save_dataset(subset, args.out)
    print(f"downsample: kept {subset.n_cells} of {x.n_cells} cells ({args.mode}) → {paths['matrix']}")
    return 0


def cmd_robustness(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    tcfg = _train_config(cfg, x)
    table = downsample_experiment(x, tcfg, args.rates, args.mode, args.seeds)
    out = _out_dir(cfg)
    table.to_csv(out / config.OUTPUT_FILES["robustness"], index=False, lineterminator="\n")
    print(table.groupby("rate")[["n_cells", "nmi", "ari", "delta_nmi"]].median().to_string())
    return 0


def cmd_noise_toggle(args) -> int:
    cfg = resolve_config(args)
    x = load_dataset(cfg)
    tcfg = _train_config(cfg, x)
    result = noise_toggle_experiment(x, tcfg, args.dataset_name, args.seeds)
    _emit(result, _out_dir(cfg) / config.OUTPUT_FILES["noise_toggle"])
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench-estimators": cmd_bench_estimators,
    "ablate": cmd_ablate,
    "downsample": cmd_downsample,
    "robustness": cmd_robustness,
    "noise-toggle": cmd_noise_toggle,
}


def _thread_limit():
    raw = os.environ.get(config.THREADS_ENV_VAR)
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"{config.THREADS_ENV_VAR} must be an integer, got {raw!r}")
    if n < 1:
        raise ConfigError(f"{config.THREADS_ENV_VAR} must be ≥ 1, got {n}")
    return threadpool_limits(limits=n)


def main(argv: Optional[List[str]] = None) -> int:
    """Returns 0 on success, 2 on validation errors, 1 on runtime errors"""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit():
            return COMMANDS[args.command](args)
    except VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (ShrinkCLError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
