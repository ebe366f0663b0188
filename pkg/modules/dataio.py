"""
Data I/O Module
Expression-matrix ingestion, preprocessing, synthetic data and downsampling
"""

import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.io

import config
from modules.errors import ConfigError, DataFormatError, DegenerateError
from modules.ndmath import gaussian_sample

logger = logging.getLogger(__name__)

LABEL_COLUMN = "label"
MATRIX_MARKET_HEADER = "%%matrixmarket matrix coordinate"


@dataclass
class ExpressionMatrix:
    """
    N cells × G genes plus optional ground-truth labels

    Attributes:
        values (np.ndarray): N × G float64 matrix
        cell_ids (List[str]): N cell identifiers
        gene_ids (List[str]): G gene identifiers
        labels (np.ndarray): Optional N non-negative ints
        label_names (List[str]): Original label strings when labels were text
    """
    values: np.ndarray
    cell_ids: List[str]
    gene_ids: List[str]
    labels: Optional[np.ndarray] = None
    label_names: Optional[List[str]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataFormatError(f"expression values must be 2-D, got shape {self.values.shape}")
        n, g = self.values.shape
        if len(self.cell_ids) != n:
            raise DataFormatError(f"{len(self.cell_ids)} cell ids for {n} rows")
        if len(self.gene_ids) != g:
            raise DataFormatError(f"{len(self.gene_ids)} gene ids for {g} columns")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (n,):
                raise DataFormatError(f"{self.labels.size} labels for {n} cells")
            if np.any(self.labels < 0):
                raise DataFormatError("labels must be non-negative")

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    @property
    def n_genes(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        if self.labels is None:
            return None
        return int(np.unique(self.labels).size)

    def check_shape(self):
        """Clustering needs N ≥ 2 and shrinkage theory needs G ≥ 3"""
        if self.n_cells < 2:
            raise DataFormatError(f"need at least 2 cells, got {self.n_cells}")
        if self.n_genes < 3:
            raise DataFormatError(f"need at least 3 genes, got {self.n_genes}")

    def subset(self, index: np.ndarray) -> "ExpressionMatrix":
        index = np.asarray(index, dtype=np.int64)
        return ExpressionMatrix(
            values=self.values[index],
            cell_ids=[self.cell_ids[i] for i in index],
            gene_ids=list(self.gene_ids),
            labels=None if self.labels is None else self.labels[index],
            label_names=self.label_names,
        )

    def to_frame(self) -> pd.DataFrame:
        """Matrix as a DataFrame indexed by cell id (labels excluded)"""
        frame = pd.DataFrame(self.values, columns=self.gene_ids)
        frame.insert(0, "cell_id", self.cell_ids)
        return frame


@dataclass
class PreprocessConfig:
    """Each step is optional; the default configuration is the identity"""
    normalize_library_size: bool = False
    log1p: bool = False
    n_top_genes: Optional[int] = None
    standardize: bool = False

    @classmethod
    def scrna_recipe(cls, n_top_genes: int = config.DEFAULT_N_TOP_GENES) -> "PreprocessConfig":
        """Median-library normalization → log1p → top-variance genes → z-score"""
        return cls(normalize_library_size=True, log1p=True,
                   n_top_genes=n_top_genes, standardize=True)

    def validate(self):
        if self.n_top_genes is not None and self.n_top_genes < 1:
            raise ConfigError(f"n_top_genes must be ≥ 1, got {self.n_top_genes}")


@dataclass
class SynthConfig:
    n_cells: int = config.DEFAULT_SYNTH_CELLS
    n_genes: int = config.DEFAULT_SYNTH_GENES
    n_clusters: int = config.DEFAULT_SYNTH_CLUSTERS
    centroid_scale: float = config.DEFAULT_CENTROID_SCALE
    within_std: float = config.DEFAULT_WITHIN_STD
    dropout_rate: float = config.DEFAULT_DROPOUT_RATE
    cluster_weights: Optional[List[float]] = field(default=None)

    def validate(self):
        if self.n_cells < 2:
            raise ConfigError(f"n_cells must be ≥ 2, got {self.n_cells}")
        if self.n_genes < 3:
            raise ConfigError(f"n_genes must be ≥ 3, got {self.n_genes}")
        if self.n_clusters < 1:
            raise ConfigError(f"n_clusters must be ≥ 1, got {self.n_clusters}")
        if self.n_clusters > self.n_cells:
            raise ConfigError(f"n_clusters ({self.n_clusters}) exceeds n_cells ({self.n_cells})")
        if self.centroid_scale < 0 or self.within_std < 0:
            raise ConfigError("centroid_scale and within_std must be non-negative")
        if not 0.0 <= self.dropout_rate <= 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1], got {self.dropout_rate}")
        if self.cluster_weights is not None:
            w = np.asarray(self.cluster_weights, dtype=np.float64)
            if w.shape != (self.n_clusters,):
                raise ConfigError(f"cluster_weights needs {self.n_clusters} entries, got {w.size}")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ConfigError("cluster_weights must be non-negative and sum to 1")


# ============ Parsing helpers ============

def _detect_separator(header: str) -> str:
    return "\t" if "\t" in header else ","


def _parse_labels(raw: Sequence[str], first_row: int = 1):
    """
    Integer labels are kept as given; text labels are numbered in order of
    first appearance.

    Returns:
        tuple: (labels array, label names or None)
    """
    series = pd.Series(list(raw), dtype=str).str.strip()
    blank = np.flatnonzero((series == "").to_numpy())
    if blank.size:
        raise DataFormatError("empty label", row=int(blank[0]) + first_row)
    numeric = pd.to_numeric(series, errors="coerce")
    if not numeric.isna().any() and np.all(np.mod(numeric.to_numpy(), 1) == 0):
        labels = numeric.to_numpy().astype(np.int64)
        negative = np.flatnonzero(labels < 0)
        if negative.size:
            raise DataFormatError("negative label", row=int(negative[0]) + first_row)
        return labels, None
    codes, names = pd.factorize(series, sort=False)
    return codes.astype(np.int64), [str(n) for n in names]


# ============ Loaders ============

def load_csv(path, label_column: str = LABEL_COLUMN, sep: Optional[str] = None,
             allow_negative: bool = False) -> ExpressionMatrix:
    """
    Load a cells × genes CSV/TSV file

    The header row holds gene ids, column 1 holds cell ids and an optional
    column named ``label`` holds ground truth. Errors report the 1-based data
    row and the 1-based file column.

    Args:
        path: File path
        label_column (str): Name of the label column
        sep (str): Field separator; detected from the header when None
        allow_negative (bool): Accept already-normalized values below zero

    Returns:
        ExpressionMatrix: Parsed matrix
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        header = handle.readline().rstrip("\r\n")
    if not header:
        raise DataFormatError(f"{path} is empty")
    sep = sep or _detect_separator(header)
    n_cols = len(header.split(sep))

    try:
        frame = pd.read_csv(path, sep=sep, dtype=str, header=0, keep_default_na=False,
                            encoding="utf-8", skip_blank_lines=True)
    except pd.errors.ParserError as err:
        match = re.search(r"line (\d+)", str(err))
        row = int(match.group(1)) - 1 if match else None
        raise DataFormatError(f"ragged row in {path.name}: expected {n_cols} fields", row=row) from err

    short = frame.isna().any(axis=1).to_numpy()
    if short.any():
        raise DataFormatError(f"ragged row in {path.name}: expected {n_cols} fields",
                              row=int(np.flatnonzero(short)[0]) + 1)

    columns = list(frame.columns)
    cell_ids = frame[columns[0]].astype(str).tolist()
    gene_cols = [c for c in columns[1:] if c != label_column]
    file_col = {c: i + 1 for i, c in enumerate(columns)}

    labels, label_names = None, None
    if label_column in columns[1:]:
        labels, label_names = _parse_labels(frame[label_column].tolist())

    values = np.empty((len(frame), len(gene_cols)), dtype=np.float64)
    for j, col in enumerate(gene_cols):
        values[:, j] = pd.to_numeric(frame[col].str.strip(), errors="coerce").to_numpy(dtype=np.float64)

    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        raise DataFormatError(f"unparseable number {frame[gene_cols[c]].iloc[r]!r}",
                              row=int(r) + 1, col=file_col[gene_cols[c]])
    # float() per cell parses repr-precision text exactly
    values = frame[gene_cols].to_numpy(dtype=object).astype(np.float64)
    negative = np.argwhere(values < 0)
    if negative.size and not allow_negative:
        r, c = negative[0]
        raise DataFormatError("negative expression value",
                              row=int(r) + 1, col=file_col[gene_cols[c]])

    matrix = ExpressionMatrix(values, cell_ids, [str(g) for g in gene_cols], labels, label_names)
    logger.info("Loaded %s: %d cells × %d genes%s", path.name, matrix.n_cells, matrix.n_genes,
                "" if labels is None else f", {matrix.n_classes} classes")
    return matrix


def _read_id_file(path) -> List[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.split("\t")[0].strip() for line in lines if line.strip()]


def load_matrix_market(mtx_path, genes_path, cells_path, labels_path=None,
                       genes_by_cells: bool = False, allow_negative: bool = False) -> ExpressionMatrix:
    """
    Load a Matrix Market coordinate file with companion id files

    Indices in the file are 1-based; duplicate coordinates are summed.
    Rows are cells unless ``genes_by_cells`` is set (10x-style layout).

    Args:
        mtx_path: ``.mtx`` file
        genes_path: One gene id per line (first tab field used)
        cells_path: One cell id per line (first tab field used)
        labels_path: Optional one label per line
        genes_by_cells (bool): Transpose after reading

    Returns:
        ExpressionMatrix: Densified N × G matrix
    """
    mtx_path = Path(mtx_path)
    with mtx_path.open("r", encoding="utf-8") as handle:
        header = handle.readline().strip().lower()
    if not header.startswith(MATRIX_MARKET_HEADER):
        raise DataFormatError(f"{mtx_path.name}: expected '%%MatrixMarket matrix coordinate' header",
                              row=1)

    try:
        sparse = scipy.io.mmread(str(mtx_path))
        dense = sparse.toarray() if hasattr(sparse, "toarray") else np.asarray(sparse)
    except (ValueError, IndexError, OverflowError, TypeError) as err:
        raise DataFormatError(f"{mtx_path.name}: {err}") from err
    dense = np.asarray(dense, dtype=np.float64)
    if genes_by_cells:
        dense = dense.T

    genes = _read_id_file(genes_path)
    cells = _read_id_file(cells_path)
    if len(cells) != dense.shape[0] or len(genes) != dense.shape[1]:
        raise DataFormatError(
            f"{mtx_path.name} is {dense.shape[0]}×{dense.shape[1]} but id files list "
            f"{len(cells)} cells and {len(genes)} genes")
    if not np.all(np.isfinite(dense)):
        raise DataFormatError(f"{mtx_path.name} contains non-finite values")
    if not allow_negative and np.any(dense < 0):
        r, c = np.argwhere(dense < 0)[0]
        raise DataFormatError("negative expression value", row=int(r) + 1, col=int(c) + 1)

    labels, label_names = None, None
    if labels_path is not None:
        labels, label_names = _parse_labels(_read_id_file(labels_path))
    matrix = ExpressionMatrix(dense, cells, genes, labels, label_names)
    logger.info("Loaded %s: %d cells × %d genes (%d stored entries)",
                mtx_path.name, matrix.n_cells, matrix.n_genes, int(np.count_nonzero(dense)))
    return matrix


def load_labels_csv(path) -> np.ndarray:
    """Read a labels file written by ``save_dataset`` (cell_id,label)"""
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if LABEL_COLUMN not in frame.columns:
        raise DataFormatError(f"{Path(path).name} has no '{LABEL_COLUMN}' column")
    labels, _ = _parse_labels(frame[LABEL_COLUMN].tolist())
    return labels


def save_dataset(x: ExpressionMatrix, out_dir) -> dict:
    """
    Write matrix.csv (and labels.csv when labels exist)

    Floats are written with repr precision so a reload is exact.

    Returns:
        dict: Paths of the written files
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"matrix": out_dir / config.OUTPUT_FILES["matrix"]}
    x.to_frame().to_csv(paths["matrix"], index=False, float_format="%.17g", lineterminator="\n")
    if x.labels is not None:
        paths["labels"] = out_dir / config.OUTPUT_FILES["labels"]
        pd.DataFrame({"cell_id": x.cell_ids, LABEL_COLUMN: x.labels}).to_csv(
            paths["labels"], index=False, lineterminator="\n")
    return paths


# ============ Preprocessing ============

def preprocess(x: ExpressionMatrix, cfg: PreprocessConfig) -> ExpressionMatrix:
    """
    Apply, in order: median-library normalization, log1p, top-variance gene
    selection and per-gene standardization. Disabled steps are skipped.

    Args:
        x (ExpressionMatrix): Input matrix
        cfg (PreprocessConfig): Which steps to run

    Returns:
        ExpressionMatrix: New matrix; labels carried over
    """
    cfg.validate()
    values = x.values.copy()
    gene_ids = list(x.gene_ids)

    if cfg.normalize_library_size:
        library = values.sum(axis=1)
        empty = np.flatnonzero(library <= 0)
        if empty.size:
            raise DegenerateError(f"cell {x.cell_ids[empty[0]]!r} has zero total count")
        values = values / library[:, None] * np.median(library)

    if cfg.log1p:
        if np.any(values < 0):
            raise DataFormatError("log1p requires non-negative values")
        values = np.log1p(values)

    if cfg.n_top_genes is not None:
        if cfg.n_top_genes > values.shape[1]:
            raise ConfigError(f"n_top_genes ({cfg.n_top_genes}) exceeds gene count ({values.shape[1]})")
        variance = values.var(axis=0, ddof=1)
        keep = np.sort(np.argsort(-variance, kind="stable")[:cfg.n_top_genes])
        values = values[:, keep]
        gene_ids = [gene_ids[j] for j in keep]

    if cfg.standardize:
        centered = values - values.mean(axis=0)
        std = centered.std(axis=0, ddof=1)
        flat = std == 0
        if flat.any():
            logger.debug("%d constant genes centered but not scaled", int(flat.sum()))
        values = centered / np.where(flat, 1.0, std)

    return ExpressionMatrix(values, list(x.cell_ids), gene_ids, x.labels, x.label_names)


# ============ Synthetic data ============

def apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """
    Split an integer total proportionally to weights (largest remainder)

    Ties on the remainder go to the lower index.
    """
    weights = np.asarray(weights, dtype=np.float64)
    exact = total * weights / weights.sum()
    counts = np.floor(exact).astype(np.int64)
    short = total - int(counts.sum())
    if short > 0:
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def synth(cfg: SynthConfig, rng: np.random.Generator) -> ExpressionMatrix:
    """
    Draw a clustered dataset from the two-level Gaussian model

    Centroids are Normal(0, centroid_scale²) per gene, cells are
    Normal(centroid, within_std²) and each entry is zeroed with probability
    dropout_rate. Values are in expression space and may be negative.

    Args:
        cfg (SynthConfig): Generator settings
        rng (np.random.Generator): Random stream

    Returns:
        ExpressionMatrix: Matrix with true labels attached
    """
    cfg.validate()
    n, g, k = cfg.n_cells, cfg.n_genes, cfg.n_clusters
    weights = np.full(k, 1.0 / k) if cfg.cluster_weights is None else np.asarray(cfg.cluster_weights)
    labels = rng.permutation(np.repeat(np.arange(k), apportion(n, weights)))

    centroids = gaussian_sample(rng, k, g, 0.0, cfg.centroid_scale)
    values = centroids[labels] + gaussian_sample(rng, n, g, 0.0, cfg.within_std)
    keep = rng.random((n, g)) >= cfg.dropout_rate
    values = np.where(keep, values, 0.0)

    width = len(str(n - 1))
    return ExpressionMatrix(
        values=values,
        cell_ids=[f"cell{i:0{width}d}" for i in range(n)],
        gene_ids=[f"gene{j:0{len(str(g - 1))}d}" for j in range(g)],
        labels=labels,
    )


# ============ Downsampling ============

def kept_count(n: int, rate: float) -> int:
    """⌈(1 − rate)·n⌉ with a guard against float round-up"""
    return int(math.ceil(round((1.0 - rate) * n, 9)))


def downsample(x: ExpressionMatrix, rate: float, mode: str, rng: np.random.Generator) -> ExpressionMatrix:
    """
    Remove a fraction of cells, randomly or stratified by label

    Stratified mode apportions the kept cells across classes by largest
    remainder and keeps at least one cell of every class. Kept cells stay in
    their original order.

    Args:
        x (ExpressionMatrix): Input matrix
        rate (float): Fraction removed, 0 < rate < 1
        mode (str): "random" or "stratified"
        rng (np.random.Generator): Random stream

    Returns:
        ExpressionMatrix: ⌈(1 − rate)·N⌉ cells
    """
    if not 0.0 < rate < 1.0:
        raise ConfigError(f"downsampling rate must be in (0, 1), got {rate}")
    keep = kept_count(x.n_cells, rate)

    if mode == "random":
        index = rng.choice(x.n_cells, size=keep, replace=False)
    elif mode == "stratified":
        if x.labels is None:
            raise ConfigError("stratified downsampling needs labels")
        classes, sizes = np.unique(x.labels, return_counts=True)
        quota = apportion(keep, sizes)
        exact = keep * sizes / sizes.sum()
        if keep >= classes.size:
            while np.any(quota == 0):
                donor = int(np.argmax(np.where(quota > 1, quota - exact, -np.inf)))
                quota[donor] -= 1
                quota[int(np.flatnonzero(quota == 0)[0])] += 1
        parts = [rng.choice(np.flatnonzero(x.labels == c), size=int(q), replace=False)
                 for c, q in zip(classes, quota) if q > 0]
        index = np.concatenate(parts)
    else:
        raise ConfigError(f"unknown downsampling mode {mode!r}")

    return x.subset(np.sort(index))
