"""
Settings Module
JSON run configuration for the command line, with strict keys
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin

import config
from modules.augment import AugmentConfig
from modules.contrastive import ContrastConfig
from modules.dataio import PreprocessConfig
from modules.encoder import ModelSpec
from modules.errors import ConfigError
from modules.trainer import TrainConfig, parse_loss_set


@dataclass
class DataSection:
    matrix: Optional[str] = None
    labels: Optional[str] = None
    format: str = "csv"
    genes: Optional[str] = None
    cells: Optional[str] = None
    genes_by_cells: bool = False


@dataclass
class PreprocessSection:
    normalize_library_size: bool = False
    log1p: bool = False
    n_top_genes: Optional[int] = None
    standardize: bool = True


@dataclass
class AugmentSection:
    mask_fraction: float = config.DEFAULT_MASK_FRACTION
    noise_std: float = config.DEFAULT_NOISE_STD
    noise_enabled: bool = True


@dataclass
class ModelSection:
    encoder_hidden: List[int] = field(default_factory=lambda: list(config.DEFAULT_ENCODER_HIDDEN))
    feature_dim: int = config.DEFAULT_FEATURE_DIM
    instance_hidden: List[int] = field(default_factory=lambda: list(config.DEFAULT_INSTANCE_HIDDEN))
    instance_dim: int = config.DEFAULT_INSTANCE_DIM
    activation: str = config.DEFAULT_ACTIVATION
    momentum: float = config.DEFAULT_MOMENTUM


@dataclass
class LossesSection:
    loss_set: str = "+".join(config.LOSS_TERMS)
    alpha: float = config.DEFAULT_ALPHA
    beta: float = config.DEFAULT_BETA
    tau_i: float = config.DEFAULT_TAU_I
    tau_c: float = config.DEFAULT_TAU_C
    exclude_self: bool = True
    entropy_eps: float = config.DEFAULT_ENTROPY_EPS
    strict_paper_sign: bool = False


@dataclass
class KmeansSection:
    n_clusters: Optional[int] = None
    max_iters: int = config.DEFAULT_KMEANS_MAX_ITERS
    tol: float = config.DEFAULT_KMEANS_TOL
    n_init: int = config.DEFAULT_KMEANS_N_INIT
    init: str = config.DEFAULT_KMEANS_INIT
    final_rule: str = "argmax"


@dataclass
class TrainSection:
    epochs: int = config.DEFAULT_EPOCHS
    batch_size: int = config.DEFAULT_BATCH_SIZE
    learning_rate: float = config.DEFAULT_LEARNING_RATE
    adam_beta1: float = config.DEFAULT_ADAM_BETA1
    adam_beta2: float = config.DEFAULT_ADAM_BETA2
    adam_eps: float = config.DEFAULT_ADAM_EPS
    seed: int = config.DEFAULT_SEED
    eval_every: int = config.DEFAULT_EVAL_EVERY


@dataclass
class OutputSection:
    dir: str = "run"


SECTIONS = {
    "data": DataSection,
    "preprocess": PreprocessSection,
    "augment": AugmentSection,
    "model": ModelSection,
    "losses": LossesSection,
    "kmeans": KmeansSection,
    "train": TrainSection,
    "output": OutputSection,
}


def _coerce(where: str, annotation, val):
    """
    Check a JSON value against a section field's annotation

    Integers are accepted where floats are expected (and converted);
    booleans only match bool.
    """
    if get_origin(annotation) is Union:
        annotation = next(a for a in get_args(annotation) if a is not type(None))
    if get_origin(annotation) in (list, List):
        (item,) = get_args(annotation)
        if not isinstance(val, list):
            raise ConfigError(f"{where} must be a list, got {val!r}")
        return [_coerce(f"{where}[{i}]", item, v) for i, v in enumerate(val)]
    if annotation is bool:
        ok = isinstance(val, bool)
    elif annotation is int:
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif annotation is float:
        ok = isinstance(val, (int, float)) and not isinstance(val, bool)
        val = float(val) if ok else val
    else:
        ok = isinstance(val, annotation)
    if not ok:
        raise ConfigError(f"{where} must be {annotation.__name__}, got {val!r}")
    return val


@dataclass
class CliConfig:
    """
    Run configuration document

    Precedence: command-line flags > config file > defaults. Unknown
    sections or keys are errors.
    """
    data: DataSection = field(default_factory=DataSection)
    preprocess: PreprocessSection = field(default_factory=PreprocessSection)
    augment: AugmentSection = field(default_factory=AugmentSection)
    model: ModelSection = field(default_factory=ModelSection)
    losses: LossesSection = field(default_factory=LossesSection)
    kmeans: KmeansSection = field(default_factory=KmeansSection)
    train: TrainSection = field(default_factory=TrainSection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "CliConfig":
        if not isinstance(doc, dict):
            raise ConfigError("the configuration document must be a JSON object")
        unknown = sorted(set(doc) - set(SECTIONS))
        if unknown:
            raise ConfigError(f"unknown config sections {unknown}")
        cfg = cls()
        cfg.update(doc)
        return cfg

    @classmethod
    def load(cls, path) -> "CliConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from err
        return cls.from_dict(doc)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def update(self, overrides: Dict[str, Dict[str, Any]]):
        """
        Apply section → {key: value} overrides; None values are skipped so
        unset flags leave file values in place
        """
        for name, values in overrides.items():
            if name not in SECTIONS:
                raise ConfigError(f"unknown config section {name!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"config section {name!r} must be an object")
            section = getattr(self, name)
            types = {f.name: f.type for f in fields(section)}
            unknown = sorted(set(values) - set(types))
            if unknown:
                raise ConfigError(f"unknown keys in section {name!r}: {unknown}")
            for key, val in values.items():
                if val is not None:
                    setattr(section, key, _coerce(f"{name}.{key}", types[key], val))
        return self

    # ============ Typed views ============

    def preprocess_config(self) -> PreprocessConfig:
        return PreprocessConfig(**asdict(self.preprocess))

    def train_config(self, n_clusters: Optional[int] = None) -> TrainConfig:
        k = self.kmeans.n_clusters if self.kmeans.n_clusters is not None else n_clusters
        if k is None:
            raise ConfigError("the number of clusters is unknown: set kmeans.n_clusters or --clusters")
        losses = self.losses
        return TrainConfig(
            n_clusters=int(k),
            epochs=self.train.epochs,
            batch_size=self.train.batch_size,
            learning_rate=self.train.learning_rate,
            adam_beta1=self.train.adam_beta1,
            adam_beta2=self.train.adam_beta2,
            adam_eps=self.train.adam_eps,
            alpha=losses.alpha,
            beta=losses.beta,
            loss_terms=parse_loss_set(losses.loss_set),
            model=ModelSpec(**asdict(self.model)),
            augment=AugmentConfig(**asdict(self.augment)),
            contrast=ContrastConfig(tau_i=losses.tau_i, tau_c=losses.tau_c, exclude_self=losses.exclude_self,
                                    entropy_eps=losses.entropy_eps, strict_paper_sign=losses.strict_paper_sign),
            kmeans_max_iters=self.kmeans.max_iters,
            kmeans_tol=self.kmeans.tol,
            kmeans_n_init=self.kmeans.n_init,
            kmeans_init=self.kmeans.init,
            final_rule=self.kmeans.final_rule,
            seed=self.train.seed,
            eval_every=self.train.eval_every,
        )
