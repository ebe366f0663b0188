"""
Encoder Module
Momentum encoder pair f_q / f_k and the projection heads g_I / g_C
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

import config
from modules.errors import CheckpointError, ConfigError, ShapeError
from modules.ndmath import add, matmul, relu, softmax_rows, tanh, value

logger = logging.getLogger(__name__)

ACTIVATIONS = {
    "relu": relu,
    "tanh": tanh,
    "identity": lambda a: a,
}

CHECKPOINT_FORMAT = "shrinkcl-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class MlpSpec:
    """
    Layer widths [input, hidden..., output]; the activation runs between
    layers and after the last one only when final_activation is set.
    """
    layer_widths: List[int]
    activation: str = config.DEFAULT_ACTIVATION
    final_activation: bool = False

    def validate(self):
        if len(self.layer_widths) < 2:
            raise ConfigError(f"an MLP needs at least 2 widths, got {self.layer_widths}")
        if any(int(w) < 1 for w in self.layer_widths):
            raise ConfigError(f"layer widths must be positive, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; choose from {sorted(ACTIVATIONS)}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


@dataclass
class Mlp:
    """Weights are fan_in × fan_out, biases 1 × fan_out"""
    spec: MlpSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        """[W0, b0, W1, b1, ...]"""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_parameters(cls, spec: MlpSpec, params: Sequence[np.ndarray]) -> "Mlp":
        return cls(spec, [np.array(p) for p in params[0::2]], [np.array(p) for p in params[1::2]])

    def copy(self) -> "Mlp":
        return Mlp.from_parameters(self.spec, self.parameters())

    @property
    def input_dim(self) -> int:
        return self.spec.layer_widths[0]

    @property
    def output_dim(self) -> int:
        return self.spec.layer_widths[-1]


@dataclass
class EncoderPair:
    query: Mlp
    key: Mlp
    momentum: float = config.DEFAULT_MOMENTUM

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError(f"momentum must be in [0, 1], got {self.momentum}")
        q_shapes = [p.shape for p in self.query.parameters()]
        k_shapes = [p.shape for p in self.key.parameters()]
        if q_shapes != k_shapes:
            raise ShapeError(f"query/key parameter shapes differ: {q_shapes} vs {k_shapes}")


@dataclass
class Heads:
    instance: Mlp
    cluster: Mlp

    @property
    def n_clusters(self) -> int:
        return self.cluster.output_dim


@dataclass
class ModelSpec:
    """Architecture of the encoder and both heads"""
    encoder_hidden: List[int] = field(default_factory=lambda: list(config.DEFAULT_ENCODER_HIDDEN))
    feature_dim: int = config.DEFAULT_FEATURE_DIM
    instance_hidden: List[int] = field(default_factory=lambda: list(config.DEFAULT_INSTANCE_HIDDEN))
    instance_dim: int = config.DEFAULT_INSTANCE_DIM
    activation: str = config.DEFAULT_ACTIVATION
    momentum: float = config.DEFAULT_MOMENTUM

    def encoder_spec(self, n_genes: int) -> MlpSpec:
        return MlpSpec([n_genes] + list(self.encoder_hidden) + [self.feature_dim], self.activation)

    def instance_spec(self) -> MlpSpec:
        return MlpSpec([self.feature_dim] + list(self.instance_hidden) + [self.instance_dim], self.activation)

    def cluster_spec(self, n_clusters: int) -> MlpSpec:
        return MlpSpec([self.feature_dim, n_clusters], self.activation)

    def validate(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError(f"momentum must be in [0, 1], got {self.momentum}")
        self.encoder_spec(3).validate()
        self.instance_spec().validate()


# ============ Construction ============

def init_mlp(spec: MlpSpec, rng: np.random.Generator) -> Mlp:
    """
    Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases

    Args:
        spec (MlpSpec): Architecture
        rng (np.random.Generator): Random stream

    Returns:
        Mlp: Initialized network
    """
    spec.validate()
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros((1, fan_out)))
    return Mlp(spec, weights, biases)


def init_encoder_pair(spec: MlpSpec, momentum: float, rng: np.random.Generator) -> EncoderPair:
    """Query encoder drawn from rng; the key encoder starts as an exact copy"""
    query = init_mlp(spec, rng)
    return EncoderPair(query=query, key=query.copy(), momentum=momentum)


def init_heads(model: ModelSpec, n_clusters: int, rng: np.random.Generator) -> Heads:
    if n_clusters < 2:
        raise ConfigError(f"the cluster head needs K ≥ 2, got {n_clusters}")
    return Heads(instance=init_mlp(model.instance_spec(), rng),
                 cluster=init_mlp(model.cluster_spec(n_clusters), rng))


# ============ Forward passes ============

def mlp_forward(mlp: Mlp, x, params: Optional[Sequence] = None):
    """
    Affine layers with the configured activation in between

    Args:
        mlp (Mlp): Network
        x: B × input_dim batch (array or Var)
        params: Optional replacement for mlp.parameters(), e.g. tape Vars

    Returns:
        B × output_dim result; a Var when x or params are Vars
    """
    params = mlp.parameters() if params is None else list(params)
    cols = value(x).shape[-1] if value(x).ndim == 2 else None
    if cols != mlp.input_dim:
        raise ShapeError(f"input has shape {value(x).shape}, network expects {mlp.input_dim} columns")
    act = ACTIVATIONS[mlp.spec.activation]
    h = x
    last = mlp.spec.n_layers - 1
    for i in range(mlp.spec.n_layers):
        h = add(matmul(h, params[2 * i]), params[2 * i + 1])
        if i < last or mlp.spec.final_activation:
            h = act(h)
    return h


def forward_features(params: Mlp, x_batch, overrides: Optional[Sequence] = None):
    """h = f(x): B × G → B × P"""
    return mlp_forward(params, x_batch, overrides)


def project_instance(g_i: Mlp, h, overrides: Optional[Sequence] = None):
    """z = g_I(h), left unnormalized"""
    return mlp_forward(g_i, h, overrides)


def project_cluster(g_c: Mlp, h, overrides: Optional[Sequence] = None):
    """y = softmax(g_C(h)); each row lies on the K-simplex"""
    return softmax_rows(mlp_forward(g_c, h, overrides))


def momentum_update(pair: EncoderPair) -> EncoderPair:
    """
    θ_k ← m·θ_k + (1 − m)·θ_q, written as θ_k + (1 − m)(θ_q − θ_k)

    θ_q is shared, not copied; θ_k is a fresh set of arrays.
    """
    m = pair.momentum
    if m == 0.0:
        new_key = [q.copy() for q in pair.query.parameters()]
    else:
        new_key = [k + (1.0 - m) * (q - k)
                   for q, k in zip(pair.query.parameters(), pair.key.parameters())]
    return EncoderPair(query=pair.query, key=Mlp.from_parameters(pair.key.spec, new_key), momentum=m)


# ============ Checkpoints ============

def _mlp_to_dict(mlp: Mlp) -> Dict:
    return {
        "layer_widths": [int(w) for w in mlp.spec.layer_widths],
        "activation": mlp.spec.activation,
        "final_activation": bool(mlp.spec.final_activation),
        "weights": [w.reshape(-1).tolist() for w in mlp.weights],
        "biases": [b.reshape(-1).tolist() for b in mlp.biases],
    }


def _mlp_from_dict(doc: Dict) -> Mlp:
    spec = MlpSpec([int(w) for w in doc["layer_widths"]], doc["activation"], bool(doc["final_activation"]))
    spec.validate()
    widths = spec.layer_widths
    if len(doc["weights"]) != spec.n_layers or len(doc["biases"]) != spec.n_layers:
        raise CheckpointError(f"expected {spec.n_layers} layers for widths {widths}")
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        w = np.asarray(doc["weights"][i], dtype=np.float64)
        b = np.asarray(doc["biases"][i], dtype=np.float64)
        if w.size != fan_in * fan_out or b.size != fan_out:
            raise CheckpointError(f"layer {i} has {w.size} weights / {b.size} biases "
                                  f"for a {fan_in}×{fan_out} layer")
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b.reshape(1, fan_out))
    return Mlp(spec, weights, biases)


def save_checkpoint(path, pair: EncoderPair, heads: Heads, meta: Optional[Dict] = None) -> Path:
    """
    Write layer shapes and row-major weights as JSON

    Python's float repr round-trips float64 exactly, so load(save(x)) == x
    bit for bit.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "momentum": pair.momentum,
        "networks": {
            "f_q": _mlp_to_dict(pair.query),
            "f_k": _mlp_to_dict(pair.key),
            "g_I": _mlp_to_dict(heads.instance),
            "g_C": _mlp_to_dict(heads.cluster),
        },
        "meta": meta or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc), encoding="utf-8")
    logger.debug("Checkpoint written to %s", path)
    return path


def load_checkpoint(path) -> Tuple[EncoderPair, Heads, Dict]:
    """
    Read a checkpoint written by save_checkpoint

    Returns:
        tuple: (EncoderPair, Heads, meta dict)
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path.name} is not a checkpoint file")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        nets = doc["networks"]
        pair = EncoderPair(_mlp_from_dict(nets["f_q"]), _mlp_from_dict(nets["f_k"]), float(doc["momentum"]))
        heads = Heads(_mlp_from_dict(nets["g_I"]), _mlp_from_dict(nets["g_C"]))
    except CheckpointError:
        raise
    except (ValueError, KeyError, TypeError, AttributeError) as err:
        raise CheckpointError(f"cannot parse checkpoint {path.name}: {err}") from err
    return pair, heads, doc.get("meta", {})
