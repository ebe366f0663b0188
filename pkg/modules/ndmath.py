"""
Numeric Kernel Module
Dense matrices, seeded random streams and a reverse-mode gradient tape

Every operation accepts plain numpy arrays or tape variables (``Var``).
With plain arrays the result is a plain array, so the same model and loss
code serves inference and training. As soon as one operand is a ``Var``
the result is recorded on that operand's ``Tape`` and ``grad`` can walk it
backwards.

All arithmetic is float64. Reductions use numpy's pairwise summation, whose
order depends only on array shape, so results are bit-stable for a fixed
seed, shape and thread count.
"""

import zlib
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from modules.errors import ConfigError, DegenerateError, NumericalError, ShapeError, TapeError

Matrix = np.ndarray


def as_matrix(x, name: str = "matrix") -> Matrix:
    """
    Coerce input to a finite float64 2-D array

    Args:
        x: Array-like input
        name (str): Label used in error messages

    Returns:
        np.ndarray: 2-D float64 copy-free view when possible
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name} contains NaN or Inf")
    return arr


# ============ Random streams ============

def _stream_key(key: Union[int, str]) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFFFFFFFFFF


def make_rng(seed: int) -> np.random.Generator:
    """
    Create the package RNG: numpy's PCG64 bit generator

    PCG64 produces the same stream for the same seed on every platform.

    Args:
        seed (int): 64-bit seed

    Returns:
        np.random.Generator: Seeded generator
    """
    return np.random.Generator(np.random.PCG64(_stream_key(seed)))


def derive_rng(seed: int, *keys: Union[int, str]) -> np.random.Generator:
    """
    Derive an independent sub-stream from a seed and a path of keys

    derive_rng(7, "shuffle", 3) always yields the same stream, and it is
    statistically independent of derive_rng(7, "augment", 3).

    Args:
        seed (int): Root seed
        *keys: Ints or strings naming the sub-stream

    Returns:
        np.random.Generator: Seeded generator
    """
    entropy = [_stream_key(seed)] + [_stream_key(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def gaussian_sample(rng: np.random.Generator, rows: int, cols: int,
                    mean: float = 0.0, std: float = 1.0) -> Matrix:
    """
    Draw an i.i.d. Normal(mean, std²) matrix

    Args:
        rng (np.random.Generator): Random stream
        rows (int): Row count
        cols (int): Column count
        mean (float): Mean of every entry
        std (float): Standard deviation, must be ≥ 0

    Returns:
        np.ndarray: rows × cols matrix
    """
    if std < 0:
        raise ConfigError(f"std must be non-negative, got {std}")
    if std == 0:
        return np.full((rows, cols), float(mean))
    return rng.normal(loc=mean, scale=std, size=(rows, cols))


# ============ Tape ============

class Var:
    """A value recorded on a Tape"""

    __slots__ = ("value", "tape", "parents", "backward", "name")
    __array_priority__ = 1000  # make ndarray <op> Var defer to Var

    def __init__(self, value: np.ndarray, tape: "Tape", parents: Sequence = (),
                 backward: Optional[Callable] = None, name: Optional[str] = None):
        self.value = value
        self.tape = tape
        self.parents = tuple(parents)
        self.backward = backward
        self.name = name

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Var{label}(shape={self.value.shape})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def T(self) -> "Var":
        return transpose(self)

    def item(self) -> float:
        return float(self.value.reshape(-1)[0])

    def sum(self, axis=None, keepdims: bool = False) -> "Var":
        return total(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Var":
        return mean(self, axis=axis, keepdims=keepdims)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


class Tape:
    """
    Records primitive operations for reverse-mode differentiation

    A tape is owned by one recording at a time; it is not safe to record on
    the same tape from several threads.
    """

    def __init__(self):
        self.nodes: List[Var] = []
        self._ids = set()

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, var) -> bool:
        return isinstance(var, Var) and var.tape is self and id(var) in self._ids

    def watch(self, value, name: Optional[str] = None) -> Var:
        """
        Record an input whose gradient may be requested

        Args:
            value: Array-like input
            name (str): Optional label for debugging

        Returns:
            Var: Leaf variable on this tape
        """
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NumericalError(f"watched input {name or ''} contains NaN or Inf")
        return self._record(Var(arr, self, name=name))

    def _record(self, var: Var) -> Var:
        self.nodes.append(var)
        self._ids.add(id(var))
        return var


Operand = Union[Var, np.ndarray, float, int]


def value(x: Operand) -> np.ndarray:
    """Plain array behind a Var, or the input coerced to float64"""
    if isinstance(x, Var):
        return x.value
    return np.asarray(x, dtype=np.float64)


def _tape_of(operands: Sequence) -> Optional[Tape]:
    tape = None
    for op in operands:
        if isinstance(op, Var):
            if tape is None:
                tape = op.tape
            elif op.tape is not tape:
                raise TapeError("operands were recorded on different tapes")
    return tape


def _finish(out: np.ndarray, op_name: str, operands: Sequence, backward: Callable):
    if not np.all(np.isfinite(out)):
        raise NumericalError(f"{op_name} produced NaN or Inf")
    tape = _tape_of(operands)
    if tape is None:
        return out
    return tape._record(Var(out, tape, parents=operands, backward=backward))


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_check(op_name: str, a: np.ndarray, b: np.ndarray):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as err:
        raise ShapeError(f"{op_name}: shapes {a.shape} and {b.shape} do not broadcast") from err


def grad(output: Var, wrt: Sequence[Var]) -> List[np.ndarray]:
    """
    Reverse-mode gradients of a recorded scalar

    Args:
        output (Var): Scalar recorded on a tape
        wrt (Sequence[Var]): Inputs recorded on the same tape

    Returns:
        List[np.ndarray]: One gradient per input, shaped like the input
    """
    if not isinstance(output, Var):
        raise TapeError("output was not recorded on a tape")
    if output.value.size != 1:
        raise ShapeError(f"gradient output must be scalar, got shape {output.value.shape}")
    tape = output.tape
    for i, w in enumerate(wrt):
        if w not in tape:
            raise TapeError(f"input {i} was not recorded on the output's tape")

    grads = {id(output): np.ones_like(output.value)}
    for node in reversed(tape.nodes):
        g = grads.get(id(node))
        if g is None or node.backward is None:
            continue
        for parent, pg in zip(node.parents, node.backward(g)):
            if not isinstance(parent, Var) or pg is None:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg
    return [grads.get(id(w), np.zeros_like(w.value)) for w in wrt]


# ============ Primitives ============

def add(a: Operand, b: Operand):
    av, bv = value(a), value(b)
    _broadcast_check("add", av, bv)
    return _finish(av + bv, "add", (a, b),
                   lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def sub(a: Operand, b: Operand):
    av, bv = value(a), value(b)
    _broadcast_check("sub", av, bv)
    return _finish(av - bv, "sub", (a, b),
                   lambda g: (_unbroadcast(g, av.shape), _unbroadcast(-g, bv.shape)))


def mul(a: Operand, b: Operand):
    av, bv = value(a), value(b)
    _broadcast_check("mul", av, bv)
    return _finish(av * bv, "mul", (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a: Operand, b: Operand):
    av, bv = value(a), value(b)
    _broadcast_check("div", av, bv)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = av / bv
    return _finish(out, "div", (a, b),
                   lambda g: (_unbroadcast(g / bv, av.shape),
                              _unbroadcast(-g * av / (bv * bv), bv.shape)))


def neg(a: Operand):
    return _finish(-value(a), "neg", (a,), lambda g: (-g,))


def matmul(a: Operand, b: Operand):
    """
    Matrix product, differentiable through the tape

    Args:
        a: m × k matrix
        b: k × n matrix

    Returns:
        m × n product (Var when either operand is a Var)
    """
    av, bv = value(a), value(b)
    if av.ndim != 2 or bv.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[1] != bv.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {av.shape} × {bv.shape}")
    return _finish(av @ bv, "matmul", (a, b), lambda g: (g @ bv.T, av.T @ g))


def transpose(a: Operand):
    av = value(a)
    return _finish(av.T.copy(), "transpose", (a,), lambda g: (g.T,))


def relu(a: Operand):
    av = value(a)
    active = av > 0
    return _finish(np.where(active, av, 0.0), "relu", (a,), lambda g: (g * active,))


def tanh(a: Operand):
    out = np.tanh(value(a))
    return _finish(out, "tanh", (a,), lambda g: (g * (1.0 - out * out),))


def exp(a: Operand):
    with np.errstate(over="ignore"):
        out = np.exp(value(a))
    return _finish(out, "exp", (a,), lambda g: (g * out,))


def log(a: Operand, eps: Optional[float] = None):
    """
    Natural log; with eps, the argument is clamped at eps from below

    Clamping makes 0·log 0 evaluate to 0 when multiplied by its argument.
    """
    av = value(a)
    if eps is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(av)
        return _finish(out, "log", (a,), lambda g: (g / av,))
    live = av > eps
    out = np.log(np.where(live, av, eps))
    return _finish(out, "log", (a,),
                   lambda g: (np.where(live, g / np.where(live, av, 1.0), 0.0),))


def square(a: Operand):
    av = value(a)
    return _finish(av * av, "square", (a,), lambda g: (2.0 * av * g,))


def total(a: Operand, axis: Optional[int] = None, keepdims: bool = False):
    """Sum over an axis (or everything), differentiable"""
    av = value(a)
    out = np.sum(av, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, av.shape).copy(),)

    return _finish(np.asarray(out, dtype=np.float64), "sum", (a,), backward)


def mean(a: Operand, axis: Optional[int] = None, keepdims: bool = False):
    """Mean over an axis (or everything); empty reductions are errors"""
    av = value(a)
    count = av.size if axis is None else av.shape[axis]
    if count == 0:
        raise DegenerateError("mean over an empty set")
    return div(total(a, axis=axis, keepdims=keepdims), float(count))


def softmax_rows(a: Operand):
    """Row-wise softmax of a 2-D input"""
    av = value(a)
    if av.ndim != 2:
        raise ShapeError(f"softmax_rows needs a 2-D input, got {av.shape}")
    shifted = av - av.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    return _finish(out, "softmax_rows", (a,),
                   lambda g: (out * (g - (g * out).sum(axis=1, keepdims=True)),))


def logsumexp_rows(a: Operand, mask: Optional[np.ndarray] = None):
    """
    Row-wise log Σ exp over the entries selected by mask

    Args:
        a: 2-D input
        mask (np.ndarray): Boolean array shaped like a; None selects everything

    Returns:
        1-D vector with one value per row
    """
    av = value(a)
    if av.ndim != 2:
        raise ShapeError(f"logsumexp_rows needs a 2-D input, got {av.shape}")
    if mask is None:
        mask = np.ones(av.shape, dtype=bool)
    elif mask.shape != av.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match input {av.shape}")
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        raise DegenerateError(f"logsumexp over an empty row ({int(empty[0])})")
    peak = np.where(mask, av, -np.inf).max(axis=1)
    e = np.where(mask, np.exp(np.where(mask, av, 0.0) - peak[:, None]), 0.0)
    s = e.sum(axis=1)
    out = peak + np.log(s)
    weights = e / s[:, None]
    return _finish(out, "logsumexp_rows", (a,), lambda g: (g[:, None] * weights,))


def row_norms(a: Operand) -> np.ndarray:
    """Euclidean norm of each row (plain array, not recorded)"""
    return np.sqrt(np.sum(value(a) ** 2, axis=1))


def normalize_rows(a: Operand):
    """Scale each row to unit Euclidean norm; zero rows are errors"""
    av = value(a)
    if av.ndim != 2:
        raise ShapeError(f"normalize_rows needs a 2-D input, got {av.shape}")
    norms = row_norms(av)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateError(f"row {int(zero[0])} has zero norm")
    out = av / norms[:, None]

    def backward(g):
        return ((g - out * (g * out).sum(axis=1, keepdims=True)) / norms[:, None],)

    return _finish(out, "normalize_rows", (a,), backward)


def concat_rows(parts: Sequence[Operand]):
    """Stack 2-D inputs vertically"""
    values = [value(p) for p in parts]
    if len({v.shape[1] for v in values}) > 1:
        raise ShapeError(f"concat_rows column counts differ: {[v.shape for v in values]}")
    bounds = np.cumsum([0] + [v.shape[0] for v in values])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(values)))

    return _finish(np.concatenate(values, axis=0), "concat_rows", tuple(parts), backward)


def take_rows(a: Operand, index: np.ndarray):
    """Select rows by integer index"""
    av = value(a)
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(av)
        np.add.at(full, index, g)
        return (full,)

    return _finish(av[index], "take_rows", (a,), backward)


def pick(a: Operand, rows: np.ndarray, cols: np.ndarray):
    """Gather a[rows[i], cols[i]] into a vector"""
    av = value(a)

    def backward(g):
        full = np.zeros_like(av)
        np.add.at(full, (rows, cols), g)
        return (full,)

    return _finish(av[rows, cols], "pick", (a,), backward)
