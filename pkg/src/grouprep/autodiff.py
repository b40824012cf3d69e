"""Tape-based reverse-mode differentiation over dense float64 arrays.

Values are numpy arrays whose last two axes are the matrix axes; any leading
axes are a batch (stacks of matrices multiply pairwise, with numpy
broadcasting).  Operations executed inside ``with Tape() as tape:`` on inputs
that require gradients are recorded; ``tape.backward(loss)`` replays them in
reverse and accumulates ``.grad`` on the leaves.
"""

from __future__ import annotations

import contextvars
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from grouprep.expm import expm, expm_frechet_adjoint


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


CHECK_FINITE = os.environ.get("GROUPREP_CHECK_FINITE", "1") != "0"

_active_tape: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "grouprep_tape", default=None
)


class DiffMatrix:
    __slots__ = ("value", "grad", "requires_grad", "node")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: int | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"DiffMatrix(shape={self.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__


def constant(value) -> DiffMatrix:
    return DiffMatrix(value, requires_grad=False)


def parameter(value) -> DiffMatrix:
    return DiffMatrix(value, requires_grad=True)


@dataclass
class Record:
    kind: str
    inputs: tuple[DiffMatrix, ...]
    output: DiffMatrix
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    def __init__(self):
        self.records: list[Record] = []
        self._token = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, *exc):
        _active_tape.reset(self._token)
        return False

    def backward(self, out: DiffMatrix, seed: np.ndarray | None = None) -> None:
        if out.value.size != 1 and seed is None:
            raise ShapeError("backward from a non-scalar needs an explicit seed")
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for rec in reversed(self.records):
            g = rec.output.grad
            if g is None:
                continue
            for x, gx in zip(rec.inputs, rec.backward(g)):
                if gx is None or not x.requires_grad:
                    continue
                gx = _unbroadcast(gx, x.shape)
                x.grad = gx.copy() if x.grad is None else x.grad + gx
            if rec.output.node is not None:
                # intermediate gradients are not needed after their record runs
                rec.output.grad = None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check(value: np.ndarray, kind: str) -> None:
    if CHECK_FINITE and not np.all(np.isfinite(value)):
        raise NonFiniteError(f"non-finite values produced by {kind}")


def _emit(kind: str, value: np.ndarray, inputs: tuple[DiffMatrix, ...], backward) -> DiffMatrix:
    _check(value, kind)
    out = DiffMatrix(value)
    tape = _active_tape.get()
    if tape is not None and any(x.requires_grad for x in inputs):
        out.requires_grad = True
        out.node = len(tape.records)
        tape.records.append(Record(kind, inputs, out, backward))
    return out


def _as_dm(x) -> DiffMatrix:
    return x if isinstance(x, DiffMatrix) else constant(x)


def _T(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# -- linear algebra ----------------------------------------------------------


def matmul(A: DiffMatrix, B: DiffMatrix) -> DiffMatrix:
    A, B = _as_dm(A), _as_dm(B)
    if A.value.ndim < 2 or B.value.ndim < 2 or A.shape[-1] != B.shape[-2]:
        raise ShapeError(f"cannot multiply {A.shape} by {B.shape}")
    a, b = A.value, B.value
    return _emit("matmul", a @ b, (A, B), lambda g: (g @ _T(b), _T(a) @ g))


def transpose(A: DiffMatrix) -> DiffMatrix:
    return _emit("transpose", _T(A.value), (A,), lambda g: (_T(g),))


def add(A: DiffMatrix, B: DiffMatrix) -> DiffMatrix:
    A, B = _as_dm(A), _as_dm(B)
    try:
        v = A.value + B.value
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _emit("add", v, (A, B), lambda g: (g, g))


def sub(A: DiffMatrix, B: DiffMatrix) -> DiffMatrix:
    A, B = _as_dm(A), _as_dm(B)
    try:
        v = A.value - B.value
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _emit("sub", v, (A, B), lambda g: (g, -g))


def mul(A: DiffMatrix, B: DiffMatrix) -> DiffMatrix:
    A, B = _as_dm(A), _as_dm(B)
    a, b = A.value, B.value
    try:
        v = a * b
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _emit("mul", v, (A, B), lambda g: (g * b, g * a))


def scale(A: DiffMatrix, c: float) -> DiffMatrix:
    return _emit("scale", A.value * c, (A,), lambda g: (g * c,))


def reshape(A: DiffMatrix, shape: tuple[int, ...]) -> DiffMatrix:
    old = A.shape
    try:
        v = A.value.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return _emit("reshape", v, (A,), lambda g: (g.reshape(old),))


def reshape_to_square(v: DiffMatrix) -> DiffMatrix:
    """Row-major reshape of a length-n^2 vector (or the last axis of a stack) to n x n.

    A ``(n^2, 1)`` or ``(1, n^2)`` matrix is treated as a plain vector.
    """
    shape = v.shape
    if len(shape) == 2 and 1 in shape:
        lead, size = (), shape[0] * shape[1]
    else:
        lead, size = shape[:-1], shape[-1]
    n = int(round(np.sqrt(size)))
    if n * n != size:
        raise ShapeError(f"length {size} is not a perfect square")
    return reshape(v, lead + (n, n))


def take(A: DiffMatrix, index: np.ndarray) -> DiffMatrix:
    """Gather along the first axis; the backward pass scatter-adds."""
    index = np.asarray(index, dtype=np.intp)
    shape = A.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _emit("take", A.value[index], (A,), back)


def concat(parts: Sequence[DiffMatrix], axis: int = -1) -> DiffMatrix:
    parts = tuple(_as_dm(p) for p in parts)
    sizes = [p.shape[axis] for p in parts]
    cuts = np.cumsum(sizes)[:-1]
    return _emit(
        "concat",
        np.concatenate([p.value for p in parts], axis=axis),
        parts,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def block_diag(blocks: Sequence[DiffMatrix]) -> DiffMatrix:
    blocks = tuple(_as_dm(b) for b in blocks)
    for b in blocks:
        if b.value.ndim < 2 or b.shape[-1] != b.shape[-2]:
            raise ShapeError(f"block of shape {b.shape} is not square")
    lead = np.broadcast_shapes(*(b.shape[:-2] for b in blocks))
    sizes = [b.shape[-1] for b in blocks]
    total = sum(sizes)
    out = np.zeros(lead + (total, total))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for b, o, s in zip(blocks, offsets, sizes):
        out[..., o : o + s, o : o + s] = b.value

    def back(g):
        return tuple(g[..., o : o + s, o : o + s] for o, s in zip(offsets, sizes))

    return _emit("block_diag", out, blocks, back)


def matrix_exp(A: DiffMatrix) -> DiffMatrix:
    if A.value.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ShapeError(f"matrix_exp needs square matrices, got {A.shape}")
    a = A.value
    return _emit("matrix_exp", expm(a), (A,), lambda g: (expm_frechet_adjoint(a, g),))


# -- element-wise -------------------------------------------------------------


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def activation(x: DiffMatrix, kind: str) -> DiffMatrix:
    v = x.value
    if kind == "tanh":
        y = np.tanh(v)
        return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))
    if kind == "silu":
        s = _sigmoid(v)
        return _emit("silu", v * s, (x,), lambda g: (g * (s + v * s * (1.0 - s)),))
    if kind == "relu":
        mask = v > 0
        return _emit("relu", np.where(mask, v, 0.0), (x,), lambda g: (g * mask,))
    if kind == "linear":
        return x
    raise ValueError(f"unknown activation {kind!r}")


# -- reductions and losses ----------------------------------------------------


def sum_all(A: DiffMatrix) -> DiffMatrix:
    shape = A.shape
    return _emit("sum", np.asarray(A.value.sum()), (A,), lambda g: (np.broadcast_to(g, shape),))


def frobenius_norm(A: DiffMatrix, per_matrix: bool = False) -> DiffMatrix:
    """Frobenius norm of the whole array, or of each matrix in a stack."""
    a = A.value
    if per_matrix:
        nrm = np.sqrt((a * a).sum(axis=(-2, -1)))
        safe = np.where(nrm > 0, nrm, 1.0)
        return _emit("frobenius", nrm, (A,), lambda g: (a * (g / safe)[..., None, None],))
    nrm = float(np.sqrt((a * a).sum()))
    safe = nrm if nrm > 0 else 1.0
    return _emit("frobenius", np.asarray(nrm), (A,), lambda g: (a * (g / safe),))


def mse(pred: DiffMatrix, target) -> DiffMatrix:
    pred = _as_dm(pred)
    t = np.asarray(target.value if isinstance(target, DiffMatrix) else target, dtype=np.float64)
    if pred.shape != t.shape:
        raise ShapeError(f"mse shapes differ: {pred.shape} vs {t.shape}")
    diff = pred.value - t
    n = diff.size
    return _emit("mse", np.asarray((diff * diff).sum() / n), (pred,), lambda g: (g * 2.0 * diff / n,))


def softmax_cross_entropy(logits: DiffMatrix, labels) -> DiffMatrix:
    """Mean cross-entropy of ``(batch, classes)`` logits against integer labels."""
    z = logits.value
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if z.ndim == 1:
        z = z[None, :]
    if z.ndim != 2 or z.shape[0] != labels.shape[0]:
        raise ShapeError(f"logits {logits.shape} do not match {labels.shape[0]} labels")
    if labels.size and (labels.min() < 0 or labels.max() >= z.shape[1]):
        raise ShapeError("label out of range")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    b = z.shape[0]
    loss = -logp[np.arange(b), labels].mean()
    shape = logits.shape

    def back(g):
        p = np.exp(logp)
        p[np.arange(b), labels] -= 1.0
        return ((g * p / b).reshape(shape),)

    return _emit("softmax_cross_entropy", np.asarray(loss), (logits,), back)


# -- optimisation --------------------------------------------------------------


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_out, fan_in))


class AdamState:
    def __init__(self, params: Mapping[str, DiffMatrix], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}


def adam_step(params: Mapping[str, DiffMatrix], grads: Mapping[str, np.ndarray | None],
              state: AdamState) -> None:
    """One in-place Adam update; parameters without a gradient see a zero gradient."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {k} has shape {g.shape}, expected {p.shape}")
        m = state.m[k] = b1 * state.m[k] + (1.0 - b1) * g
        v = state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_FORMAT = "grouprep-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, params: Mapping[str, DiffMatrix | np.ndarray],
                    metadata: Mapping | None = None) -> None:
    """Write parameters as JSON: name -> {shape, row-major data}.

    Python's float repr is the shortest string that parses back to the same
    double, so the round trip is bit-exact.
    """
    body = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": dict(metadata or {}),
        "params": {},
    }
    for name, p in params.items():
        v = np.asarray(p.value if isinstance(p, DiffMatrix) else p, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise NonFiniteError(f"parameter {name} is not finite")
        body["params"][name] = {"shape": list(v.shape), "data": v.reshape(-1).tolist()}
    Path(path).write_text(json.dumps(body))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    body = json.loads(Path(path).read_text())
    if body.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a {CHECKPOINT_FORMAT} file")
    if body.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {body.get('version')}")
    params = {
        name: np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        for name, rec in body["params"].items()
    }
    return params, body["metadata"]
