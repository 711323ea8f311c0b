"""Dense float64 tensors with tape-based reverse-mode autodiff and Adam.

Ops are plain functions; anything computed under an active Tape can be
differentiated with backward(). No broadcasting beyond scalar-times-tensor
and bias-add, by design.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

_node_counter = itertools.count(1)


class NumericsError(ValueError):
    """Raised on shape mismatches and other misuse of tensor ops."""


class Tensor:
    """Flat row-major float64 storage with an explicit shape.

    Instances produced by public ops are treated as immutable; only the
    optimizer writes into parameter data in place.
    """

    __slots__ = ("data", "requires_grad", "node_id", "_traced")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_counter)
        self._traced = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise NumericsError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def to_list(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64), requires_grad=requires_grad)


def assert_finite(t: Tensor, context: str = "tensor") -> None:
    if not np.all(np.isfinite(t.data)):
        raise NumericsError(f"non-finite values in {context}")


# -----------------------------------------------------------------------------
# Tape
# -----------------------------------------------------------------------------


class Tape:
    """Execution-ordered record of ops for one backward pass.

    Records are appended in forward order, which is already topological:
    every op's inputs precede it. Confined to a single training step.
    """

    def __init__(self):
        self._records: list[tuple[int, object]] = []

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, back_fn) -> None:
        out._traced = True
        self._records.append((out.node_id, back_fn))

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _needs_grad(t: Tensor) -> bool:
    return t.requires_grad or t._traced


def _trace(out: Tensor, inputs: tuple[Tensor, ...], back_fn) -> Tensor:
    """Record back_fn on the active tape when any input participates in grad."""
    tape = _active_tape()
    if tape is not None and any(_needs_grad(t) for t in inputs):
        tape._record(out, back_fn)
    return out


def backward(tape: Tape, loss: Tensor, params=None) -> dict[Tensor, np.ndarray]:
    """Reverse sweep over the tape; returns leaf gradients keyed by Tensor.

    With `params` given, every listed parameter gets an entry (zeros when the
    loss never touched it).
    """
    if loss.data.size != 1:
        raise NumericsError(f"backward: loss must be scalar, got shape {loss.shape}")
    node_grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    leaf_grads: dict[Tensor, np.ndarray] = {}
    for out_id, back_fn in reversed(tape._records):
        g = node_grads.pop(out_id, None)
        if g is None:
            continue
        for inp, contrib in back_fn(g):
            if not _needs_grad(inp):
                continue
            if inp._traced:
                acc = node_grads.get(inp.node_id)
                node_grads[inp.node_id] = contrib if acc is None else acc + contrib
            else:
                acc = leaf_grads.get(inp)
                leaf_grads[inp] = contrib.copy() if acc is None else acc + contrib
    if params is not None:
        for p in params:
            leaf_grads.setdefault(p, np.zeros_like(p.data))
    return leaf_grads


# -----------------------------------------------------------------------------
# Ops
# -----------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a (m,k) @ b (k,n) -> (m,n)."""
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise NumericsError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise NumericsError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def back(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return _trace(out, (a, b), back)


def _is_scalar(t: Tensor) -> bool:
    return t.data.size == 1 and t.data.ndim <= 1


def add(a: Tensor, b: Tensor) -> Tensor:
    """Same-shape add, bias-add (..., n) + (n,), or scalar + tensor."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)

        def back(g):
            return [(a, g), (b, g)]

    elif b.data.ndim == 1 and a.data.ndim >= 1 and a.shape[-1] == b.shape[0]:
        out = Tensor(a.data + b.data)

        def back(g):
            axes = tuple(range(g.ndim - 1))
            return [(a, g), (b, g.sum(axis=axes) if axes else g)]

    elif _is_scalar(a) or _is_scalar(b):
        out = Tensor(a.data + b.data)

        def back(g):
            ga = g.sum().reshape(a.shape) if _is_scalar(a) and g.shape != a.shape else g
            gb = g.sum().reshape(b.shape) if _is_scalar(b) and g.shape != b.shape else g
            return [(a, ga), (b, gb)]

    else:
        raise NumericsError(f"add shape mismatch: {a.shape} + {b.shape}")
    return _trace(out, (a, b), back)


def neg(x: Tensor) -> Tensor:
    out = Tensor(-x.data)
    return _trace(out, (x,), lambda g: [(x, -g)])


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, neg(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise same-shape multiply or scalar times tensor."""
    if a.shape == b.shape:
        out = Tensor(a.data * b.data)

        def back(g):
            return [(a, g * b.data), (b, g * a.data)]

    elif _is_scalar(a) or _is_scalar(b):
        out = Tensor(a.data * b.data)

        def back(g):
            if _is_scalar(a) and g.shape != a.shape:
                ga = (g * b.data).sum().reshape(a.shape)
            else:
                ga = g * b.data
            if _is_scalar(b) and g.shape != b.shape:
                gb = (g * a.data).sum().reshape(b.shape)
            else:
                gb = g * a.data
            return [(a, ga), (b, gb)]

    else:
        raise NumericsError(f"mul shape mismatch: {a.shape} * {b.shape}")
    return _trace(out, (a, b), back)


def scale(x: Tensor, c: float) -> Tensor:
    """Multiply by a python constant (no gradient for c)."""
    out = Tensor(x.data * c)
    return _trace(out, (x,), lambda g: [(x, g * c)])


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = Tensor(np.where(mask, x.data, 0.0))
    return _trace(out, (x,), lambda g: [(x, g * mask)])


def sigmoid(x: Tensor) -> Tensor:
    # 1/(1+e^-x), computed stably on both tails
    y = np.where(x.data >= 0, 1.0 / (1.0 + np.exp(-x.data)),
                 np.exp(x.data) / (1.0 + np.exp(x.data)))
    out = Tensor(y)
    return _trace(out, (x,), lambda g: [(x, g * y * (1.0 - y))])


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along axis; each slice sums to 1."""
    nd = x.data.ndim
    if nd == 0 or not (-nd <= axis < nd):
        raise NumericsError(f"softmax: invalid axis {axis} for shape {x.shape}")
    if x.shape[axis] == 0:
        raise NumericsError("softmax: empty axis slice")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def back(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return [(x, y * (g - dot))]

    return _trace(out, (x,), back)


PROB_FLOOR = 1e-12


def safe_log(x: Tensor, floor: float = PROB_FLOOR) -> Tensor:
    """log(max(x, floor)); zero gradient where the floor clamps."""
    clamped = np.maximum(x.data, floor)
    out = Tensor(np.log(clamped))
    active = x.data > floor
    return _trace(out, (x,), lambda g: [(x, g * active / clamped)])


def reduce_sum(x: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(x.data.sum(axis=axis))

    def back(g):
        if axis is None:
            return [(x, np.broadcast_to(g, x.shape).copy())]
        return [(x, np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())]

    return _trace(out, (x,), back)


def reduce_mean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.data.size if axis is None else x.shape[axis]
    return scale(reduce_sum(x, axis=axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    return _trace(out, (x,), lambda g: [(x, g.reshape(x.shape))])


def transpose(x: Tensor) -> Tensor:
    if x.data.ndim != 2:
        raise NumericsError(f"transpose expects 2-D, got {x.shape}")
    out = Tensor(x.data.T)
    return _trace(out, (x,), lambda g: [(x, np.ascontiguousarray(g.T))])


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise NumericsError("concat: no tensors")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]

    def back(g):
        grads = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
        return list(zip(parts, (np.ascontiguousarray(gp) for gp in grads)))

    return _trace(out, tuple(parts), back)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along axis."""
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = Tensor(x.data[idx])

    def back(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return [(x, full)]

    return _trace(out, (x,), back)


def gather_rows(table: Tensor, ids) -> Tensor:
    """Row lookup: table (V,d), ids (T,) ints -> (T,d). Scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim != 1:
        raise NumericsError("gather_rows: ids must be 1-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise NumericsError("gather_rows: id out of range")
    out = Tensor(table.data[ids])

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return [(table, full)]

    return _trace(out, (table,), back)


def take_pairs(x: Tensor, rows, cols) -> Tensor:
    """Pick x[rows[i], cols[i]] -> (len(rows),)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.shape != cols.shape or rows.ndim != 1:
        raise NumericsError("take_pairs: rows/cols must be matching 1-D")
    out = Tensor(x.data[rows, cols])

    def back(g):
        full = np.zeros_like(x.data)
        np.add.at(full, (rows, cols), g)
        return [(x, full)]

    return _trace(out, (x,), back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of x (T,d) to zero mean / unit variance, then affine."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise NumericsError("layer_norm: gain/bias must match last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data)

    def back(g):
        lead = tuple(range(g.ndim - 1))
        g_bias = g.sum(axis=lead) if lead else g
        g_gain = (g * xhat).sum(axis=lead) if lead else g * xhat
        gx_hat = g * gain.data
        g_x = inv * (gx_hat
                     - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        return [(x, g_x), (gain, g_gain), (bias, g_bias)]

    return _trace(out, (x, gain, bias), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity at rate 0. Training only."""
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        raise NumericsError("dropout: rate must be < 1")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = Tensor(x.data * keep)
    return _trace(out, (x,), lambda g: [(x, g * keep)])


def cross_entropy(pred_dist: Tensor, target: int) -> Tensor:
    """-log(pred_dist[target]) on a 1-D probability vector, floored at 1e-12."""
    if pred_dist.data.ndim != 1:
        raise NumericsError("cross_entropy: pred_dist must be 1-D")
    if not 0 <= target < pred_dist.shape[0]:
        raise NumericsError(f"cross_entropy: target {target} out of range")
    p = max(float(pred_dist.data[target]), PROB_FLOOR)
    out = Tensor(-math.log(p))

    def back(g):
        full = np.zeros_like(pred_dist.data)
        if pred_dist.data[target] > PROB_FLOOR:
            full[target] = -float(np.asarray(g).sum()) / p
        return [(pred_dist, full)]

    return _trace(out, (pred_dist,), back)


# -----------------------------------------------------------------------------
# Adam
# -----------------------------------------------------------------------------


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, Tensor], AdamState]:
    """One bias-corrected Adam update, applied in place to params."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise NumericsError(f"adam_step: grad shape {g.shape} != param {p.shape} for {name}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        assert_finite(p, f"parameter {name} after adam step")
    return params, state
