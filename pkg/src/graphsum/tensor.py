"""Reverse-mode autodiff over dense f64 arrays, plus the bits that keep runs
reproducible: a seeded splitmix64 PRNG, uniform fan-in initialization, Adam, and
the named-tensor checkpoint archive (f32 payload).

numpy supplies array storage and BLAS; every backward rule lives here. Gradients
accumulate across backward() calls until explicitly zeroed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import json
import math
import struct

import numpy as np

from .errors import ContractError, NumericError, ShapeError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    """splitmix64: tiny, seedable, and identical across platforms.

    Scalar and vectorized draws share one state stream, so interleaving them is
    still deterministic.
    """

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """One double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_array(self, shape: tuple[int, ...] | int) -> np.ndarray:
        if isinstance(shape, int):
            shape = (shape,)
        n = int(np.prod(shape)) if shape else 1
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = (np.uint64(self.state) + steps * np.uint64(_GOLDEN)).astype(np.uint64)
        self.state = (self.state + _GOLDEN * n) & MASK64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        out = (z >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return out.reshape(shape)

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ContractError("randrange needs a positive bound")
        return self.next_u64() % n

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]


RNG = SplitMix64(0x5EED)


def seed_all(seed: int) -> None:
    """Reset the global PRNG; call once before building a model."""
    RNG.state = seed & MASK64


@dataclass
class TapeNode:
    """One recorded op: kind, input refs, and whatever forward saved for backward."""

    op: str
    inputs: tuple["Tensor", ...]
    saved: dict
    backward: Callable[[np.ndarray, dict], list[np.ndarray | None]]


class Tensor:
    """Dense f64 array plus (optionally) a tape node that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node: TapeNode | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, Tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad: np.ndarray | None = None) -> None:
        backward(self, grad)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def const(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _make(data: np.ndarray, op: str, inputs: tuple[Tensor, ...], saved: dict, bw) -> Tensor:
    out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
    if out.requires_grad:
        out.node = TapeNode(op, inputs, saved, bw)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad back down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g, s):
        return [_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)]

    return _make(a.data + b.data, "add", (a, b), {}, bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def bw(g, s):
        return [_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)]

    return _make(a.data - b.data, "sub", (a, b), {}, bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def bw(g, s):
        return [_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)]

    return _make(a.data * b.data, "mul", (a, b), {}, bw)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Componentwise min; ties send the gradient to the first argument."""
    keep = a.data <= b.data

    def bw(g, s):
        return [_unbroadcast(g * keep, a.shape), _unbroadcast(g * ~keep, b.shape)]

    return _make(np.minimum(a.data, b.data), "minimum", (a, b), {}, bw)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Componentwise max; ties send the gradient to the first argument."""
    keep = a.data >= b.data

    def bw(g, s):
        return [_unbroadcast(g * keep, a.shape), _unbroadcast(g * ~keep, b.shape)]

    return _make(np.maximum(a.data, b.data), "maximum", (a, b), {}, bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot matmul {a.shape} by {b.shape}")

    def bw(g, s):
        return [g @ b.data.T, a.data.T @ g]

    return _make(a.data @ b.data, "matmul", (a, b), {}, bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects 2-d, got {a.shape}")

    def bw(g, s):
        return [g.T]

    return _make(a.data.T.copy(), "transpose", (a,), {}, bw)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    def bw(g, s):
        return [g.reshape(a.shape)]

    return _make(a.data.reshape(shape), "reshape", (a,), {}, bw)


def relu(a: Tensor) -> Tensor:
    # subgradient at 0 is 0
    def bw(g, s):
        return [g * (a.data > 0)]

    return _make(np.maximum(a.data, 0.0), "relu", (a,), {}, bw)


def sigmoid(a: Tensor) -> Tensor:
    # exp of the non-positive branch only, so large |x| cannot overflow
    x = a.data
    e = np.exp(-np.abs(x))
    y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

    def bw(g, s):
        return [g * y * (1.0 - y)]

    return _make(y, "sigmoid", (a,), {}, bw)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def bw(g, s):
        return [g * (1.0 - y * y)]

    return _make(y, "tanh", (a,), {}, bw)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def bw(g, s):
        return [g * y]

    return _make(y, "exp", (a,), {}, bw)


def log(a: Tensor) -> Tensor:
    if np.any(a.data <= 0.0):
        raise NumericError("log needs strictly positive input")

    def bw(g, s):
        return [g / a.data]

    return _make(np.log(a.data), "log", (a,), {}, bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-d tensor, max-subtracted for stability."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects 2-d, got {a.shape}")
    if np.isnan(a.data).any():
        raise NumericError("softmax_rows got NaN input")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def bw(g, s):
        dot = (g * y).sum(axis=1, keepdims=True)
        return [y * (g - dot)]

    return _make(y, "softmax_rows", (a,), {}, bw)


def reduce_sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    def bw(g, s):
        if axis is None:
            return [np.full(a.shape, float(g))]
        gg = g if keepdims else np.expand_dims(g, axis)
        return [np.broadcast_to(gg, a.shape).copy()]

    return _make(a.data.sum(axis=axis, keepdims=keepdims), "reduce_sum", (a,), {}, bw)


def max_over_rows(a: Tensor) -> Tensor:
    """Column-wise max of an (m, d) tensor; gradient routes to the first argmax row."""
    if a.data.ndim != 2 or a.shape[0] == 0:
        raise ShapeError(f"max_over_rows expects nonempty 2-d, got {a.shape}")
    idx = a.data.argmax(axis=0)

    def bw(g, s):
        z = np.zeros_like(a.data)
        z[idx, np.arange(a.shape[1])] = g
        return [z]

    return _make(a.data.max(axis=0), "max_over_rows", (a,), {"argmax": idx}, bw)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ContractError("concat of zero tensors")
    sizes = [p.shape[axis] for p in parts]

    def bw(g, s):
        return list(np.split(g, np.cumsum(sizes)[:-1], axis=axis))

    return _make(
        np.concatenate([p.data for p in parts], axis=axis), "concat", tuple(parts), {}, bw
    )


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows of a 2-d tensor; backward scatter-adds (repeats accumulate)."""
    index = np.asarray(idx, dtype=np.int64)
    if index.ndim != 1 or a.data.ndim != 2:
        raise ShapeError(f"gather_rows expects 2-d tensor and 1-d index, got {a.shape}")
    if index.size and (index.min() < 0 or index.max() >= a.shape[0]):
        raise ContractError(f"gather_rows index out of range for {a.shape[0]} rows")

    def bw(g, s):
        z = np.zeros_like(a.data)
        np.add.at(z, index, g)
        return [z]

    return _make(a.data[index], "gather_rows", (a,), {"idx": index}, bw)


def gather_elems(a: Tensor, rows, cols) -> Tensor:
    """Pick a[r, c] per (r, c) pair into a 1-d tensor."""
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    if a.data.ndim != 2 or r.shape != c.shape or r.ndim != 1:
        raise ShapeError(f"gather_elems expects 2-d tensor and aligned 1-d indices, got {a.shape}")

    def bw(g, s):
        z = np.zeros_like(a.data)
        np.add.at(z, (r, c), g)
        return [z]

    return _make(a.data[r, c], "gather_elems", (a,), {}, bw)


def scatter_rows_add(values: Tensor, rows, num_rows: int) -> Tensor:
    """Sum (p, d) value rows into an (num_rows, d) tensor at the given row ids."""
    r = np.asarray(rows, dtype=np.int64)
    if values.data.ndim != 2 or r.ndim != 1 or r.shape[0] != values.shape[0]:
        raise ShapeError(f"scatter_rows_add got values {values.shape} and {r.shape} rows")
    out = np.zeros((num_rows, values.shape[1]), dtype=np.float64)
    np.add.at(out, r, values.data)

    def bw(g, s):
        return [g[r]]

    return _make(out, "scatter_rows_add", (values,), {}, bw)


def scatter_elems(values: Tensor, rows, cols, shape: tuple[int, int]) -> Tensor:
    """Sum scalar values into a fresh 2-d tensor at (r, c) positions."""
    r = np.asarray(rows, dtype=np.int64)
    c = np.asarray(cols, dtype=np.int64)
    if values.data.ndim != 1 or r.shape != values.data.shape or c.shape != values.data.shape:
        raise ShapeError(f"scatter_elems got values {values.shape}, rows {r.shape}")
    out = np.zeros(shape, dtype=np.float64)
    np.add.at(out, (r, c), values.data)

    def bw(g, s):
        return [g[r, c]]

    return _make(out, "scatter_elems", (values,), {}, bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous column slice of a 2-d tensor."""
    if a.data.ndim != 2 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols [{start}:{stop}] does not fit {a.shape}")

    def bw(g, s):
        z = np.zeros_like(a.data)
        z[:, start:stop] = g
        return [z]

    return _make(a.data[:, start:stop].copy(), "slice_cols", (a,), {}, bw)


def slice_axis0(a: Tensor, i: int) -> Tensor:
    """a[i], dropping axis 0."""
    if not (0 <= i < a.shape[0]):
        raise ContractError(f"slice_axis0 index {i} out of range for {a.shape}")

    def bw(g, s):
        z = np.zeros_like(a.data)
        z[i] = g
        return [z]

    return _make(a.data[i].copy(), "slice_axis0", (a,), {"i": i}, bw)


def cross_entropy_row(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] for a single logit row, fused for stability."""
    flat = logits.data.reshape(-1)
    if logits.data.size != flat.shape[0] or logits.data.ndim > 2:
        raise ShapeError(f"cross_entropy_row expects one row, got {logits.shape}")
    if not (0 <= target < flat.shape[0]):
        raise ContractError(f"target {target} outside vocabulary of {flat.shape[0]}")
    m = flat.max()
    lse = m + math.log(np.exp(flat - m).sum())
    loss = lse - flat[target]

    def bw(g, s):
        p = np.exp(flat - lse)
        p[target] -= 1.0
        return [(p * float(g)).reshape(logits.shape)]

    return _make(np.asarray(loss), "cross_entropy_row", (logits,), {}, bw)


def lstm_seq(
    x_seq: Tensor,
    w: Tensor,
    u: Tensor,
    b: Tensor,
    mask: np.ndarray,
    reverse: bool = False,
) -> Tensor:
    """Run one LSTM direction over a padded (L, n, input) batch.

    mask is (L, n) with 1.0 on real steps; masked steps carry state through, so
    states[L-1] holds each row's last real forward state and states[0] the
    backward-direction final state. Gate layout along the last axis: i, f, g, o.
    Returns all hidden states as (L, n, h).
    """
    L, n, d_in = x_seq.shape
    h4 = w.shape[1]
    if h4 % 4 or w.shape[0] != d_in or u.shape[1] != h4 or u.shape[0] * 4 != h4:
        raise ShapeError(f"lstm_seq weights {w.shape}/{u.shape} do not fit input {x_seq.shape}")
    hdim = h4 // 4
    order = range(L - 1, -1, -1) if reverse else range(L)
    h = np.zeros((n, hdim))
    c = np.zeros((n, hdim))
    states = np.zeros((L, n, hdim))
    cells = np.zeros((L, n, hdim))
    gates = np.zeros((L, n, 4 * hdim))
    tanh_c = np.zeros((L, n, hdim))
    prev_h = np.zeros((L, n, hdim))
    prev_c = np.zeros((L, n, hdim))
    for t in order:
        prev_h[t], prev_c[t] = h, c
        z = x_seq.data[t] @ w.data + h @ u.data + b.data
        i = 1.0 / (1.0 + np.exp(-z[:, :hdim]))
        f = 1.0 / (1.0 + np.exp(-z[:, hdim : 2 * hdim]))
        g = np.tanh(z[:, 2 * hdim : 3 * hdim])
        o = 1.0 / (1.0 + np.exp(-z[:, 3 * hdim :]))
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = mask[t][:, None]
        h = m * h_new + (1.0 - m) * h
        c = m * c_new + (1.0 - m) * c
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        tanh_c[t], cells[t] = tc, c_new
        states[t] = h

    def bw(grad, s):
        dx = np.zeros_like(x_seq.data)
        dw = np.zeros_like(w.data)
        du = np.zeros_like(u.data)
        db = np.zeros_like(b.data)
        dH = np.zeros((n, hdim))
        dC = np.zeros((n, hdim))
        for t in reversed(list(order)):
            m = mask[t][:, None]
            i = gates[t][:, :hdim]
            f = gates[t][:, hdim : 2 * hdim]
            g_ = gates[t][:, 2 * hdim : 3 * hdim]
            o = gates[t][:, 3 * hdim :]
            dh_t = grad[t] + dH
            dh_new = m * dh_t
            dc_new = m * dC
            do = dh_new * tanh_c[t]
            dc_new = dc_new + dh_new * o * (1.0 - tanh_c[t] ** 2)
            df = dc_new * prev_c[t]
            di = dc_new * g_
            dg = dc_new * i
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g_ * g_),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            dx[t] = dz @ w.data.T
            dw += x_seq.data[t].T @ dz
            du += prev_h[t].T @ dz
            db += dz.sum(axis=0)
            dH = dz @ u.data.T + (1.0 - m) * dh_t
            dC = dc_new * f + (1.0 - m) * dC
        return [dx, dw, du, db]

    return _make(states, "lstm_seq", (x_seq, w, u, b), {"reverse": reverse}, bw)


def dropout(x: Tensor, p: float, rng: SplitMix64, training: bool) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not training or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout rate {p} outside [0, 1)")
    keep = (rng.uniform_array(x.shape) >= p).astype(np.float64) / (1.0 - p)
    return mul(x, const(keep))


def backward(loss: Tensor, seed_grad: np.ndarray | None = None) -> None:
    """Reverse-accumulate d(loss)/d(tensor) into .grad of every requires_grad tensor.

    Calling twice on the same tape without zeroing doubles the grads.
    """
    if seed_grad is None:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        seed_grad = np.ones_like(loss.data)
    # iterative post-order topo sort; recursion depth is unbounded on long tapes
    topo: list[Tensor] = []
    by_id: dict[int, Tensor] = {id(loss): loss}
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, done = stack.pop()
        if done:
            topo.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        by_id[id(t)] = t
        if t.node is None:
            continue
        stack.append((t, True))
        for inp in t.node.inputs:
            if inp.requires_grad and id(inp) not in seen:
                stack.append((inp, False))
    flow: dict[int, np.ndarray] = {id(loss): np.asarray(seed_grad, dtype=np.float64).copy()}
    for t in reversed(topo):
        g = flow.get(id(t))
        if g is None:
            continue
        grads = t.node.backward(g, t.node.saved)
        for inp, gi in zip(t.node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            flow[key] = flow[key] + gi if key in flow else gi
    for key, g in flow.items():
        t = by_id[key]
        if t.requires_grad:
            t.grad = np.asarray(g, dtype=np.float64) if t.grad is None else t.grad + g


def uniform_param(shape: tuple[int, ...], rng: SplitMix64 | None = None) -> Tensor:
    """Learned matrix init: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), fan_in = rows."""
    r = rng or RNG
    fan_in = shape[0]
    bound = 1.0 / math.sqrt(fan_in)
    data = (r.uniform_array(shape) * 2.0 - 1.0) * bound
    return Tensor(data, requires_grad=True)


def zeros_param(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Adam:
    """Adam with bias correction; step() updates in place and zeroes grads."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"adam step with no gradient on {name}")
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / (1.0 - self.beta1**self.t)
            v_hat = self.v[name] / (1.0 - self.beta2**self.t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad = None


ARCHIVE_MAGIC = b"GSARCHV1"
ARCHIVE_VERSION = 1


def save_archive(path: str, tensors: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write a named-tensor archive: JSON manifest + little-endian f32 payload."""
    entries = []
    payload = bytearray()
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64).astype("<f4")
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": "f32",
                "offset": len(payload),
            }
        )
        payload.extend(arr.tobytes(order="C"))
    manifest = {
        "format_version": ARCHIVE_VERSION,
        "extra": extra or {},
        "tensors": entries,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(ARCHIVE_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_archive(path: str) -> tuple[dict[str, np.ndarray], dict]:
    """Read an archive back; tensors come out as f32 arrays, caller promotes."""
    from .errors import DataError

    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != ARCHIVE_MAGIC:
            raise DataError(f"{path}: not a checkpoint archive")
        (mlen,) = struct.unpack("<I", fh.read(4))
        manifest = json.loads(fh.read(mlen).decode("utf-8"))
        if manifest.get("format_version") != ARCHIVE_VERSION:
            raise DataError(f"{path}: unsupported archive version {manifest.get('format_version')}")
        payload = fh.read()
    out: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        out[entry["name"]] = arr.reshape(shape).copy()
    return out, manifest.get("extra", {})
