"""Reverse-mode differentiation over dense 2-D arrays.

Small and closed by design: matrix product, broadcast add/multiply, relu,
concatenation, layer normalization, row-wise softmax, gather, scatter-add,
cross-entropy and sum/mean reductions, which is everything the encoders and
decoder compose from.  Arithmetic is 32-bit by default; gradient checking
builds the same graphs over 64-bit parameters.

Calling :func:`backward` twice without zeroing accumulates gradients
additively; that is the documented contract, not a bug.
"""

from __future__ import annotations

import struct
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractError, DataError, ShapeError

Array = np.ndarray


class Value:
    """A 2-D array node on the tape, with a gradient accumulator.

    The gradient buffer is materialized on first touch so that the many
    intermediate nodes a forward pass creates cost nothing until the
    backward sweep actually reaches them.
    """

    __slots__ = ("data", "_grad", "_parents", "_backward")

    def __init__(self, data, parents: tuple = (), backward: Callable | None = None):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise ShapeError(f"Value requires a 2-D array, got shape {arr.shape}")
        self.data = arr
        self._grad: Array | None = None
        self._parents = parents
        self._backward = backward

    @property
    def grad(self) -> Array:
        if self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value: Array) -> None:
        self._grad = value

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __repr__(self):
        return f"Value(shape={self.shape}, dtype={self.data.dtype})"

    def __matmul__(self, other):
        return matmul(self, as_value(other))

    def __add__(self, other):
        return add(self, as_value(other))

    def __mul__(self, other):
        return mul(self, as_value(other))


def as_value(x) -> Value:
    """Wrap raw array data as a constant tape node."""
    if isinstance(x, Value):
        return x
    arr = np.asarray(x)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    return Value(arr)


def _unbroadcast(grad: Array, shape: tuple[int, int]) -> Array:
    """Reduce a gradient back to the shape of a broadcast operand."""
    out = grad
    if shape[0] == 1 and grad.shape[0] > 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and grad.shape[1] > 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _broadcastable(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return all(x == y or x == 1 or y == 1 for x, y in zip(a, b))


def _operand(x) -> tuple[Array, "Value | None"]:
    """Split an operand into raw data and the tracked node (None = constant)."""
    if isinstance(x, Value):
        return x.data, x
    arr = np.asarray(x)
    return arr, None


def add(a, b) -> Value:
    """Elementwise sum; operands may be constants (plain arrays)."""
    da, va = _operand(a)
    db, vb = _operand(b)
    if not _broadcastable(da.shape, db.shape):
        raise ShapeError(f"cannot add shapes {da.shape} and {db.shape}")
    out = Value(da + db, tuple(v for v in (va, vb) if v is not None))

    def bwd(g: Array):
        if va is not None:
            va.grad += _unbroadcast(g, da.shape)
        if vb is not None:
            vb.grad += _unbroadcast(g, db.shape)

    out._backward = bwd
    return out


def mul(a, b) -> Value:
    """Elementwise product with row/column broadcasting; constants allowed."""
    da, va = _operand(a)
    db, vb = _operand(b)
    if not _broadcastable(da.shape, db.shape):
        raise ShapeError(f"cannot multiply shapes {da.shape} and {db.shape}")
    out = Value(da * db, tuple(v for v in (va, vb) if v is not None))

    def bwd(g: Array):
        if va is not None:
            va.grad += _unbroadcast(g * db, da.shape)
        if vb is not None:
            vb.grad += _unbroadcast(g * da, db.shape)

    out._backward = bwd
    return out


def matmul(a, b) -> Value:
    da, va = _operand(a)
    db, vb = _operand(b)
    if da.shape[1] != db.shape[0]:
        raise ShapeError(f"inner dimensions disagree: {da.shape} @ {db.shape}")
    out = Value(da @ db, tuple(v for v in (va, vb) if v is not None))

    def bwd(g: Array):
        if va is not None:
            va.grad += g @ db.T
        if vb is not None:
            vb.grad += da.T @ g

    out._backward = bwd
    return out


def transpose(a: Value) -> Value:
    out = Value(a.data.T.copy(), (a,))

    def bwd(g: Array):
        a.grad += g.T

    out._backward = bwd
    return out


def relu(a: Value) -> Value:
    mask = a.data > 0
    out = Value(np.where(mask, a.data, 0), (a,))

    def bwd(g: Array):
        a.grad += g * mask

    out._backward = bwd
    return out


def concat(parts: Sequence[Value], axis: int = 1) -> Value:
    """Concatenate along rows (axis=0) or columns (axis=1)."""
    if axis not in (0, 1):
        raise ShapeError(f"axis must be 0 or 1, got {axis}")
    parts = list(parts)
    if not parts:
        raise ContractError("concat of zero parts")
    out = Value(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.shape[axis] for p in parts]

    def bwd(g: Array):
        offset = 0
        for p, size in zip(parts, sizes):
            sl = (slice(offset, offset + size), slice(None)) if axis == 0 \
                else (slice(None), slice(offset, offset + size))
            p.grad += g[sl]
            offset += size

    out._backward = bwd
    return out


def rowwise_softmax(a: Value) -> Value:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Value(y, (a,))

    def bwd(g: Array):
        dot = (g * y).sum(axis=1, keepdims=True)
        a.grad += (g - dot) * y

    out._backward = bwd
    return out


def layer_norm(x: Value, gain: Value, bias: Value, eps: float = 1e-5) -> Value:
    """Per-row normalization followed by an affine map; gain/bias are (1, d)."""
    if gain.shape != (1, x.shape[1]) or bias.shape != (1, x.shape[1]):
        raise ShapeError(f"gain/bias must be (1, {x.shape[1]}) for input {x.shape}")
    mu = x.data.mean(axis=1, keepdims=True)
    var = x.data.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.data.dtype))
    xhat = (x.data - mu) * inv
    out = Value(xhat * gain.data + bias.data, (x, gain, bias))

    def bwd(g: Array):
        gx = g * gain.data
        m1 = gx.mean(axis=1, keepdims=True)
        m2 = (gx * xhat).mean(axis=1, keepdims=True)
        x.grad += (gx - m1 - xhat * m2) * inv
        gain.grad += (g * xhat).sum(axis=0, keepdims=True)
        bias.grad += g.sum(axis=0, keepdims=True)

    out._backward = bwd
    return out


def gather(x: Value, rows: Sequence[int] | Array) -> Value:
    """Select rows of ``x`` (with repetition) by index."""
    idx = np.asarray(rows, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"row index list must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise IndexError(f"row index out of range for {x.shape[0]} rows")
    out = Value(x.data[idx], (x,))

    def bwd(g: Array):
        buf = x.grad
        if idx.size <= 4:  # np.add.at is slow; tiny gathers dominate decoding
            for k in range(idx.size):
                buf[idx[k]] += g[k]
        else:
            np.add.at(buf, idx, g)

    out._backward = bwd
    return out


def scatter_add(messages: Value, dst: Sequence[int] | Array, num_rows: int) -> Value:
    """Sum message rows into their destination rows; absent rows stay zero."""
    idx = np.asarray(dst, dtype=np.int64)
    if idx.ndim != 1 or idx.size != messages.shape[0]:
        raise ShapeError(f"need one destination per message row, got {idx.shape} "
                         f"for {messages.shape[0]} rows")
    if idx.size and (idx.min() < 0 or idx.max() >= num_rows):
        raise IndexError(f"destination index out of range for {num_rows} rows")
    acc = np.zeros((num_rows, messages.shape[1]), dtype=messages.data.dtype)
    np.add.at(acc, idx, messages.data)
    out = Value(acc, (messages,))

    def bwd(g: Array):
        messages.grad += g[idx]

    out._backward = bwd
    return out


def total_sum(a: Value) -> Value:
    out = Value(a.data.sum(dtype=a.data.dtype).reshape(1, 1), (a,))

    def bwd(g: Array):
        a.grad += g[0, 0]

    out._backward = bwd
    return out


def mean(a: Value) -> Value:
    n = a.data.size
    out = Value(a.data.sum(dtype=a.data.dtype).reshape(1, 1) / n, (a,))

    def bwd(g: Array):
        a.grad += g[0, 0] / n

    out._backward = bwd
    return out


def cross_entropy(logits: Value, target: int) -> Value:
    """Negative log softmax probability of ``target`` for a (1, n) logit row."""
    if logits.shape[0] != 1:
        raise ShapeError(f"logits must be a single row, got {logits.shape}")
    n = logits.shape[1]
    if not 0 <= target < n:
        raise IndexError(f"target {target} out of range for {n} classes")
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    loss = (lse - shifted[0, target]).reshape(1, 1)
    probs = np.exp(shifted - lse)
    out = Value(loss, (logits,))

    def bwd(g: Array):
        delta = probs.copy()
        delta[0, target] -= 1
        logits.grad += g[0, 0] * delta

    out._backward = bwd
    return out


def backward(root: Value) -> None:
    """Reverse sweep from a scalar root; gradients accumulate into ``.grad``."""
    if root.shape != (1, 1):
        raise ContractError(f"backward requires a scalar root, got shape {root.shape}")
    order: list[Value] = []
    seen: set[int] = set()
    stack: list[tuple[Value, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    root.grad = root.grad + np.ones_like(root.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)


class ParamStore:
    """Named parameters with stable iteration order and binary checkpoints.

    Checkpoint layout: an 8-byte magic/version header, a record count, then
    per record the UTF-8 name, the (rows, cols) shape and row-major 32-bit
    little-endian values.  Round trips are byte-exact.
    """

    MAGIC = b"HYRELP1\n"

    def __init__(self):
        self._params: dict[str, Value] = {}

    def add(self, name: str, data) -> Value:
        if name in self._params:
            raise ContractError(f"duplicate parameter name {name!r}")
        v = Value(np.array(data, copy=True))
        self._params[name] = v
        return v

    def __getitem__(self, name: str) -> Value:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def values(self) -> list[Value]:
        return list(self._params.values())

    def items(self) -> list[tuple[str, Value]]:
        return list(self._params.items())

    def size(self) -> int:
        return sum(v.data.size for v in self._params.values())

    def zero_grads(self) -> None:
        for v in self._params.values():
            v._grad = None

    def to_bytes(self) -> bytes:
        chunks = [self.MAGIC, struct.pack("<I", len(self._params))]
        for name, v in self._params.items():
            encoded = name.encode("utf-8")
            rows, cols = v.shape
            chunks.append(struct.pack("<H", len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack("<II", rows, cols))
            chunks.append(np.ascontiguousarray(v.data, dtype="<f4").tobytes())
        return b"".join(chunks)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ParamStore":
        if blob[:8] != cls.MAGIC:
            raise DataError("not a parameter checkpoint (bad magic header)")
        store = cls()
        offset = 8
        (count,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        for _ in range(count):
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            rows, cols = struct.unpack_from("<II", blob, offset)
            offset += 8
            nbytes = rows * cols * 4
            arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f4").reshape(rows, cols)
            offset += nbytes
            store.add(name, arr.astype(np.float32))
        return store

    @classmethod
    def load(cls, path) -> "ParamStore":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class Adam:
    """Adam update with bias correction over a fixed parameter list."""

    def __init__(self, params: Iterable[Value], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1t = 1 - self.beta1 ** self.t
        b2t = 1 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            p.data -= (self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)).astype(p.data.dtype)


def clip_global_norm(params: Iterable[Value], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    params = list(params)
    total = float(sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params))
    norm = total ** 0.5
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


def finite_difference(loss_fn: Callable[[], Value], param: Value, h: float = 1e-4) -> Array:
    """Central finite-difference gradient of ``loss_fn`` w.r.t. one parameter.

    Uses forward evaluations only, so it stays independent of the reverse
    sweep it is used to check.
    """
    grad = np.zeros_like(param.data, dtype=np.float64)
    for idx in np.ndindex(*param.data.shape):
        orig = param.data[idx]
        param.data[idx] = orig + h
        hi = float(loss_fn().data[0, 0])
        param.data[idx] = orig - h
        lo = float(loss_fn().data[0, 0])
        param.data[idx] = orig
        grad[idx] = (hi - lo) / (2 * h)
    return grad


def check_gradients(loss_fn: Callable[[], Value], params: Mapping[str, Value],
                    h: float = 1e-4, rtol: float = 1e-3,
                    floor: float = 1e-6) -> dict[str, float]:
    """Max relative error between analytic and finite-difference gradients.

    Analytic gradients come from one backward pass of ``loss_fn``; entries
    where both gradients are below ``floor`` count as exact.
    """
    for p in params.values():
        p._grad = None
    backward(loss_fn())
    analytic = {name: p.grad.copy() for name, p in params.items()}
    report: dict[str, float] = {}
    for name, p in params.items():
        numeric = finite_difference(loss_fn, p, h)
        denom = np.maximum(np.maximum(np.abs(analytic[name]), np.abs(numeric)), floor)
        report[name] = float((np.abs(analytic[name] - numeric) / denom).max()) \
            if p.data.size else 0.0
    return report
