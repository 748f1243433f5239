"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Usage::

    with Tape() as tape:
        w = tape.watch(w0)
        loss = ad.sum(ad.gelu(ad.matmul(x, w)))
    grads = backward(tape, np.ones(()), loss.node)

Only operands of identical shape combine elementwise; scalar scaling is the
sole form of broadcasting. Reshape explicitly otherwise.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import wavelet as wv
from .errors import ContractError, NumericError, ShapeError

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715

_state = threading.local()


class Tensor:
    """Immutable float64 array, optionally bound to a node on a tape."""

    __slots__ = ("data", "node", "tape")

    def __init__(self, data, *, _trusted=False):
        # results of recorded ops are fresh arrays and need no defensive copy
        arr = np.asarray(data, dtype=np.float64) if _trusted else np.array(data, dtype=np.float64)
        if not _trusted and not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains NaN or Inf")
        arr.setflags(write=False)
        self.data = arr
        self.node = None
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data.copy()

    def __repr__(self):
        tag = f", node={self.node}" if self.node is not None else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


@dataclass
class Node:
    op: str
    inputs: tuple
    vjp: Callable | None
    shape: tuple


@dataclass
class Tape:
    """Ordered record of differentiable operations (single writer)."""

    nodes: list = field(default_factory=list)

    def __enter__(self):
        stack = _stack()
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False

    def watch(self, x) -> Tensor:
        """Register ``x`` as a leaf and return a tensor bound to this tape."""
        src = as_tensor(x)
        t = Tensor(src.data, _trusted=True)
        t.node = len(self.nodes)
        t.tape = self
        self.nodes.append(Node("leaf", (), None, t.shape))
        return t

    def leaves(self):
        return [i for i, n in enumerate(self.nodes) if n.op == "leaf"]

    def release(self):
        """Drop recorded nodes.

        Nodes hold closures over their input tensors, which point back at the
        tape; the cycle keeps every intermediate array alive until the cyclic
        collector runs, which numpy allocations do not trigger.
        """
        self.nodes.clear()


def _stack():
    if not hasattr(_state, "stack"):
        _state.stack = []
    return _state.stack


def active_tape() -> Tape | None:
    stack = _stack()
    return stack[-1] if stack else None


def _record(op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    out = Tensor(value, _trusted=True)
    tape = active_tape()
    if tape is None:
        return out
    ids = tuple(t.node if t.tape is tape else None for t in inputs)
    if all(i is None for i in ids):
        return out
    out.node = len(tape.nodes)
    out.tape = tape
    tape.nodes.append(Node(op, ids, vjp, out.shape))
    return out


def backward(tape: Tape, seed, root: int) -> dict:
    """Propagate ``seed`` from node ``root`` back to every earlier node.

    Returns a mapping node id -> adjoint array. Every leaf recorded before
    ``root`` receives an entry (zeros when it does not influence the root).
    """
    if not isinstance(root, (int, np.integer)) or not 0 <= root < len(tape.nodes):
        raise KeyError(f"unknown root node id {root!r}")
    seed = np.asarray(getattr(seed, "data", seed), dtype=np.float64)
    if seed.shape != tape.nodes[root].shape:
        raise ShapeError(f"seed shape {seed.shape} != root shape {tape.nodes[root].shape}")
    adj = {root: seed.copy()}
    for i in range(root, -1, -1):
        g = adj.get(i)
        node = tape.nodes[i]
        if g is None or node.vjp is None:
            continue
        grads = node.vjp(g)
        for j, gj in zip(node.inputs, grads):
            if j is None or gj is None:
                continue
            if j in adj:
                adj[j] = adj[j] + gj
            else:
                adj[j] = gj
    for i, node in enumerate(tape.nodes[: root + 1]):
        if node.op == "leaf" and i not in adj:
            adj[i] = np.zeros(node.shape)
    return adj


def grad(fn: Callable, *args):
    """Value and gradients of scalar ``fn(*args)`` with respect to every arg."""
    with Tape() as tape:
        xs = [tape.watch(a) for a in args]
        y = fn(*xs)
    if y.size != 1:
        raise ContractError(f"grad needs a scalar output, got shape {y.shape}")
    if y.node is None:
        return float(y.data), [np.zeros(x.shape) for x in xs]
    adj = backward(tape, np.ones(y.shape), y.node)
    return float(y.data.reshape(())), [adj[x.node] for x in xs]


def gradcheck(fn: Callable, point, eps: float = 1e-6) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |analytic|)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.array(getattr(point, "data", point), dtype=np.float64)
    _, (g,) = grad(fn, x0)
    flat = x0.ravel()
    num = np.empty(flat.size)

    def f(v):
        out = fn(Tensor(v.reshape(x0.shape)))
        if not isinstance(out, Tensor) or out.size != 1:
            raise ContractError("gradcheck needs fn to return a scalar Tensor")
        return float(out.data.reshape(()))

    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += eps
        xm[i] -= eps
        num[i] = (f(xp) - f(xm)) / (2 * eps)
    ga = g.ravel()
    return float(np.max(np.abs(ga - num) / np.maximum(1.0, np.abs(ga)))) if ga.size else 0.0


# -- operation catalog -------------------------------------------------------


def _same_shape(op, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("add", a, b)
    return _record("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("sub", a, b)
    return _record("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _same_shape("mul_elementwise", a, b)
    av, bv = a.data, b.data
    return _record("mul_elementwise", av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return _record("scale", c * x.data, (x,), lambda g: (c * g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data
    return _record("matmul", av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    try:
        value = x.data.reshape(shape)
    except ValueError as err:
        raise ShapeError(f"cannot reshape {x.shape} to {shape}") from err
    src = x.shape
    return _record("reshape", value, (x,), lambda g: (g.reshape(src),))


def concat_lastdim(parts: Sequence) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    lead = parts[0].shape[:-1]
    for p in parts[1:]:
        if p.shape[:-1] != lead:
            raise ShapeError(f"concat_lastdim: leading dims differ {lead} vs {p.shape[:-1]}")
    sizes = np.cumsum([p.shape[-1] for p in parts])[:-1]
    value = np.concatenate([p.data for p in parts], axis=-1)
    return _record(
        "concat_lastdim", value, parts, lambda g: tuple(np.split(g, sizes, axis=-1))
    )


def slice_(x, key) -> Tensor:
    """Basic (slice-only) indexing; the adjoint scatters into zeros."""
    x = as_tensor(x)
    key = tuple(key)
    if not all(isinstance(k, slice) for k in key):
        raise ContractError("slice_ accepts a tuple of slice objects only")
    src = x.shape

    def vjp(g):
        out = np.zeros(src)
        out[key] = g
        return (out,)

    return _record("slice", x.data[key], (x,), vjp)


def pad_zeros(x, shape) -> Tensor:
    """Embed ``x`` at the origin of a zero tensor of ``shape`` (adjoint of a leading slice)."""
    x = as_tensor(x)
    shape = tuple(shape)
    if len(shape) != x.data.ndim or any(s < t for s, t in zip(shape, x.shape)):
        raise ShapeError(f"cannot embed {x.shape} into {shape}")
    key = tuple(slice(0, n) for n in x.shape)
    value = np.zeros(shape)
    value[key] = x.data
    return _record("pad_zeros", value, (x,), lambda g: (g[key].copy(),))


def sum_(x) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    return _record("sum", np.sum(x.data), (x,), lambda g: (np.full(src, float(g)),))


def mean(x) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    n = x.size
    return _record("mean", np.mean(x.data), (x,), lambda g: (np.full(src, float(g) / n),))


def gelu_value(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_A * x * x * x)))


def gelu(x) -> Tensor:
    """GeLU, tanh approximation."""
    x = as_tensor(x)
    v = x.data.reshape(-1)  # 1D so in-place ufuncs also work for 0-d inputs
    v2 = v * v
    t = v2 * _GELU_A
    t += 1.0
    t *= v
    t *= _GELU_C
    np.tanh(t, out=t)
    value = t + 1.0
    value *= v
    value *= 0.5
    value = value.reshape(x.shape)

    def vjp(g):
        # d/dv = 0.5 (1 + t) + 0.5 c v (1 - t^2)(1 + 3 a v^2), built in place
        d = t * t
        np.subtract(1.0, d, out=d)
        d *= v
        d *= 0.5 * _GELU_C
        u = v2 * (3 * _GELU_A)
        u += 1.0
        d *= u
        d += 0.5
        u = t * 0.5
        d += u
        d *= g.reshape(-1)
        return (d.reshape(g.shape),)

    return _record("gelu", value, (x,), vjp)


def conv1x1_channels(x, weight, bias=None) -> Tensor:
    """Pointwise linear map over the last axis: ``x @ weight + bias``."""
    x, weight = as_tensor(x), as_tensor(weight)
    cin, cout = weight.shape
    if x.shape[-1] != cin:
        raise ShapeError(f"conv1x1_channels: input has {x.shape[-1]} channels, weight expects {cin}")
    xv, wv_ = x.data, weight.data
    flat = xv.reshape(-1, cin)
    value = (flat @ wv_).reshape(x.shape[:-1] + (cout,))
    inputs = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise ShapeError(f"conv1x1_channels: bias shape {bias.shape} != ({cout},)")
        value = value + bias.data
        inputs.append(bias)

    def vjp(g):
        g2 = g.reshape(-1, cout)
        grads = [(g2 @ wv_.T).reshape(xv.shape), flat.T @ g2]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return _record("conv1x1_channels", value, inputs, vjp)


def channel_mix(x, weight) -> Tensor:
    """Per-location channel mixing: ``out[b, s.., o] = sum_i x[b, s.., i] * w[i, o, s..]``."""
    x, weight = as_tensor(x), as_tensor(weight)
    B, *S, cin = x.shape
    cin_w, cout, *S_w = weight.shape
    if cin_w != cin or tuple(S_w) != tuple(S):
        raise ShapeError(f"channel_mix: input {x.shape} incompatible with weights {weight.shape}")
    s = int(np.prod(S)) if S else 1
    xs = x.data.reshape(B, s, cin).transpose(1, 0, 2)  # [s, B, cin]
    ws = weight.data.reshape(cin, cout, s).transpose(2, 0, 1)  # [s, cin, cout]
    value = np.matmul(xs, ws).transpose(1, 0, 2).reshape(B, *S, cout)

    def vjp(g):
        gs = g.reshape(B, s, cout).transpose(1, 0, 2)  # [s, B, cout]
        gx = np.matmul(gs, ws.transpose(0, 2, 1)).transpose(1, 0, 2).reshape(x.shape)
        gw = np.matmul(xs.transpose(0, 2, 1), gs).transpose(1, 2, 0).reshape(weight.shape)
        return gx, gw

    return _record("channel_mix", value, (x, weight), vjp)


def dwt_hook(x, wavelet, levels: int, axes: Sequence[int]) -> Tensor:
    """Packed multi-level DWT along ``axes``; the adjoint is the inverse transform."""
    x = as_tensor(x)
    axes = tuple(axes)
    value = wv.dwt_packed(x.data, wavelet, levels, axes)
    return _record("dwt_hook", value, (x,), lambda g: (wv.idwt_packed(g, wavelet, levels, axes),))


def idwt_hook(c, wavelet, levels: int, axes: Sequence[int]) -> Tensor:
    c = as_tensor(c)
    axes = tuple(axes)
    value = wv.idwt_packed(c.data, wavelet, levels, axes)
    return _record("idwt_hook", value, (c,), lambda g: (wv.dwt_packed(g, wavelet, levels, axes),))


def dwt_approx_hook(x, wavelet, levels: int, axes: Sequence[int]) -> Tensor:
    """Coarsest approximation band only; same values as slicing :func:`dwt_hook`."""
    x = as_tensor(x)
    axes = tuple(axes)
    value = wv.approx_coeffs(x.data, wavelet, levels, axes)
    return _record(
        "dwt_approx_hook", value, (x,), lambda g: (wv.approx_synthesis(g, wavelet, levels, axes),)
    )


def idwt_approx_hook(c, wavelet, levels: int, axes: Sequence[int]) -> Tensor:
    """Inverse transform from an approximation band with zero details."""
    c = as_tensor(c)
    axes = tuple(axes)
    value = wv.approx_synthesis(c.data, wavelet, levels, axes)
    return _record(
        "idwt_approx_hook", value, (c,), lambda g: (wv.approx_coeffs(g, wavelet, levels, axes),)
    )


OPS = {
    "add": add,
    "sub": sub,
    "mul_elementwise": mul,
    "matmul": matmul,
    "scale": scale,
    "reshape": reshape,
    "concat_lastdim": concat_lastdim,
    "slice": slice_,
    "pad_zeros": pad_zeros,
    "sum": sum_,
    "mean": mean,
    "gelu": gelu,
    "conv1x1_channels": conv1x1_channels,
    "channel_mix": channel_mix,
    "dwt_hook": dwt_hook,
    "idwt_hook": idwt_hook,
    "dwt_approx_hook": dwt_approx_hook,
    "idwt_approx_hook": idwt_approx_hook,
}


def op_catalog(op: str, *args, **kwargs) -> Tensor:
    """Dispatch ``op`` by name."""
    try:
        fn = OPS[op]
    except KeyError:
        raise ContractError(f"unknown op {op!r}") from None
    return fn(*args, **kwargs)

# public aliases mirroring numpy naming; defined last so module code keeps the builtins
sum = sum_  # noqa: A001
