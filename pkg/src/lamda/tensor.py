"""Dense 2-D tensors with a tape-based reverse-mode autodiff engine.

Conventions: row-major numpy storage, rows = tokens and cols = features.
One global float mode per run (f32 for training, f64 for verification),
switched via set_float_mode() or the LDA_FLOAT_MODE environment variable.

Gradients are only computed inside a `with Tape() as tape:` block; ops
executed outside a tape compute values but record nothing, which is what
evaluation passes use.
"""

from __future__ import annotations

import contextlib
import math
import os

import numpy as np

from .errors import ContractError, NumericalError, ShapeError

_MODES = {"f32": np.float32, "f64": np.float64}
_dtype = _MODES[os.environ.get("LDA_FLOAT_MODE", "f32")]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


def set_float_mode(mode):
    global _dtype
    if mode not in _MODES:
        raise ContractError(f"float mode must be one of {sorted(_MODES)}, got {mode!r}")
    _dtype = _MODES[mode]


def get_float_mode():
    return "f32" if _dtype is np.float32 else "f64"


def dtype():
    return _dtype


@contextlib.contextmanager
def float_mode(mode):
    prev = get_float_mode()
    set_float_mode(mode)
    try:
        yield
    finally:
        set_float_mode(prev)


def assert_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values in {where}")


class Tensor:
    """A dense array plus the bookkeeping needed to replay its backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=_dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return not self._parents

    def __repr__(self):
        tag = self.name or self._op or "tensor"
        return f"Tensor({tag}, shape={self.data.shape}, grad={self.requires_grad})"


class Tape:
    """Ordered record of grad-requiring ops; replayed in reverse by backward()."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        global _active_tape
        if _active_tape is not None:
            raise ContractError("tapes do not nest")
        _active_tape = self
        return self

    def __exit__(self, *exc):
        global _active_tape
        _active_tape = None
        return False

    def backward(self, loss):
        """Seed d(loss)=1 and replay recorded ops in reverse.

        Returns a map {leaf Tensor: gradient array} covering every
        requires_grad leaf reached from the loss.
        """
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
        if loss._backward is None and not loss.requires_grad:
            raise ContractError("loss does not depend on any trainable tensor")
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is None or node._backward is None:
                continue
            node._backward(node.grad)
        grads = {}
        for node in self.nodes:
            for p in node._parents:
                if p.is_leaf and p.requires_grad and p.grad is not None:
                    grads[p] = p.grad
        return grads


_active_tape = None


def _record(data, parents, backward, op):
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad and _active_tape is not None:
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
        _active_tape.nodes.append(out)
    return out


def _accum(t, g):
    if not t.requires_grad:
        return
    # No in-place grad mutation anywhere, so sharing the first array is safe.
    t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------- primitives


def matmul(a, b):
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul shapes do not chain: {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return _record(out_data, (a, b), backward, "matmul")


def add(a, b):
    """Elementwise add; `b` may be a length-d row broadcast over a's rows."""
    bias = a.data.shape != b.data.shape
    if bias and b.data.reshape(-1).shape[0] != a.data.shape[-1]:
        raise ShapeError(f"add shapes incompatible: {a.data.shape} + {b.data.shape}")
    out_data = a.data + b.data

    def backward(g):
        _accum(a, g)
        if bias:
            _accum(b, g.sum(axis=0).reshape(b.data.shape))
        else:
            _accum(b, g)

    return _record(out_data, (a, b), backward, "add")


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"sub shapes differ: {a.data.shape} - {b.data.shape}")
    out_data = a.data - b.data

    def backward(g):
        _accum(a, g)
        _accum(b, -g)

    return _record(out_data, (a, b), backward, "sub")


def mul(a, b):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"mul shapes differ: {a.data.shape} * {b.data.shape}")
    out_data = a.data * b.data

    def backward(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)

    return _record(out_data, (a, b), backward, "mul")


def scale(a, c):
    c = _dtype(c)
    out_data = a.data * c

    def backward(g):
        _accum(a, g * c)

    return _record(out_data, (a,), backward, "scale")


def transpose(a):
    out_data = a.data.T.copy()

    def backward(g):
        _accum(a, g.T.copy())

    return _record(out_data, (a,), backward, "transpose")


def gelu(a):
    """tanh-form GELU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    x = a.data
    inner = _dtype(_GELU_C) * (x + _dtype(_GELU_A) * x * x * x)
    t = np.tanh(inner)
    out_data = _dtype(0.5) * x * (1 + t)

    def backward(g):
        dinner = _dtype(_GELU_C) * (1 + 3 * _dtype(_GELU_A) * x * x)
        da = 0.5 * (1 + t) + 0.5 * x * (1 - t * t) * dinner
        _accum(a, g * da.astype(_dtype))

    return _record(out_data, (a,), backward, "gelu")


def softmax_rows(a):
    z = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    out_data = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=1, keepdims=True)
        _accum(a, out_data * (g - dot))

    return _record(out_data, (a,), backward, "softmax")


def layer_norm(a, gain, bias, eps=1e-5):
    x = a.data
    d = x.shape[-1]
    if d == 1 and eps == 0:
        raise NumericalError("layer_norm is degenerate for d=1 with eps=0")
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _dtype(eps))
    xhat = (x - mu) * inv
    gdat = gain.data.reshape(1, -1)
    out_data = xhat * gdat + bias.data.reshape(1, -1)

    def backward(g):
        gg = g * gdat
        m1 = gg.mean(axis=1, keepdims=True)
        m2 = (gg * xhat).mean(axis=1, keepdims=True)
        _accum(a, (gg - m1 - xhat * m2) * inv)
        _accum(gain, (g * xhat).sum(axis=0).reshape(gain.data.shape))
        _accum(bias, g.sum(axis=0).reshape(bias.data.shape))

    return _record(out_data, (a, gain, bias), backward, "layer_norm")


def embedding(table, ids):
    ids = np.asarray(ids, dtype=np.int64).reshape(-1)
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.data.shape[0]:
        raise ShapeError(f"embedding ids out of range for table {table.data.shape}")
    out_data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, g)
            _accum(table, gt)

    return _record(out_data, (table,), backward, "embedding")


def cross_entropy(logits, targets):
    """Mean cross-entropy with integrated log-softmax; target -1 is ignored."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    z = logits.data
    if targets.shape[0] != z.shape[0]:
        raise ShapeError(f"{targets.shape[0]} targets for {z.shape[0]} logit rows")
    valid = targets >= 0
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ContractError("cross_entropy: no unmasked targets")
    zs = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    picked = np.where(valid, logp[np.arange(z.shape[0]), np.maximum(targets, 0)], 0.0)
    out_data = np.asarray(-picked.sum() / n_valid, dtype=_dtype)

    def backward(g):
        p = np.exp(logp)
        p[np.arange(z.shape[0]), np.maximum(targets, 0)] -= 1.0
        p[~valid] = 0.0
        _accum(logits, (float(g) / n_valid) * p.astype(_dtype))

    return _record(out_data, (logits,), backward, "cross_entropy")


def concat_cols(tensors):
    widths = [t.data.shape[1] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=1)

    def backward(g):
        j = 0
        for t, w in zip(tensors, widths):
            _accum(t, g[:, j : j + w])
            j += w

    return _record(out_data, tuple(tensors), backward, "concat_cols")


def concat_rows(tensors):
    heights = [t.data.shape[0] for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=0)

    def backward(g):
        i = 0
        for t, h in zip(tensors, heights):
            _accum(t, g[i : i + h])
            i += h

    return _record(out_data, tuple(tensors), backward, "concat_rows")


def slice_rows(a, i0, i1):
    out_data = a.data[i0:i1].copy()

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[i0:i1] = g
        _accum(a, ga)

    return _record(out_data, (a,), backward, "slice_rows")


def slice_cols(a, j0, j1):
    out_data = a.data[:, j0:j1].copy()

    def backward(g):
        ga = np.zeros_like(a.data)
        ga[:, j0:j1] = g
        _accum(a, ga)

    return _record(out_data, (a,), backward, "slice_cols")


def tensor_sum(a):
    out_data = np.asarray(a.data.sum(), dtype=_dtype)

    def backward(g):
        _accum(a, np.full_like(a.data, float(g)))

    return _record(out_data, (a,), backward, "sum")
