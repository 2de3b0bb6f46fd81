"""Minimal reverse-mode autodiff over numpy arrays.

Tensors are immutable once created; each operation returns a fresh Tensor
holding a backward closure. Gradients accumulate into ``.grad`` when
``backward()`` is called on a scalar result. Every operation validates its
output for NaN/Inf so numerical trouble surfaces at the op that caused it
instead of three layers downstream.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special as sp_special

from .errors import DimensionError, LabelError, NumericError, ParameterError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray):
        arr = data
        if dtype is not None and arr.dtype != dtype:
            arr = arr.astype(dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        return arr
    return np.asarray(data, dtype=dtype or np.float64)


class Tensor:
    """Dense array participating in reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward_fn=None, dtype=None):
        self.data = _as_array(data, dtype)
        if self.data.size == 0:
            raise DimensionError("tensor must not have zero-size dimensions")
        if not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite values in tensor of shape "
                               f"{self.data.shape}")
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward_fn = _backward_fn

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a 1-element tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- operator sugar (defined below as module functions) -------------------

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

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    # -- autodiff ------------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Run reverse-mode accumulation from this (scalar) tensor."""
        if not self.requires_grad:
            raise ParameterError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise DimensionError(
                    f"backward() without explicit gradient needs a scalar, got {self.shape}")
            grad = np.ones_like(self.data)

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g.copy() if t.grad is None else t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(data, requires_grad=req,
                  _parents=parents if req else (),
                  _backward_fn=backward_fn if req else None)


# -- arithmetic ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data + b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data - b.data

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data * b.data

    def backward(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out_data = a.data / b.data

    def backward(g):
        _accum(a, _unbroadcast(g / b.data, a.shape))
        _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), backward)


def neg(a) -> Tensor:
    a = _coerce(a)

    def backward(g):
        _accum(a, -g)

    return _make(-a.data, (a,), backward)


def power(a, exponent: float) -> Tensor:
    """Elementwise power with a constant exponent."""
    a = _coerce(a)
    exponent = float(exponent)
    out_data = a.data ** exponent

    def backward(g):
        _accum(a, g * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), backward)


def exp(a) -> Tensor:
    a = _coerce(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accum(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = _coerce(a)
    out_data = np.log(a.data)

    def backward(g):
        _accum(a, g / a.data)

    return _make(out_data, (a,), backward)


def matmul(a, b) -> Tensor:
    """Matrix product with numpy's stacked-matrix broadcasting."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs rank >= 2 operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise DimensionError(
            f"matmul batch dimensions disagree: {a.shape} x {b.shape}") from exc

    def backward(g):
        _accum(a, _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        _accum(b, _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _make(out_data, (a, b), backward)


# -- shape manipulation --------------------------------------------------------

def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _coerce(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accum(a, g.reshape(a.shape))

    return _make(out_data, (a,), backward)


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = _coerce(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out_data = a.data.transpose(axes)

    def backward(g):
        _accum(a, g.transpose(inverse))

    return _make(out_data, (a,), backward)


def broadcast_to(a, shape: Sequence[int]) -> Tensor:
    a = _coerce(a)
    out_data = np.broadcast_to(a.data, shape).copy()

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))

    return _make(out_data, (a,), backward)


def getitem(a, index) -> Tensor:
    a = _coerce(a)
    out_data = a.data[index]
    if np.isscalar(out_data) or out_data.ndim == 0:
        out_data = np.asarray(out_data)

    def backward(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, index, g)
            _accum(a, full)

    return _make(out_data, (a,), backward)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accum(t, g[tuple(sl)])

    return _make(out_data, tuple(ts), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)
    if out_data.ndim == 0:
        out_data = np.asarray(out_data)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum(a, np.broadcast_to(g, a.shape).copy())

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    count = a.size if axis is None else a.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# -- nonlinearities -------------------------------------------------------------

def relu(a) -> Tensor:
    a = _coerce(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accum(a, g * (a.data > 0.0))

    return _make(out_data, (a,), backward)


def gelu(a) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    a = _coerce(a)
    cdf = 0.5 * (1.0 + sp_special.erf(a.data / _SQRT2))
    out_data = a.data * cdf

    def backward(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        _accum(a, g * (cdf + a.data * pdf))

    return _make(out_data, (a,), backward)


def dropout(a, p: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; the identity when not training."""
    a = _coerce(a)
    if not (0.0 <= p < 1.0):
        raise ParameterError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return a
    if rng is None:
        raise ParameterError("training-mode dropout needs a seeded generator")
    keep = (rng.random(a.shape) >= p) / (1.0 - p)
    out_data = a.data * keep

    def backward(g):
        _accum(a, g * keep)

    return _make(out_data, (a,), backward)


def _log_softmax_np(x: np.ndarray, axis: int) -> np.ndarray:
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def softmax(a, axis: int = -1) -> Tensor:
    """Numerically stable softmax along one axis."""
    a = _coerce(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        _accum(a, out_data * (g - inner))

    return _make(out_data, (a,), backward)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _coerce(a)
    if not -a.ndim <= axis < a.ndim:
        raise DimensionError(f"log_softmax axis {axis} invalid for shape {a.shape}")
    out_data = _log_softmax_np(a.data, axis)

    def backward(g):
        soft = np.exp(out_data)
        _accum(a, g - soft * g.sum(axis=axis, keepdims=True))

    return _make(out_data, (a,), backward)


def layer_norm(a, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean/unit variance, then scale and shift."""
    a, gamma, beta = _coerce(a), _coerce(gamma), _coerce(beta)
    dim = a.shape[-1]
    if dim == 0:
        raise DimensionError("layer_norm over a zero-length row")
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise DimensionError(
            f"layer_norm affine parameters must have shape ({dim},), "
            f"got {gamma.shape} and {beta.shape}")
    mu = tmean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    inv_std = power(add(var, eps), -0.5)
    normalized = mul(centered, inv_std)
    return add(mul(normalized, gamma), beta)


# -- losses ---------------------------------------------------------------------

def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood of integer class labels."""
    logits = _coerce(logits)
    if logits.ndim != 2:
        raise DimensionError(f"cross_entropy expects B x C logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise DimensionError(
            f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    n_classes = logits.shape[1]
    bad = np.nonzero((labels < 0) | (labels >= n_classes))[0]
    if bad.size:
        raise LabelError(
            f"label {int(labels[bad[0]])} at index {int(bad[0])} outside [0, {n_classes})")
    picked = getitem(log_softmax(logits, axis=1),
                     (np.arange(logits.shape[0]), labels))
    return neg(tmean(picked))


def mse(a, b) -> Tensor:
    """Mean squared difference."""
    a, b = _coerce(a), _coerce(b)
    if a.shape != b.shape:
        raise DimensionError(f"mse shapes disagree: {a.shape} vs {b.shape}")
    d = sub(a, b)
    return tmean(mul(d, d))


def kl_temperature(z_t, z_s, temperature: float) -> Tensor:
    """Temperature-scaled KL(teacher || student) on logits, batch-meaned.

    The teacher side is detached: gradients flow only into ``z_s``.
    The T^2 factor keeps gradient magnitudes comparable across temperatures.
    """
    z_t, z_s = _coerce(z_t), _coerce(z_s)
    if z_t.shape != z_s.shape:
        raise DimensionError(f"logit shapes disagree: {z_t.shape} vs {z_s.shape}")
    if z_t.ndim != 2:
        raise DimensionError(f"kl_temperature expects B x C logits, got {z_t.shape}")
    temperature = float(temperature)
    if temperature <= 0.0:
        raise ParameterError(f"temperature must be positive, got {temperature}")

    inv_t = 1.0 / temperature
    log_p = _log_softmax_np(z_t.data * inv_t, axis=1)  # teacher, constant
    p = np.exp(log_p)
    log_q = log_softmax(mul(z_s, inv_t), axis=1)
    per_row = tsum(mul(Tensor(p), sub(Tensor(log_p), log_q)), axis=1)
    return mul(tmean(per_row), temperature * temperature)


# -- verification ------------------------------------------------------------------

def gradcheck(f: Callable[[Tensor], Tensor], x, h: float = 1e-5,
              exclusion_floor: float = 1e-8) -> float:
    """Compare reverse-mode gradients of a scalar function against central
    finite differences, componentwise, in double precision.

    Returns the max relative error |a - n| / (|a| + |n|) over components where
    |a| + |n| >= ``exclusion_floor``; 0.0 if every component is excluded.
    """
    base = _as_array(x.data if isinstance(x, Tensor) else x, np.float64).copy()
    probe = Tensor(base, requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise DimensionError(f"gradcheck target must be scalar, got {out.shape}")
    out.backward()
    analytic = (probe.grad if probe.grad is not None else np.zeros_like(base)).reshape(-1)

    numeric = np.zeros(base.size, dtype=np.float64)
    flat = base.reshape(-1)
    for i in range(base.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = f(Tensor(base)).item()
        flat[i] = orig - h
        f_minus = f(Tensor(base)).item()
        flat[i] = orig
        numeric[i] = (f_plus - f_minus) / (2.0 * h)

    if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
        return np.inf
    denom = np.abs(analytic) + np.abs(numeric)
    mask = denom >= exclusion_floor
    if not mask.any():
        return 0.0
    rel = np.abs(analytic - numeric)[mask] / denom[mask]
    return float(rel.max())
