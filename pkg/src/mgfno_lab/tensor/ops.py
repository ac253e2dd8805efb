"""Differentiable primitives.

Every function accepts :class:`Tensor` or array-like operands, computes its
value eagerly and, when an operand is tracked, records the adjoint on that
operand's tape.
"""

import math

import numpy as np
from scipy.special import ndtr

from .._jit import USE_NUMBA, njit
from . import fft as _fft
from .tape import Tensor, as_array

__all__ = [
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "mode_mix",
    "fft",
    "ifft",
    "rfft",
    "irfft",
    "real",
    "truncate",
    "getitem",
    "embed",
    "reshape",
    "concat",
    "sum",
    "mean",
    "sqrt",
    "relu",
    "gelu",
    "phi",
    "tanh",
    "activation",
    "ACTIVATIONS",
]


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            return x.tape
    return None


def _emit(value, inputs, vjp):
    tape = _tape_of(*inputs)
    if tape is None:
        return Tensor(value)
    return tape.record(value, inputs, vjp)


def _unbroadcast(g, shape):
    if g.shape == tuple(shape):
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# --- arithmetic -------------------------------------------------------------


def add(a, b):
    x, y = as_array(a), as_array(b)
    return _emit(x + y, (a, b), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def sub(a, b):
    x, y = as_array(a), as_array(b)
    return _emit(x - y, (a, b), lambda g: (_unbroadcast(g, x.shape), -_unbroadcast(g, y.shape)))


def mul(a, b):
    """Elementwise product, real or complex, with broadcasting."""
    x, y = as_array(a), as_array(b)

    def vjp(g):
        return _unbroadcast(g * np.conj(y), x.shape), _unbroadcast(g * np.conj(x), y.shape)

    return _emit(x * y, (a, b), vjp)


def scale(a, c):
    c = float(c)
    return _emit(as_array(a) * c, (a,), lambda g: (g * c,))


def matmul(a, w):
    """``a @ w`` with ``a`` of shape ``(..., n)`` and ``w`` of shape ``(n, m)``."""
    x, m = as_array(a), as_array(w)
    if m.ndim != 2 or x.shape[-1] != m.shape[0]:
        raise ValueError(f"matmul shape mismatch: {x.shape} @ {m.shape}")

    def vjp(g):
        mc = np.conj(m) if np.iscomplexobj(m) else m
        xc = np.conj(x) if np.iscomplexobj(x) else x
        gx = g @ mc.T
        gw = xc.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        return gx, gw

    return _emit(x @ m, (a, w), vjp)


def mode_mix(x, r):
    """Per-mode channel mixing ``out[b, k.., o] = sum_i x[b, k.., i] r[k.., i, o]``.

    ``x`` has shape ``(B, *modes, d_in)`` and ``r`` shape ``(*modes, d_in, d_out)``.
    """
    X, R = as_array(x), as_array(r)
    bsz = X.shape[0]
    modes = X.shape[1:-1]
    if R.shape[:-2] != modes or R.shape[-2] != X.shape[-1]:
        raise ValueError(f"mode_mix shape mismatch: {X.shape} vs {R.shape}")
    nm = int(np.prod(modes, dtype=np.int64))
    d_in, d_out = R.shape[-2:]
    Xm = X.reshape(bsz, nm, d_in).transpose(1, 0, 2)
    Rm = R.reshape(nm, d_in, d_out)
    out = np.matmul(Xm, Rm).transpose(1, 0, 2).reshape((bsz,) + modes + (d_out,))

    def vjp(g):
        gm = g.reshape(bsz, nm, d_out).transpose(1, 0, 2)
        gx = np.matmul(gm, np.conj(Rm).transpose(0, 2, 1)).transpose(1, 0, 2).reshape(X.shape)
        gr = np.matmul(np.conj(Xm).transpose(0, 2, 1), gm).reshape(R.shape)
        return gx, gr

    return _emit(out, (x, r), vjp)


# --- spectral ---------------------------------------------------------------


def fft(x, axis):
    data = as_array(x)
    n = data.shape[axis]
    return _emit(_fft.fft(data, axis), (x,), lambda g: (_fft.ifft(g, axis) * n,))


def ifft(x, axis):
    data = as_array(x)
    n = data.shape[axis]
    return _emit(_fft.ifft(data, axis), (x,), lambda g: (_fft.fft(g, axis) / n,))


def _half_weights(n, axis, ndim):
    # multiplicity of each stored rfft coefficient in the full spectrum
    c = np.full(n // 2 + 1, 2.0)
    c[0] = 1.0
    if n % 2 == 0:
        c[-1] = 1.0
    sh = [1] * ndim
    sh[axis] = c.size
    return c.reshape(sh)


def rfft(x, axis):
    data = as_array(x)
    axis = axis % data.ndim
    n = data.shape[axis]
    c = _half_weights(n, axis, data.ndim)
    return _emit(_fft.rfft(data, axis), (x,), lambda g: (_fft.irfft(g / c, n, axis) * n,))


def irfft(x, n, axis):
    data = as_array(x)
    axis = axis % data.ndim
    c = _half_weights(n, axis, data.ndim)
    return _emit(_fft.irfft(data, n, axis), (x,), lambda g: (_fft.rfft(g, axis) * (c / n),))


def real(x):
    return _emit(np.real(as_array(x)).copy(), (x,), lambda g: (g.astype(np.complex128),))


def truncate(x, k_max, axes, half_axis=None):
    data = as_array(x)
    mask = _fft.mode_mask(data.shape, k_max, axes, half_axis)
    return _emit(np.where(mask, data, 0), (x,), lambda g: (np.where(mask, g, 0),))


# --- indexing and shape -----------------------------------------------------


def _has_array_index(key):
    key = key if isinstance(key, tuple) else (key,)
    return any(isinstance(k, (list, np.ndarray)) for k in key)


def getitem(x, key):
    data = as_array(x)
    advanced = _has_array_index(key)

    def vjp(g):
        out = np.zeros(data.shape, dtype=np.result_type(data.dtype, g.dtype))
        if advanced:
            np.add.at(out, key, g)
        else:
            out[key] = g
        return (out,)

    return _emit(np.array(data[key]), (x,), vjp)


def embed(x, shape, key):
    """Place ``x`` at ``key`` inside a zero array of ``shape``."""
    data = as_array(x)
    out = np.zeros(shape, dtype=data.dtype)
    out[key] = data
    return _emit(out, (x,), lambda g: (np.array(g[key]),))


def reshape(x, shape):
    data = as_array(x)
    return _emit(data.reshape(shape), (x,), lambda g: (g.reshape(data.shape),))


def concat(xs, axis):
    arrays = [as_array(x) for x in xs]
    axis = axis % arrays[0].ndim
    bounds = np.cumsum([0] + [a.shape[axis] for a in arrays])

    def vjp(g):
        sl = [slice(None)] * g.ndim
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl[axis] = slice(lo, hi)
            out.append(g[tuple(sl)])
        return tuple(out)

    return _emit(np.concatenate(arrays, axis=axis), tuple(xs), vjp)


# --- reductions -------------------------------------------------------------


def sum(x, axis=None, keepdims=False):
    data = as_array(x)
    out = data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, data.shape),)

    return _emit(out, (x,), vjp)


def mean(x, axis=None):
    data = as_array(x)
    count = data.size if axis is None else np.prod([data.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis), 1.0 / count)


def sqrt(x):
    data = as_array(x)
    out = np.sqrt(data)

    def vjp(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return _emit(out, (x,), vjp)


# --- activations ------------------------------------------------------------

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


@njit
def _phi_numba(x):
    flat = x.ravel()
    val = np.empty_like(flat)
    der = np.empty_like(flat)
    for i in range(flat.size):
        t = flat[i]
        v = 0.0
        d = 0.0
        if t > 0.0:
            v += t * t
            d += 2.0 * t
        if t > 1.0:
            v -= 3.0 * (t - 1.0) ** 2
            d -= 6.0 * (t - 1.0)
        if t > 2.0:
            v += 3.0 * (t - 2.0) ** 2
            d += 6.0 * (t - 2.0)
        if t >= 3.0:
            # the four pieces cancel exactly; avoid round-off outside the support
            v = 0.0
            d = 0.0
        val[i] = v
        der[i] = d
    return val.reshape(x.shape), der.reshape(x.shape)


def _phi_numpy(x):
    r = [np.maximum(x - s, 0.0) for s in range(4)]
    val = r[0] ** 2 - 3.0 * r[1] ** 2 + 3.0 * r[2] ** 2 - r[3] ** 2
    der = 2.0 * r[0] - 6.0 * r[1] + 6.0 * r[2] - 2.0 * r[3]
    outside = x >= 3.0
    return np.where(outside, 0.0, val), np.where(outside, 0.0, der)


_phi_kernel = _phi_numba if USE_NUMBA else _phi_numpy


def phi_values(x):
    """Compact-support quadratic B-spline activation and its derivative."""
    return _phi_kernel(np.ascontiguousarray(x, dtype=np.float64))


def _pointwise(x, value, deriv):
    return _emit(value, (x,), lambda g: (g * deriv,))


def relu(x):
    data = as_array(x)
    mask = data > 0
    return _emit(np.where(mask, data, 0.0), (x,), lambda g: (np.where(mask, g, 0.0),))


@njit
def _gelu_numba(x):
    flat = x.ravel()
    val = np.empty_like(flat)
    der = np.empty_like(flat)
    for i in range(flat.size):
        t = flat[i]
        cdf = 0.5 * (1.0 + math.erf(t * _INV_SQRT2))
        val[i] = t * cdf
        der[i] = cdf + t * math.exp(-0.5 * t * t) * _INV_SQRT2PI
    return val.reshape(x.shape), der.reshape(x.shape)


def _gelu_numpy(x):
    cdf = ndtr(x)
    return x * cdf, cdf + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI


_gelu_kernel = _gelu_numba if USE_NUMBA else _gelu_numpy


def gelu(x):
    """Exact GELU ``x * Phi(x)``."""
    val, der = _gelu_kernel(np.ascontiguousarray(as_array(x)))
    return _pointwise(x, val, der)


def phi(x):
    val, der = phi_values(as_array(x))
    return _pointwise(x, val, der)


def tanh(x):
    t = np.tanh(as_array(x))
    return _pointwise(x, t, 1.0 - t * t)


def identity(x):
    return x if isinstance(x, Tensor) else Tensor(x)


ACTIVATIONS = {"relu": relu, "gelu": gelu, "phi": phi, "tanh": tanh, "identity": identity}


def activation(x, name):
    try:
        fn = ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None
    return fn(x)
