"""Discrete Fourier transforms on numpy arrays.

Convention: unnormalized forward transform, ``1/N`` on the inverse.
Power-of-two lengths go through an iterative radix-2 Cooley-Tukey kernel;
every other length is reduced to a power-of-two circular convolution with
Bluestein's chirp-z identity. Real transforms of even length pack the signal
into a half-length complex transform.

The radix-2 butterfly exists in two flavours, a numba loop kernel and a
numpy routine vectorized over rows and butterflies; ``MGFNO_NUMBA``
selects between them (see :mod:`mgfno_lab._jit`).
"""

from functools import lru_cache

import numpy as np

from .._jit import USE_NUMBA, njit

__all__ = [
    "fft",
    "ifft",
    "fftn",
    "ifftn",
    "rfft",
    "irfft",
    "naive_dft",
    "truncate_modes",
    "mode_mask",
]


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bitrev(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(n, inverse):
    # stage table: entries [h, 2h) hold exp(-+i*pi*k/h) for the stage of half-size h
    sign = 1.0 if inverse else -1.0
    tw = np.zeros(max(n, 2), dtype=np.complex128)
    h = 1
    while h < n:
        tw[h : 2 * h] = np.exp(sign * 1j * np.pi * np.arange(h) / h)
        h *= 2
    return tw


@njit
def _radix2_numba(x, rev, tw):
    rows, n = x.shape
    out = np.empty_like(x)
    buf = np.empty(n, dtype=np.complex128)
    for b in range(rows):
        for i in range(n):
            buf[i] = x[b, rev[i]]
        half = 1
        while half < n:
            for start in range(0, n, 2 * half):
                for k in range(half):
                    t = tw[half + k] * buf[start + k + half]
                    u = buf[start + k]
                    buf[start + k] = u + t
                    buf[start + k + half] = u - t
            half *= 2
        out[b, :] = buf
    return out


def _radix2_numpy(x, rev, tw):
    rows, n = x.shape
    out = x[:, rev]
    half = 1
    while half < n:
        blk = out.reshape(rows, n // (2 * half), 2, half)
        even = blk[:, :, 0, :]
        odd = blk[:, :, 1, :] * tw[half : 2 * half]
        out = np.concatenate([even + odd, even - odd], axis=2).reshape(rows, n)
        half *= 2
    return out


_radix2 = _radix2_numba if USE_NUMBA else _radix2_numpy


def _pow2_transform(x, inverse, kernel=None):
    n = x.shape[1]
    if n == 1:
        return x.copy()
    kernel = kernel or _radix2
    return kernel(x, _bitrev(n), _twiddles(n, inverse))


@lru_cache(maxsize=None)
def _bluestein_setup(n, inverse):
    sign = 1.0 if inverse else -1.0
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large k
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    m = 1 << (2 * n - 2).bit_length()
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:])[::-1]
    bf = _pow2_transform(b[None, :], False)[0]
    return chirp, m, bf


def _bluestein(x, inverse):
    rows, n = x.shape
    chirp, m, bf = _bluestein_setup(n, inverse)
    a = np.zeros((rows, m), dtype=np.complex128)
    a[:, :n] = x * chirp
    conv = _pow2_transform(_pow2_transform(a, False) * bf, True) / m
    return conv[:, :n] * chirp


def _transform_rows(x, inverse):
    """Unnormalized DFT of each row of a 2-D complex array."""
    n = x.shape[1]
    if _is_pow2(n):
        return _pow2_transform(x, inverse)
    return _bluestein(x, inverse)


def _check_axis(ndim, axis):
    if not -ndim <= axis < ndim:
        raise ValueError(f"axis {axis} out of range for array of dimension {ndim}")
    return axis % ndim


def _along_axis(x, axis, fn):
    x = np.moveaxis(x, axis, -1)
    lead = x.shape[:-1]
    rows = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    out = fn(rows)
    return np.moveaxis(out.reshape(lead + (out.shape[-1],)), -1, axis)


def fft(x, axis=-1):
    """Full complex DFT along ``axis`` (no normalization)."""
    x = np.asarray(x)
    axis = _check_axis(x.ndim, axis)
    if x.shape[axis] < 1:
        raise ValueError("transformed axis must have extent >= 1")
    return _along_axis(x.astype(np.complex128, copy=False), axis, lambda r: _transform_rows(r, False))


def ifft(x, axis=-1):
    """Inverse DFT along ``axis`` with ``1/N`` normalization."""
    x = np.asarray(x)
    axis = _check_axis(x.ndim, axis)
    n = x.shape[axis]
    return _along_axis(x.astype(np.complex128, copy=False), axis, lambda r: _transform_rows(r, True) / n)


def fftn(x, axes):
    out = np.asarray(x, dtype=np.complex128)
    for ax in axes:
        out = fft(out, ax)
    return out


def ifftn(x, axes):
    out = np.asarray(x, dtype=np.complex128)
    for ax in axes:
        out = ifft(out, ax)
    return out


@lru_cache(maxsize=None)
def _real_twiddles(n):
    return np.exp(-2j * np.pi * np.arange(n // 2 + 1) / n)


@njit
def _pack_numba(x):
    rows, n = x.shape
    h = n // 2
    z = np.empty((rows, h), dtype=np.complex128)
    for b in range(rows):
        for k in range(h):
            z[b, k] = complex(x[b, 2 * k], x[b, 2 * k + 1])
    return z


@njit
def _rfft_post_numba(z, w):
    rows, h = z.shape
    out = np.empty((rows, h + 1), dtype=np.complex128)
    for b in range(rows):
        for k in range(h + 1):
            zk = z[b, k % h]
            zc = np.conj(z[b, (h - k) % h])
            out[b, k] = 0.5 * (zk + zc) - 0.5j * w[k] * (zk - zc)
    return out


@njit
def _irfft_pre_numba(X, w):
    rows = X.shape[0]
    h = X.shape[1] - 1
    z = np.empty((rows, h), dtype=np.complex128)
    for b in range(rows):
        for k in range(h):
            xk = X[b, k]
            xc = np.conj(X[b, h - k])
            if k == 0:
                xk = complex(xk.real, 0.0)
                xc = complex(X[b, h].real, 0.0)
            z[b, k] = 0.5 * (xk + xc) + 0.5j * (xk - xc) * np.conj(w[k])
    return z


@njit
def _unpack_numba(z, n):
    rows, h = z.shape
    out = np.empty((rows, n))
    for b in range(rows):
        for k in range(h):
            out[b, 2 * k] = z[b, k].real
            out[b, 2 * k + 1] = z[b, k].imag
    return out


def _pack_numpy(x):
    return x[:, 0::2] + 1j * x[:, 1::2]


def _rfft_post_numpy(z, w):
    h = z.shape[1]
    k = np.arange(h + 1)
    zk = z[:, k % h]
    zc = np.conj(z[:, (h - k) % h])
    return 0.5 * (zk + zc) - 0.5j * w * (zk - zc)


def _irfft_pre_numpy(X, w):
    h = X.shape[1] - 1
    X = X.copy()
    X[:, 0] = X[:, 0].real
    X[:, h] = X[:, h].real
    k = np.arange(h)
    xk = X[:, k]
    xc = np.conj(X[:, h - k])
    return 0.5 * (xk + xc) + 0.5j * (xk - xc) * np.conj(w[:h])


def _unpack_numpy(z, n):
    out = np.empty((z.shape[0], n))
    out[:, 0::2] = z.real
    out[:, 1::2] = z.imag
    return out


if USE_NUMBA:
    _pack, _rfft_post, _irfft_pre, _unpack = _pack_numba, _rfft_post_numba, _irfft_pre_numba, _unpack_numba
else:
    _pack, _rfft_post, _irfft_pre, _unpack = _pack_numpy, _rfft_post_numpy, _irfft_pre_numpy, _unpack_numpy


def _rfft_rows(x):
    n = x.shape[1]
    if n % 2 or n < 4:
        return _transform_rows(x.astype(np.complex128), False)[:, : n // 2 + 1]
    z = _transform_rows(_pack(x), False)
    return _rfft_post(z, _real_twiddles(n))


def _irfft_rows(X, n):
    if n % 2 or n < 4:
        X = X.copy()
        X[:, 0] = X[:, 0].real
        if n % 2 == 0:
            X[:, n // 2] = X[:, n // 2].real
        neg = np.conj(X[:, 1 : (n + 1) // 2][:, ::-1])
        full = np.concatenate([X[:, : n // 2 + 1], neg], axis=1)
        return (_transform_rows(full, True) / n).real
    z = _transform_rows(_irfft_pre(X, _real_twiddles(n)), True) / (n // 2)
    return _unpack(z, n)


def rfft(x, axis=-1):
    """DFT of a real signal, nonnegative frequencies ``0..N//2`` only."""
    x = np.asarray(x, dtype=np.float64)
    axis = _check_axis(x.ndim, axis)
    return _along_axis(x, axis, _rfft_rows)


def irfft(X, n, axis=-1):
    """Inverse of :func:`rfft`; ``n`` is the length of the real output.

    Imaginary parts of the DC (and, for even ``n``, Nyquist) coefficients are
    ignored, as they cannot be represented by a real signal.
    """
    X = np.asarray(X, dtype=np.complex128)
    axis = _check_axis(X.ndim, axis)
    if X.shape[axis] != n // 2 + 1:
        raise ValueError(f"half spectrum of length {X.shape[axis]} does not match n={n}")
    return _along_axis(X, axis, lambda r: _irfft_rows(r, n))


def naive_dft(x, inverse=False):
    """O(N^2) reference DFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    sign = 1.0 if inverse else -1.0
    mat = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    out = x @ mat.T
    return out / n if inverse else out


def mode_mask(shape, k_max, axes, half_axis=None):
    """Boolean mask of retained modes, broadcastable against ``shape``.

    For each axis in ``axes`` frequencies ``|f| < k_max[d]`` survive. On
    ``half_axis`` (an rfft axis) only nonnegative frequencies are stored, so
    indices ``0..k_max-1`` are kept.
    """
    if np.isscalar(k_max):
        k_max = [int(k_max)] * len(axes)
    if len(k_max) != len(axes):
        raise ValueError("one mode count per spectral axis is required")
    ndim = len(shape)
    mask = np.ones([1] * ndim, dtype=bool)
    for ax, k in zip(axes, k_max):
        ax = _check_axis(ndim, ax)
        n = shape[ax]
        if k < 1:
            raise ValueError("k_max must be >= 1")
        if ax == half_axis:
            if k > n:
                raise ValueError(f"k_max={k} exceeds {n} stored modes")
            keep = np.arange(n) < k
        else:
            if k > n // 2 + 1:
                raise ValueError(f"k_max={k} exceeds extent/2+1 for extent {n}")
            f = np.fft.fftfreq(n, 1.0 / n)
            keep = np.abs(f) < k
        sh = [1] * ndim
        sh[ax] = n
        mask = mask & keep.reshape(sh)
    return mask


def truncate_modes(X, k_max, axes, half_axis=None):
    """Zero every Fourier coefficient outside the low-mode region.

    Shape is unchanged; in 2-D the retained set is the four corner blocks of
    the full spectrum (two blocks when the last axis is a half spectrum).
    """
    X = np.asarray(X)
    return np.where(mode_mask(X.shape, k_max, axes, half_axis), X, 0)
