"""Pointwise linear maps, spectral convolution and the Fourier layer."""

from dataclasses import dataclass

import numpy as np

from ..tensor import ops
from ..tensor.tape import as_array


def linear_init(rng, d_in, d_out):
    """Fan-in uniform initialization ``U(-1/sqrt(d_in), 1/sqrt(d_in))``."""
    bound = 1.0 / np.sqrt(d_in)
    return rng.uniform(-bound, bound, (d_in, d_out)), rng.uniform(-bound, bound, d_out)


def spectral_init(rng, modes, d_in, d_out):
    """Complex mode weights, uniform in the unit square scaled by ``1/(d_in*d_out)``.

    ``modes`` is ``(k,)`` in 1-D and ``(k1, k2)`` in 2-D; the 2-D layout has a
    leading axis of 2 for the positive and negative first-axis frequencies.
    """
    lead = (2,) if len(modes) == 2 else ()
    shape = lead + tuple(modes) + (d_in, d_out)
    scale = 1.0 / (d_in * d_out)
    return scale * (rng.uniform(0, 1, shape) + 1j * rng.uniform(0, 1, shape))


@dataclass
class LinearLayer:
    """``x @ W + b`` applied at every grid point (a 1x1 convolution)."""

    W: object
    b: object

    def __call__(self, x):
        return ops.add(ops.matmul(x, self.W), self.b)


@dataclass
class SpectralConvLayer:
    R: object
    modes: tuple

    def __call__(self, v):
        return spectral_conv(self, v)


def _check_grid(grid, modes):
    if len(grid) == 1:
        n, k = grid[0], modes[0]
        if k > n // 2 + 1:
            raise ValueError(f"grid of {n} points cannot hold {k} Fourier modes")
        return
    for n, k in zip(grid[:-1], modes[:-1]):
        if 2 * k > n:
            raise ValueError(f"grid extent {n} is smaller than 2*k_max={2 * k}")
    if modes[-1] > grid[-1] // 2 + 1:
        raise ValueError(f"grid extent {grid[-1]} cannot hold {modes[-1]} modes")


def spectral_conv(layer, v):
    """``irfft(R . truncate(rfft(v)))`` over the spatial axes of ``v``.

    ``v`` is channel-last, ``(B, *grid, d_in)``. Each retained mode's channel
    vector is multiplied by its own ``d_in x d_out`` complex matrix.
    """
    shape = v.shape
    grid = shape[1:-1]
    modes = tuple(layer.modes)
    if len(grid) != len(modes):
        raise ValueError(f"{len(modes)}-d spectral layer applied to a {len(grid)}-d grid")
    _check_grid(grid, modes)
    d_out = as_array(layer.R).shape[-1]
    bsz = shape[0]
    if len(grid) == 1:
        (n,), (k,) = grid, modes
        X = ops.rfft(v, 1)
        key = (slice(None), slice(0, k))
        Y = ops.mode_mix(ops.getitem(X, key), layer.R)
        Z = ops.embed(Y, (bsz, n // 2 + 1, d_out), key)
        return ops.irfft(Z, n, 1)
    if len(grid) == 2:
        (n1, n2), (k1, k2) = grid, modes
        X = ops.fft(ops.rfft(v, 2), 1)
        spec_shape = (bsz, n1, n2 // 2 + 1, d_out)
        lo = (slice(None), slice(0, k1), slice(0, k2))
        hi = (slice(None), slice(n1 - k1, n1), slice(0, k2))
        Z = ops.add(
            ops.embed(ops.mode_mix(ops.getitem(X, lo), ops.getitem(layer.R, 0)), spec_shape, lo),
            ops.embed(ops.mode_mix(ops.getitem(X, hi), ops.getitem(layer.R, 1)), spec_shape, hi),
        )
        return ops.irfft(ops.ifft(Z, 1), n2, 2)
    raise ValueError("only 1-d and 2-d grids are supported")


def mlp(x, first, second, activation="gelu"):
    """Two pointwise linear layers with ``activation`` in between."""
    return second(ops.activation(first(x), activation))


def fourier_layer(v, W, S, activation="gelu", variant="standard", mlp_layers=None):
    """One Fourier layer.

    ``standard``: ``act(W v + M(S v))``; ``skip``: ``act(v + W v + M(S v))``,
    where ``M`` is the pointwise two-layer network ``mlp_layers`` or the
    identity when that is ``None``.
    """
    width = v.shape[-1]
    d_in = as_array(W.W).shape[0]
    if d_in != width:
        raise ValueError(f"layer width {d_in} does not match input channels {width}")
    spec = S(v)
    if mlp_layers is not None:
        spec = mlp(spec, *mlp_layers, activation=activation)
    out = ops.add(W(v), spec)
    if variant == "skip":
        out = ops.add(out, v)
    elif variant != "standard":
        raise ValueError(f"unknown Fourier layer variant {variant!r}")
    return ops.activation(out, activation)


def phi_activation(x):
    """``relu(x)^2 - 3 relu(x-1)^2 + 3 relu(x-2)^2 - relu(x-3)^2``, support ``[0, 3]``."""
    return ops.phi(x)
