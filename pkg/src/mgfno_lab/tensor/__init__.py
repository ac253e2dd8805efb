"""Dense float64/complex128 tensors, DFTs and reverse-mode differentiation."""

import numpy as np

from . import ops
from .check import finite_difference_grad, gradcheck, relative_error
from .fft import naive_dft, truncate_modes
from .tape import Tape, TapeError, Tensor

__all__ = [
    "Tensor",
    "Tape",
    "TapeError",
    "ops",
    "fft_forward",
    "fft_inverse",
    "truncate_modes",
    "naive_dft",
    "record",
    "backward",
    "gradcheck",
    "finite_difference_grad",
    "relative_error",
]

IMAG_RESIDUE_TOL = 1e-10


def fft_forward(x, axes=(-1,)):
    """Full complex DFT of ``x`` over ``axes``; other axes are batch axes."""
    out = x if isinstance(x, Tensor) else Tensor(x)
    for ax in axes:
        if not -out.ndim <= ax < out.ndim:
            raise ValueError(f"axis {ax} out of range for {out.ndim}-d tensor")
        out = ops.fft(out, ax)
    return out


def fft_inverse(X, axes=(-1,)):
    """Inverse DFT (``1/N`` scaled) returning the real part.

    Raises ``ValueError`` when the discarded imaginary part exceeds
    ``IMAG_RESIDUE_TOL`` relative to the output scale, which means the input
    spectrum was not conjugate symmetric.
    """
    out = X if isinstance(X, Tensor) else Tensor(X)
    for ax in axes:
        out = ops.ifft(out, ax)
    scale = max(1.0, float(np.max(np.abs(out.data), initial=0.0)))
    residue = float(np.max(np.abs(out.data.imag), initial=0.0))
    if residue > IMAG_RESIDUE_TOL * scale:
        raise ValueError(f"imaginary residue {residue:.3e} after inverse transform: spectrum is not conjugate symmetric")
    return ops.real(out)


_PRIMITIVES = {
    "add": ops.add,
    "sub": ops.sub,
    "scale": ops.scale,
    "mul": ops.mul,
    "matmul": ops.matmul,
    "complex-mul": ops.mul,
    "mode-mix": ops.mode_mix,
    "fft": ops.fft,
    "ifft": ops.ifft,
    "rfft": ops.rfft,
    "irfft": ops.irfft,
    "truncate": ops.truncate,
    "activation": ops.activation,
    "getitem": ops.getitem,
    "reshape": ops.reshape,
}


def record(tape, primitive, *inputs, **kwargs):
    """Apply a named primitive; the result is recorded on ``tape``.

    Inputs must be constants or tensors already tracked on ``tape``.
    """
    for x in inputs:
        if isinstance(x, Tensor) and x.tape is not None and x.tape is not tape:
            raise TapeError("input belongs to another tape")
    try:
        fn = _PRIMITIVES[primitive]
    except KeyError:
        raise ValueError(f"unknown primitive {primitive!r}") from None
    return fn(*inputs, **kwargs)


def backward(tape, loss):
    return tape.backward(loss)
