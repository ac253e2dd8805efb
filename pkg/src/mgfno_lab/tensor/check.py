"""Central finite-difference oracle for reverse-mode gradients."""

import numpy as np

from .tape import Tape


def relative_error(analytic, numeric):
    """``max|a - n| / max|n|`` (absolute error when ``n`` vanishes)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.max(np.abs(numeric), initial=0.0)
    err = np.max(np.abs(analytic - numeric), initial=0.0)
    return err / denom if denom > 0 else err


def _loss_value(fn, params):
    tape = Tape()
    leaves = {k: tape.parameter(v, i) for i, (k, v) in enumerate(params.items())}
    return float(np.real(fn(leaves).data))


def finite_difference_grad(fn, params, h=1e-6):
    """Central differences of ``fn`` w.r.t. every entry of every parameter.

    Complex entries are perturbed along the real and imaginary axes and the
    result is packed as ``dL/dRe + i dL/dIm``.
    """
    grads = {}
    for name, value in params.items():
        value = np.asarray(value)
        g = np.zeros(value.shape, dtype=value.dtype)
        directions = (1.0, 1j) if np.iscomplexobj(value) else (1.0,)
        for idx in np.ndindex(value.shape):
            for d in directions:
                plus = {k: np.array(v) for k, v in params.items()}
                minus = {k: np.array(v) for k, v in params.items()}
                plus[name][idx] += h * d
                minus[name][idx] -= h * d
                slope = (_loss_value(fn, plus) - _loss_value(fn, minus)) / (2 * h)
                g[idx] += slope * d
        grads[name] = g
    return grads


def gradcheck(fn, params, h=1e-6):
    """Compare tape gradients of ``fn`` with central differences.

    ``fn`` maps a dict of tracked parameter tensors to a scalar tensor.
    Returns ``{name: relative_error}``.
    """
    tape = Tape()
    names = list(params)
    leaves = {k: tape.parameter(params[k], i) for i, k in enumerate(names)}
    analytic = tape.backward(fn(leaves))
    numeric = finite_difference_grad(fn, params, h)
    return {k: relative_error(analytic[i], numeric[k]) for i, k in enumerate(names)}
