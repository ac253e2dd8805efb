"""Darcy flow pairs ``(a, u)`` with ``-div(a grad u) = f`` and ``u = 0`` on the boundary."""

import numpy as np

from .. import mg
from .grf import DARCY_GRF, sample_grf

HIGH = 12.0
LOW = 3.0


def threshold_coefficient(g, high=HIGH, low=LOW):
    """Two-valued pushforward: ``high`` where ``g >= 0``, ``low`` elsewhere."""
    return np.where(np.asarray(g) >= 0, high, low).astype(np.float64)


def darcy_solve(a, f=1.0, tol=1e-10, cfg=None):
    """Solve on the vertex grid of ``a`` (extent odd, >= 5); returns ``(u, history)``."""
    a = np.asarray(a, dtype=np.float64)
    rhs = np.broadcast_to(np.asarray(f, dtype=np.float64), a.shape).copy()
    system = mg.StencilSystem(rhs, coeff=a)
    return mg.mg_solve(system, tol=tol, cfg=cfg)


def darcy_generate(resolution, rng_seed, n_samples=1, spec=DARCY_GRF, f=1.0, tol=1e-10, n_modes=None):
    """Draw ``n_samples`` coefficient fields and solve for each.

    Parameters
    ----------
    resolution : int
        Odd grid extent >= 17 (nodes include the boundary).
    rng_seed : int or numpy.random.Generator

    Returns
    -------
    a, u : ndarray of shape ``(n_samples, resolution, resolution)``
    """
    if resolution < 17 or resolution % 2 == 0:
        raise ValueError("Darcy resolution must be an odd extent >= 17")
    g = sample_grf(spec, resolution, rng_seed, n_samples=n_samples, n_modes=n_modes)
    a = threshold_coefficient(g)
    u = np.empty_like(a)
    for i in range(n_samples):
        u[i], _ = darcy_solve(a[i], f=f, tol=tol)
    return a, u
