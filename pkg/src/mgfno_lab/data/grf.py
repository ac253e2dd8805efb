"""Gaussian random fields ``N(0, sigma2 (-Laplacian + c I)^(-exponent))``.

Fields are drawn in the eigenbasis of the Laplacian on the unit interval or
square: the real Fourier basis ``1, sqrt2 cos(2 pi k x), sqrt2 sin(2 pi k x)``
for periodic domains and the cosine basis ``1, sqrt2 cos(pi k x)`` for zero
Neumann conditions. Each coefficient is an independent standard normal scaled
by ``sqrt(sigma2) * (lambda_k + c)^(-exponent/2)``.
"""

from dataclasses import dataclass

import numpy as np

from ..tensor import fft as _fft

PERIODIC = "periodic"
NEUMANN = "neumann"


@dataclass(frozen=True)
class GrfSpec:
    dim: int = 1
    sigma2: float = 625.0
    c: float = 25.0
    exponent: float = 2.0
    bc: str = PERIODIC

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.exponent <= self.dim / 2:
            raise ValueError("exponent must exceed dim/2 for a trace-class covariance")
        if self.bc not in (PERIODIC, NEUMANN):
            raise ValueError(f"unknown boundary condition {self.bc!r}")

    def mode_std(self, eigenvalue):
        """Standard deviation of the coefficient of an eigenfunction."""
        return np.sqrt(self.sigma2) * (np.asarray(eigenvalue, dtype=np.float64) + self.c) ** (-self.exponent / 2)


BURGERS_GRF = GrfSpec(dim=1, sigma2=625.0, c=25.0, exponent=2.0, bc=PERIODIC)
DARCY_GRF = GrfSpec(dim=2, sigma2=1.0, c=9.0, exponent=2.0, bc=NEUMANN)


def grid_points(resolution, bc):
    """Periodic grids exclude the right end point, Neumann grids include it."""
    if bc == PERIODIC:
        return np.arange(resolution) / resolution
    return np.linspace(0.0, 1.0, resolution)


def periodic_basis(resolution):
    """Columns ``1, sqrt2 cos, sqrt2 sin, ...`` sampled on the periodic grid,
    with the matching Laplacian eigenvalues ``(2 pi k)^2``."""
    x = grid_points(resolution, PERIODIC)
    cols = [np.ones(resolution)]
    eig = [0.0]
    for k in range(1, (resolution - 1) // 2 + 1):
        cols += [np.sqrt(2) * np.cos(2 * np.pi * k * x), np.sqrt(2) * np.sin(2 * np.pi * k * x)]
        eig += [(2 * np.pi * k) ** 2] * 2
    if resolution % 2 == 0:
        cols.append(np.cos(np.pi * resolution * x))
        eig.append((np.pi * resolution) ** 2)
    return np.stack(cols, axis=1), np.array(eig)


def neumann_basis(resolution, n_modes=None):
    """Columns ``1, sqrt2 cos(pi k x)`` on the closed grid, eigenvalues ``(pi k)^2``."""
    n_modes = resolution if n_modes is None else n_modes
    x = grid_points(resolution, NEUMANN)
    k = np.arange(n_modes)
    basis = np.cos(np.pi * np.outer(x, k))
    basis[:, 1:] *= np.sqrt(2)
    return basis, (np.pi * k) ** 2


def _sample_periodic_1d(spec, resolution, rng, n):
    kmax = resolution // 2
    k = np.arange(kmax + 1)
    std = spec.mode_std((2 * np.pi * k) ** 2)
    xi = rng.standard_normal((n, kmax + 1))
    eta = rng.standard_normal((n, kmax + 1))
    # irfft reproduces sum_k std_k (xi sqrt2 cos + eta sqrt2 sin) from these coefficients
    X = resolution * std * (xi - 1j * eta) / np.sqrt(2)
    X[:, 0] = resolution * std[0] * xi[:, 0]
    if resolution % 2 == 0:
        X[:, kmax] = resolution * std[kmax] * xi[:, kmax]
    return _fft.irfft(X, resolution, axis=-1)


def sample_grf(spec, resolution, rng_seed, n_samples=None, n_modes=None):
    """Draw GRF samples on a uniform grid.

    Parameters
    ----------
    spec : GrfSpec
    resolution : int
        Grid extent per axis (>= 4).
    rng_seed : int or numpy.random.Generator
    n_samples : int, optional
        Number of independent fields; ``None`` returns a single field.
    n_modes : int, optional
        Truncate the Neumann cosine expansion to the first ``n_modes`` per axis.

    Returns
    -------
    ndarray of shape ``(n_samples, *grid)`` or ``grid``.
    """
    if resolution < 4:
        raise ValueError("resolution must be >= 4")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    n = 1 if n_samples is None else int(n_samples)
    if spec.bc == PERIODIC and spec.dim == 1:
        out = _sample_periodic_1d(spec, resolution, rng, n)
    else:
        if spec.bc == PERIODIC:
            basis, eig = periodic_basis(resolution)
        else:
            basis, eig = neumann_basis(resolution, n_modes)
        if spec.dim == 1:
            std = spec.mode_std(eig)
            out = (rng.standard_normal((n, eig.size)) * std) @ basis.T
        else:
            std = spec.mode_std(eig[:, None] + eig[None, :])
            coef = rng.standard_normal((n, eig.size, eig.size)) * std
            out = np.einsum("ik,nkl,jl->nij", basis, coef, basis, optimize=True)
    return out if n_samples is not None else out[0]
