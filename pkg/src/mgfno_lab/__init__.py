"""Fourier neural operators, geometric multigrid and coarse-to-fine residual
operator ensembles, built on a small numpy/numba tensor core."""

__version__ = "0.1.0"
