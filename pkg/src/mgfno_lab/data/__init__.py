"""Random fields, PDE ground-truth solvers, grid subsampling and file formats."""

import numpy as np

from .burgers import burgers_solve
from .darcy import darcy_generate, darcy_solve, threshold_coefficient
from .grf import BURGERS_GRF, DARCY_GRF, NEUMANN, PERIODIC, GrfSpec, sample_grf
from .io import Dataset, FormatError, dataset_bytes, dataset_read, dataset_write, file_hash, tensors_read, tensors_write

__all__ = [
    "GrfSpec",
    "BURGERS_GRF",
    "DARCY_GRF",
    "PERIODIC",
    "NEUMANN",
    "sample_grf",
    "burgers_solve",
    "darcy_generate",
    "darcy_solve",
    "threshold_coefficient",
    "downsample",
    "Dataset",
    "FormatError",
    "dataset_bytes",
    "dataset_read",
    "dataset_write",
    "tensors_read",
    "tensors_write",
    "file_hash",
    "burgers_dataset",
]


def downsample(x, factor, axes=(-1,), periodic=True):
    """Strided point subsampling along ``axes``.

    Periodic grids need ``factor | n``; grids that include both end points
    need ``factor | n - 1`` so the end points survive.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    x = np.asarray(x)
    key = [slice(None)] * x.ndim
    for ax in axes:
        n = x.shape[ax]
        span = n if periodic else n - 1
        if span % factor:
            raise ValueError(f"factor {factor} does not divide {'extent' if periodic else 'extent - 1'} {span}")
        key[ax] = slice(None, None, factor)
    return x[tuple(key)]


def burgers_dataset(n_samples, resolution, rng_seed, nu=0.1, t_end=1.0, spec=BURGERS_GRF):
    """Initial conditions and solutions on a periodic grid of ``resolution`` points."""
    a = sample_grf(spec, resolution, rng_seed, n_samples=n_samples)
    u = burgers_solve(a, nu=nu, t_end=t_end)
    return a, u
