"""Backend switch for the compiled kernels.

Hot loops are written twice: once as a numba ``@njit`` kernel and once as a
vectorized numpy routine. ``MGFNO_NUMBA=0`` forces the numpy path; it is also
used automatically when numba cannot be imported. ``MGFNO_THREADS`` caps the
numba worker pool.
"""

import os

# the workqueue layer needs no external runtime; an old system TBB only warns
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("MGFNO_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit`` with ``cache=True``; identity decorator without numba."""
    kwargs.setdefault("cache", True)
    if not HAS_NUMBA:
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


prange = numba.prange if HAS_NUMBA else range


def set_threads(n=None):
    """Apply ``MGFNO_THREADS`` (or ``n``) to the numba thread pool."""
    if n is None:
        env = os.environ.get("MGFNO_THREADS")
        if not env:
            return
        n = int(env)
    if HAS_NUMBA:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


set_threads()
