"""Geometric multigrid for ``-div(a grad u) = f`` on the unit interval/square.

Grids are vertex centred and include the boundary nodes: an extent of ``n``
means ``n - 1`` intervals of width ``h = 1/(n-1)`` (periodic grids have ``n``
nodes and ``h = 1/n``). Dirichlet boundary values are whatever the iterate
holds on the boundary; they are never updated.

The variable-coefficient operator uses face coefficients, the harmonic mean
of the two adjacent node values, so that constant ``a`` reproduces the
standard three/five-point Laplacian scaled by ``a``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from ._jit import USE_NUMBA, njit

DIRICHLET = "dirichlet"
PERIODIC = "periodic"


class MgConvergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


@dataclass
class StencilSystem:
    """Discrete ``-div(a grad u) = f``.

    ``coeff`` holds node values of ``a`` (``None`` means ``a = 1``); ``faces``
    holds one array of face coefficients per axis and is derived from
    ``coeff`` unless given explicitly (coarse levels pass it directly).
    """

    rhs: np.ndarray
    coeff: np.ndarray = None
    bc: str = DIRICHLET
    faces: tuple = None

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=np.float64)
        if self.bc not in (DIRICHLET, PERIODIC):
            raise ValueError(f"unknown boundary condition {self.bc!r}")
        if self.dim not in (1, 2):
            raise ValueError("only 1-d and 2-d systems are supported")
        if min(self.shape) < 3:
            raise ValueError("grid extents must be >= 3")
        if self.coeff is not None:
            self.coeff = np.asarray(self.coeff, dtype=np.float64)
            if self.coeff.shape != self.shape:
                raise ValueError("coefficient and right-hand side grids differ")
            if not np.all(self.coeff > 0):
                raise ValueError("coefficient must be positive everywhere")
        if self.faces is None:
            self.faces = face_coefficients(self.coeff, self.shape, self.bc)

    @property
    def shape(self):
        return self.rhs.shape

    @property
    def dim(self):
        return self.rhs.ndim

    @property
    def h(self):
        return tuple(1.0 / (n if self.bc == PERIODIC else n - 1) for n in self.shape)


def face_coefficients(coeff, shape, bc=DIRICHLET):
    """Harmonic-mean face values, one array per axis.

    Axis ``d`` faces sit between nodes ``i`` and ``i+1`` along ``d``; there are
    ``n_d - 1`` of them (``n_d`` when periodic, the last one wrapping).
    """
    faces = []
    for ax, n in enumerate(shape):
        if coeff is None:
            fshape = list(shape)
            fshape[ax] = n if bc == PERIODIC else n - 1
            faces.append(np.ones(fshape))
            continue
        a0 = coeff
        a1 = np.roll(coeff, -1, axis=ax)
        f = 2.0 * a0 * a1 / (a0 + a1)
        if bc != PERIODIC:
            f = np.take(f, np.arange(n - 1), axis=ax)
        faces.append(f)
    return tuple(faces)


# --- operator kernels ---------------------------------------------------------


def _apply_numpy(u, faces, h, bc):
    """``A u``; zero on Dirichlet boundary nodes."""
    out = np.zeros_like(u)
    if bc == PERIODIC:
        for ax, (f, hx) in enumerate(zip(faces, h)):
            fwd = np.roll(u, -1, axis=ax) - u
            flux = f * fwd
            out -= (flux - np.roll(flux, 1, axis=ax)) / hx**2
        return out
    inner = tuple(slice(1, -1) for _ in range(u.ndim))
    acc = np.zeros_like(u[inner])
    for ax, (f, hx) in enumerate(zip(faces, h)):
        flux = f * np.diff(u, axis=ax)  # face values between consecutive nodes
        sl_hi = [slice(1, -1)] * u.ndim
        sl_lo = [slice(1, -1)] * u.ndim
        sl_hi[ax] = slice(1, None)
        sl_lo[ax] = slice(0, -1)
        acc -= (flux[tuple(sl_hi)] - flux[tuple(sl_lo)]) / hx**2
    out[inner] = acc
    return out


def _diag_numpy(faces, h, shape, bc):
    d = np.zeros(shape)
    for ax, (f, hx) in enumerate(zip(faces, h)):
        if bc == PERIODIC:
            d += (f + np.roll(f, 1, axis=ax)) / hx**2
        else:
            pad = [(0, 0)] * len(shape)
            pad[ax] = (1, 0)
            lo = np.pad(f, pad)
            pad[ax] = (0, 1)
            hi = np.pad(f, pad)
            d += (lo + hi) / hx**2
    return d


def _jacobi_numpy(u, f, faces, h, omega, bc):
    r = f - _apply_numpy(u, faces, h, bc)
    d = _diag_numpy(faces, h, u.shape, bc)
    out = u.copy()
    if bc == PERIODIC:
        out += omega * r / d
    else:
        inner = tuple(slice(1, -1) for _ in range(u.ndim))
        out[inner] += omega * r[inner] / d[inner]
    return out


@njit
def _jacobi1d_numba(u, f, fx, hx, omega):
    n = u.shape[0]
    out = u.copy()
    c = 1.0 / (hx * hx)
    for i in range(1, n - 1):
        aw = fx[i - 1] * c
        ae = fx[i] * c
        au = (aw + ae) * u[i] - aw * u[i - 1] - ae * u[i + 1]
        out[i] = u[i] + omega * (f[i] - au) / (aw + ae)
    return out


@njit
def _jacobi2d_numba(u, f, fx, fy, hx, hy, omega):
    n1, n2 = u.shape
    out = u.copy()
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    for i in range(1, n1 - 1):
        for j in range(1, n2 - 1):
            aw = fx[i - 1, j] * cx
            ae = fx[i, j] * cx
            as_ = fy[i, j - 1] * cy
            an = fy[i, j] * cy
            d = aw + ae + as_ + an
            au = d * u[i, j] - aw * u[i - 1, j] - ae * u[i + 1, j] - as_ * u[i, j - 1] - an * u[i, j + 1]
            out[i, j] = u[i, j] + omega * (f[i, j] - au) / d
    return out


@njit
def _residual2d_numba(u, f, fx, fy, hx, hy):
    n1, n2 = u.shape
    r = np.zeros_like(u)
    cx = 1.0 / (hx * hx)
    cy = 1.0 / (hy * hy)
    for i in range(1, n1 - 1):
        for j in range(1, n2 - 1):
            aw = fx[i - 1, j] * cx
            ae = fx[i, j] * cx
            as_ = fy[i, j - 1] * cy
            an = fy[i, j] * cy
            au = (aw + ae + as_ + an) * u[i, j] - aw * u[i - 1, j] - ae * u[i + 1, j] - as_ * u[i, j - 1] - an * u[i, j + 1]
            r[i, j] = f[i, j] - au
    return r


def apply_operator(system, u):
    return _apply_numpy(np.asarray(u, dtype=np.float64), system.faces, system.h, system.bc)


def residual(system, u):
    """``f - A u`` (zero on Dirichlet boundary nodes)."""
    u = np.asarray(u, dtype=np.float64)
    if USE_NUMBA and system.bc == DIRICHLET and system.dim == 2:
        return _residual2d_numba(u, system.rhs, system.faces[0], system.faces[1], *system.h)
    r = system.rhs - _apply_numpy(u, system.faces, system.h, system.bc)
    if system.bc == DIRICHLET:
        r = _zero_boundary(r)
    return r


def _zero_boundary(x):
    out = np.zeros_like(x)
    inner = tuple(slice(1, -1) for _ in range(x.ndim))
    out[inner] = x[inner]
    return out


def jacobi_sweep(system, u, omega=1.0):
    """One weighted Jacobi update ``u + omega D^{-1} (f - A u)``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != system.shape:
        raise ValueError(f"iterate shape {u.shape} does not match grid {system.shape}")
    if USE_NUMBA and system.bc == DIRICHLET:
        if system.dim == 1:
            return _jacobi1d_numba(u, system.rhs, system.faces[0], system.h[0], omega)
        return _jacobi2d_numba(u, system.rhs, system.faces[0], system.faces[1], system.h[0], system.h[1], omega)
    return _jacobi_numpy(u, system.rhs, system.faces, system.h, omega, system.bc)


# --- convergence factor -------------------------------------------------------


def convergence_factor(n, p, omega=1.0):
    """Measured ``|c^{k+1} / c^k|`` of mode ``sin(p pi x)`` under one sweep.

    ``n`` is the number of grid nodes of a homogeneous 1-d Dirichlet Poisson
    problem (``n - 1`` intervals); ``1 <= p <= n - 2``.
    """
    if not 1 <= p <= n - 2:
        raise ValueError(f"mode {p} out of range for {n} nodes")
    x = np.linspace(0.0, 1.0, n)
    mode = np.sin(p * np.pi * x)
    system = StencilSystem(np.zeros(n))
    after = jacobi_sweep(system, mode, omega)
    return abs(after @ mode) / (mode @ mode)


def jacobi_symbol(theta, omega=1.0):
    """Analytic amplification ``|1 - 2 omega sin^2(theta/2)|``."""
    return np.abs(1.0 - 2.0 * omega * np.sin(np.asarray(theta) / 2.0) ** 2)


def convergence_factor_curve(n=65, omega=1.0):
    """``(theta, mu)`` for every mode ``p = 1..n-2``, ``theta = p pi h``."""
    ps = np.arange(1, n - 1)
    theta = ps * np.pi / (n - 1)
    mu = np.array([convergence_factor(n, int(p), omega) for p in ps])
    return theta, mu


# --- transfer operators -------------------------------------------------------


def _restrict_axis(x, ax):
    n = x.shape[ax]
    if (n - 1) % 2:
        raise ValueError(f"extent {n} cannot be coarsened (needs an even number of intervals)")
    x = np.moveaxis(x, ax, 0)
    out = x[::2].copy()
    out[1:-1] = 0.25 * x[1:-2:2] + 0.5 * x[2:-1:2] + 0.25 * x[3::2]
    return np.moveaxis(out, 0, ax)


def _prolong_axis(x, ax):
    x = np.moveaxis(x, ax, 0)
    n = x.shape[0]
    out = np.empty((2 * (n - 1) + 1,) + x.shape[1:])
    out[::2] = x
    out[1::2] = 0.5 * (x[:-1] + x[1:])
    return np.moveaxis(out, 0, ax)


def restrict(fine):
    """Full weighting (``[1/4, 1/2, 1/4]`` per axis); boundary nodes injected."""
    out = np.asarray(fine, dtype=np.float64)
    for ax in range(out.ndim):
        out = _restrict_axis(out, ax)
    return out


def prolong(coarse):
    """Linear (1-d) / bilinear (2-d) interpolation to the grid with half spacing."""
    out = np.asarray(coarse, dtype=np.float64)
    for ax in range(out.ndim):
        out = _prolong_axis(out, ax)
    return out


def _coarsen_faces(faces, shape):
    """Face coefficients of the coarse grid.

    Along the face normal the two fine faces act in series (harmonic mean);
    across it, fine faces are averaged with full weighting.
    """
    out = []
    for ax, f in enumerate(faces):
        g = np.moveaxis(f, ax, 0)
        g = 2.0 / (1.0 / g[0::2] + 1.0 / g[1::2])
        g = np.moveaxis(g, 0, ax)
        for other in range(len(shape)):
            if other != ax:
                g = _restrict_axis(g, other)
        out.append(g)
    return tuple(out)


# --- V-cycle --------------------------------------------------------------------


@dataclass
class MgConfig:
    levels: int = 12
    pre_smooth: int = 2
    post_smooth: int = 2
    omega: float = 2.0 / 3.0
    max_cycles: int = 100
    min_coarse: int = 3

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("at least two grid levels are required")
        if self.pre_smooth < 1 or self.post_smooth < 1:
            raise ValueError("smoothing counts must be >= 1")


@dataclass
class _Level:
    system: StencilSystem
    solver: object = field(default=None, repr=False)


def build_hierarchy(system, cfg):
    """Re-discretized operators from fine (index 0) to coarse."""
    if system.bc != DIRICHLET:
        raise ValueError("V-cycles need a Dirichlet problem; the periodic Poisson operator is singular")
    levels = [_Level(system)]
    shape = system.shape
    while len(levels) < cfg.levels:
        if any((n - 1) % 2 for n in shape):
            break
        coarse = tuple((n - 1) // 2 + 1 for n in shape)
        if min(coarse) < cfg.min_coarse:
            break
        faces = _coarsen_faces(levels[-1].system.faces, shape)
        levels.append(_Level(StencilSystem(np.zeros(coarse), faces=faces)))
        shape = coarse
    if len(levels) < 2:
        raise ValueError(f"grid {system.shape} admits no coarse level")
    levels[-1].solver = _factorize(levels[-1].system)
    return levels


def sparse_matrix(system):
    """CSR matrix of the Dirichlet operator on interior unknowns."""
    inner = tuple(n - 2 for n in system.shape)
    size = int(np.prod(inner))
    idx = np.arange(size).reshape(inner)
    rows, cols, vals = [], [], []
    diag = np.zeros(inner)
    for ax, (f, hx) in enumerate(zip(system.faces, system.h)):
        inner_sl = [slice(1, -1)] * system.dim
        lo = list(inner_sl)
        hi = list(inner_sl)
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        f_lo = f[tuple(lo)] / hx**2  # face toward the lower neighbour
        f_hi = f[tuple(hi)] / hx**2
        diag += f_lo + f_hi
        # off-diagonals for neighbours that are interior
        src = [slice(None)] * system.dim
        dst = [slice(None)] * system.dim
        src[ax] = slice(1, None)
        dst[ax] = slice(0, -1)
        rows.append(idx[tuple(src)].ravel())
        cols.append(idx[tuple(dst)].ravel())
        vals.append(-f_lo[tuple(src)].ravel())
        rows.append(idx[tuple(dst)].ravel())
        cols.append(idx[tuple(src)].ravel())
        vals.append(-f_hi[tuple(dst)].ravel())
    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    return scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


DENSE_LIMIT = 2000


def _factorize(system):
    A = sparse_matrix(system)
    if A.shape[0] <= DENSE_LIMIT:
        lu = scipy.linalg.lu_factor(A.toarray())
        return lambda b: scipy.linalg.lu_solve(lu, b)
    return scipy.sparse.linalg.splu(A.tocsc()).solve


def _solve_coarse(level, rhs):
    inner = tuple(slice(1, -1) for _ in range(rhs.ndim))
    out = np.zeros_like(rhs)
    sol = level.solver(rhs[inner].ravel())
    if not np.all(np.isfinite(sol)):
        raise np.linalg.LinAlgError("coarsest-level system is singular")
    out[inner] = sol.reshape(out[inner].shape)
    return out


def _cycle(levels, i, u, f, cfg):
    level = levels[i]
    if i == len(levels) - 1:
        return _solve_coarse(level, f)
    system = StencilSystem(f, faces=level.system.faces)
    for _ in range(cfg.pre_smooth):
        u = jacobi_sweep(system, u, cfg.omega)
    r = residual(system, u)
    e = _cycle(levels, i + 1, np.zeros(levels[i + 1].system.shape), restrict(r), cfg)
    u = u + prolong(e)
    for _ in range(cfg.post_smooth):
        u = jacobi_sweep(system, u, cfg.omega)
    return u


def v_cycle(system, u0, cfg=None, levels=None):
    """One V-cycle: smooth, restrict the residual, recurse, correct, smooth."""
    cfg = cfg or MgConfig()
    levels = levels or build_hierarchy(system, cfg)
    u0 = np.asarray(u0, dtype=np.float64)
    return _cycle(levels, 0, u0, system.rhs, cfg)


def mg_solve(system, tol=1e-10, cfg=None, u0=None):
    """V-cycles until ``||f - A u|| / ||f|| < tol``.

    Returns ``(u, history)`` with the relative residual after every cycle.
    Raises :class:`MgConvergenceError` carrying the history when
    ``cfg.max_cycles`` is exhausted.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    cfg = cfg or MgConfig()
    levels = build_hierarchy(system, cfg)
    u = np.zeros(system.shape) if u0 is None else np.array(u0, dtype=np.float64)
    fnorm = np.linalg.norm(_zero_boundary(system.rhs)) or 1.0
    history = [np.linalg.norm(residual(system, u)) / fnorm]
    for _ in range(cfg.max_cycles):
        if history[-1] < tol:
            return u, history
        u = _cycle(levels, 0, u, system.rhs, cfg)
        history.append(np.linalg.norm(residual(system, u)) / fnorm)
        if not np.isfinite(history[-1]):
            break
    if history[-1] < tol:
        return u, history
    raise MgConvergenceError(f"no convergence to {tol:g} after {len(history) - 1} cycles", history)


def direct_solve(system):
    """Sparse direct solution (boundary values taken as zero)."""
    A = sparse_matrix(system)
    inner = tuple(slice(1, -1) for _ in range(system.dim))
    u = np.zeros(system.shape)
    u[inner] = scipy.sparse.linalg.spsolve(A.tocsc(), system.rhs[inner].ravel()).reshape(u[inner].shape)
    return u


def poisson_1d(n, rhs=None):
    f = np.zeros(n) if rhs is None else np.asarray(rhs, dtype=np.float64)
    return StencilSystem(f)
