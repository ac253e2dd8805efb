"""Viscous Burgers ``u_t + (u^2/2)_x = nu u_xx`` on the periodic unit interval.

Strang splitting: the heat part is advanced exactly by the Fourier multiplier
``exp(-nu (2 pi k)^2 dt)``, the convective part by classical RK4 substeps on
the pseudo-spectral conservative flux with 2/3-rule dealiasing. The state
lives in Fourier space throughout.
"""

import numpy as np

from ..tensor import fft as _fft


def _dealias_mask(n):
    k = np.arange(n // 2 + 1)
    return k < (n // 3 + 1) if n >= 6 else np.ones(k.size, dtype=bool)


def _flux_rhs(U, n, ik, mask):
    """Fourier coefficients of ``-(u^2/2)_x`` for dealiased ``U``."""
    u = _fft.irfft(U * mask, n, axis=-1)
    return -ik * _fft.rfft(0.5 * u * u, axis=-1) * mask


def burgers_solve(u0, nu=0.1, t_end=1.0, dt=None, cfl=2.0, max_steps=10_000_000):
    """Advance Burgers from ``u0`` (shape ``(..., n)``) to ``t_end``.

    Parameters
    ----------
    u0 : array_like
        Initial data on the periodic grid ``i/n``; leading axes are a batch.
    nu : float
        Viscosity (> 0).
    t_end : float
    dt : float, optional
        Fixed step. By default ``cfl * h / max|u0|`` capped at ``1e-3``, then
        shrunk so that an integer number of steps lands on ``t_end``.

    Raises
    ------
    FloatingPointError
        If the solution becomes non-finite or grows by more than ``1e6``.
    """
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    u0 = np.asarray(u0, dtype=np.float64)
    n = u0.shape[-1]
    if t_end == 0:
        return u0.copy()
    scale = float(np.max(np.abs(u0))) if u0.size else 0.0
    if dt is None:
        dt = 1e-3 if scale == 0 else min(1e-3, cfl / (n * scale))
    steps = int(np.ceil(t_end / dt - 1e-12))
    if steps > max_steps:
        raise ValueError(f"{steps} steps exceed max_steps={max_steps}")
    dt = t_end / steps

    k = np.arange(n // 2 + 1)
    ik = 2j * np.pi * k
    if n % 2 == 0:
        ik[-1] = 0.0  # the Nyquist derivative of a real field is taken as zero
    mask = _dealias_mask(n)
    half_heat = np.exp(-nu * (2 * np.pi * k) ** 2 * dt / 2)
    full_heat = half_heat * half_heat

    bound = 1e6 * max(scale, 1.0)
    U = _fft.rfft(u0, axis=-1) * half_heat
    for step in range(steps):
        k1 = _flux_rhs(U, n, ik, mask)
        k2 = _flux_rhs(U + 0.5 * dt * k1, n, ik, mask)
        k3 = _flux_rhs(U + 0.5 * dt * k2, n, ik, mask)
        k4 = _flux_rhs(U + dt * k3, n, ik, mask)
        U = U + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        U = U * (full_heat if step < steps - 1 else half_heat)
        if step % 64 == 0 or step == steps - 1:
            peak = np.max(np.abs(U)) / n if U.size else 0.0
            if not np.isfinite(peak) or peak > bound:
                raise FloatingPointError(f"Burgers solution blew up at step {step} (t={(step + 1) * dt:.4g})")
    return _fft.irfft(U, n, axis=-1)
