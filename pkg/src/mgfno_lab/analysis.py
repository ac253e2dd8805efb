"""Frequency-domain diagnostics.

* :func:`fprinciple_experiment` fits ``sin x + sin 5x`` with a small ReLU
  network on the full batch and tracks the DFT error at the two
  target frequencies.
* :func:`band_error` splits a relative spectral error into frequency bands.
* :func:`superres_eval` tabulates test errors across evaluation resolutions.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .nn.adam import AdamState, adam_step
from .operator import relative_l2
from .tensor import Tape, ops
from .tensor import fft as _fft

DEFAULT_EDGES = (0, 4, 16)


# --- band errors -------------------------------------------------------------------


def _spectrum(x, dim):
    axes = tuple(range(x.ndim - dim, x.ndim))
    return _fft.fftn(np.asarray(x, dtype=np.float64), axes)


def _wavenumber(shape):
    """Euclidean integer wavenumber magnitude on a full FFT grid."""
    freqs = np.meshgrid(*[np.abs(((np.arange(n) + n // 2) % n) - n // 2) for n in shape], indexing="ij")
    return np.sqrt(sum(f.astype(np.float64) ** 2 for f in freqs))


def band_edges(n, edges=DEFAULT_EDGES):
    """Half-open bands ``[e_i, e_{i+1})``; the last band ends past Nyquist."""
    nyq = n // 2
    edges = sorted(e for e in edges if e <= nyq)
    bands = list(zip(edges[:-1], edges[1:]))
    bands.append((edges[-1], nyq + 1))
    return bands


def band_error(pred, target, bands=None, dim=1, reference="band", rtol=1e-14):
    """Spectral error per band, pooled over the batch.

    Parameters
    ----------
    pred, target : ndarray
        ``(..., *grid)`` with ``dim`` trailing spatial axes.
    bands : list of (lo, hi), optional
        Half-open ranges of wavenumber magnitude; defaults to
        :func:`band_edges` of the first spatial extent.
    reference : {"band", "total"}
        Divide by the target norm inside the band, or by the full target
        norm. The second stays finite for bands the target leaves empty.
    rtol : float
        A band whose target norm is below ``rtol`` times the full target norm
        counts as empty.

    Returns
    -------
    dict ``{(lo, hi): float or None}``; ``None`` marks an empty band when
    ``reference="band"``.
    """
    if reference not in ("band", "total"):
        raise ValueError(f"unknown reference {reference!r}")
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    grid = target.shape[-dim:]
    bands = bands or band_edges(grid[0])
    T = _spectrum(target, dim)
    D = _spectrum(pred, dim) - T
    k = _wavenumber(grid)
    total = np.sqrt(np.sum(np.abs(T) ** 2))
    out = {}
    for lo, hi in bands:
        sel = (k >= lo) & (k < hi)
        num = np.sqrt(np.sum(np.abs(D[..., sel]) ** 2))
        if reference == "total":
            out[(lo, hi)] = None if total == 0 else float(num / total)
            continue
        den = np.sqrt(np.sum(np.abs(T[..., sel]) ** 2))
        out[(lo, hi)] = None if den == 0 or den < rtol * total else float(num / den)
    return out


def high_frequency_fraction(x, cutoff, dim=1):
    """Share of spectral energy at wavenumber magnitude ``>= cutoff``."""
    X = _spectrum(x, dim)
    k = _wavenumber(np.asarray(x).shape[-dim:])
    e = np.abs(X) ** 2
    total = e.sum()
    return float(e[..., k >= cutoff].sum() / total) if total > 0 else 0.0


@dataclass
class BandErrorTrace:
    """Rows ``(step, band_lo, band_hi, rel_err)`` in increasing step order."""

    rows: list = field(default_factory=list)

    def add(self, step, errors):
        if self.rows and step <= self.rows[-1][0]:
            raise ValueError("trace steps must strictly increase")
        for (lo, hi), err in errors.items():
            if err is not None:
                self.rows.append((int(step), lo, hi, float(err)))

    def series(self, band):
        return [(s, e) for s, lo, hi, e in self.rows if (lo, hi) == tuple(band)]

    def to_csv(self, path):
        write_csv(path, ("step", "band_lo", "band_hi", "rel_err"), self.rows)


def band_tracker(inputs, targets, every=1, bands=None, dim=1):
    """``(trace, callback)``; pass ``callback`` as ``on_step`` to a trainer."""
    trace = BandErrorTrace()

    def callback(step, model):
        if step % every == 0:
            trace.add(step, band_error(model.predict(inputs), targets, bands, dim))

    return trace, callback


# --- resolution sweeps ---------------------------------------------------------------


def superres_eval(predictors, datasets):
    """Rows ``(resolution, name, rel_err)``.

    ``predictors`` maps a name to a callable on raw inputs; ``datasets`` maps
    a resolution to ``(inputs, targets)``.
    """
    rows = []
    for res in sorted(datasets):
        a, u = datasets[res]
        for name, fn in predictors.items():
            rows.append((int(res), name, float(relative_l2(fn(a), u).data)))
    return rows


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


# --- F-Principle --------------------------------------------------------------------------


@dataclass
class FPrincipleConfig:
    n_points: int = 1000
    widths: tuple = (200, 200)
    lr: float = 5e-4
    init_std: float = 0.1
    steps: int = 10_000
    record_every: int = 10
    frequencies: tuple = (1.0, 5.0)
    threshold: float = 0.1
    loss: str = "sum"
    optimizer: str = "adam"
    stop_when: str = None


@dataclass
class FPrincipleResult:
    trace: BandErrorTrace
    bins: tuple
    crossing: dict
    final: dict
    diverged_at: int = None

    @property
    def low_first(self):
        lo, hi = self.bins
        a, b = self.crossing.get(lo), self.crossing.get(hi)
        return a is not None and (b is None or a < b)


def target_bins(cfg):
    """DFT bins nearest the target angular frequencies on the sampled interval."""
    x = np.linspace(-2 * np.pi, 2 * np.pi, cfg.n_points)
    period = cfg.n_points * (x[1] - x[0])
    return tuple(int(round(w * period / (2 * np.pi))) for w in cfg.frequencies)


def _dft_bins(y, bins):
    n = y.shape[0]
    Y = _fft.fft(y.astype(np.complex128)) / n
    return Y[list(bins)]


def fprinciple_experiment(seed=0, cfg=None):
    """Full-batch fit of ``sin x + sin 5x`` with Adam or plain gradient descent.

    Returns an :class:`FPrincipleResult` whose trace stores, per recorded
    step, ``|NN_k - f_k| / |f_k|`` at each target bin (reported as the band
    ``(k, k+1)``) and the first step at which each error fell below
    ``cfg.threshold``. ``cfg.stop_when`` ends training once the first
    (``"first"``) or every (``"all"``) target bin has crossed, which already
    decides the ordering. A non-finite loss stops training and is reported in
    ``diverged_at``.
    """
    cfg = cfg or FPrincipleConfig()
    if cfg.loss not in ("sum", "mean") or cfg.optimizer not in ("gd", "adam") or cfg.stop_when not in (None, "first", "all"):
        raise ValueError(f"unsupported loss {cfg.loss!r}, optimizer {cfg.optimizer!r} or stop_when {cfg.stop_when!r}")
    needed = {None: len(cfg.frequencies) + 1, "first": 1, "all": len(cfg.frequencies)}[cfg.stop_when]
    rng = np.random.default_rng(seed)
    x = np.linspace(-2 * np.pi, 2 * np.pi, cfg.n_points)
    y = np.sin(x) + np.sin(5 * x)
    bins = target_bins(cfg)
    y_hat = _dft_bins(y, bins)

    dims = (1,) + tuple(cfg.widths) + (1,)
    params = {}
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        params[f"W{i}"] = rng.normal(0.0, cfg.init_std, (d_in, d_out))
        params[f"b{i}"] = rng.normal(0.0, cfg.init_std, (d_out,))
    n_layers = len(dims) - 1
    xin = x[:, None]

    def forward(p):
        h = xin
        for i in range(n_layers):
            h = ops.add(ops.matmul(h, p[f"W{i}"]), p[f"b{i}"])
            if i < n_layers - 1:
                h = ops.relu(h)
        return ops.getitem(h, (slice(None), 0))

    trace = BandErrorTrace()
    crossing = {}
    final = {}
    diverged = None
    adam = AdamState(lr0=cfg.lr, halving_period=0) if cfg.optimizer == "adam" else None
    # divergence is detected from the loss value, so silence overflow warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(cfg.steps + 1):
            tape = Tape()
            bound = {name: tape.parameter(v, i) for i, (name, v) in enumerate(params.items())}
            out = forward(bound)
            diff = ops.sub(out, y)
            sq = ops.sum(ops.mul(diff, diff))
            loss = sq if cfg.loss == "sum" else ops.scale(sq, 1.0 / cfg.n_points)
            if not np.isfinite(loss.data):
                diverged = step
                break
            if step % cfg.record_every == 0 or step == cfg.steps:
                err = np.abs(_dft_bins(out.data, bins) - y_hat) / np.abs(y_hat)
                errors = {(k, k + 1): float(e) for k, e in zip(bins, err)}
                trace.add(step, errors)
                final = {k: float(e) for k, e in zip(bins, err)}
                for k, e in zip(bins, err):
                    if k not in crossing and e < cfg.threshold:
                        crossing[k] = step
            if step == cfg.steps or len(crossing) >= needed:
                break
            grads = tape.backward(loss)
            if adam is None:
                for i, name in enumerate(params):
                    params[name] = params[name] - cfg.lr * grads[i]
            else:
                adam_step(adam, params, {name: grads[i] for i, name in enumerate(params)})
    return FPrincipleResult(trace, bins, crossing, final, diverged)
