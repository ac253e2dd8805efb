"""Coarse-to-fine residual training of a three-level operator ensemble.

Level 1 learns ``a -> u`` on the coarsest grid. Each following level learns
the previous level's residual, computed on that level's grid, interpolated to
the next grid and then normalized with global training-set statistics. At
inference all levels run directly on the query grid and their denormalized
outputs are summed.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .data.io import Dataset, file_hash, tensors_read, tensors_write
from .nn.adam import AdamState, adam_step
from .operator import FnoConfig, FnoModel, MscaleConfig, MscaleFno, relative_l2, with_coords
from .tensor import Tape, ops

STD_FLOOR = 1e-12


# --- grids --------------------------------------------------------------------


@dataclass
class GridLevel:
    resolution: int
    train: Dataset
    test: Dataset = None


@dataclass
class GridHierarchy:
    """Index-aligned datasets on strictly increasing resolutions."""

    levels: list
    periodic: bool = True

    def __post_init__(self):
        if len(self.levels) < 2:
            raise ValueError("a hierarchy needs at least two levels")
        res = [lv.resolution for lv in self.levels]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise ValueError(f"resolutions must strictly increase, got {res}")
        first = self.levels[0]
        for lv in self.levels:
            if any(n != lv.resolution for n in lv.train.grid):
                raise ValueError(f"level {lv.resolution}: dataset grid {lv.train.grid} does not match")
            if len(lv.train) != len(first.train):
                raise ValueError("level datasets are not index-aligned (training sizes differ)")
            if (lv.test is None) != (first.test is None) or (lv.test is not None and len(lv.test) != len(first.test)):
                raise ValueError("level datasets are not index-aligned (test sizes differ)")

    @property
    def spatial_dim(self):
        return len(self.levels[0].train.grid)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]


# --- residual transfer ----------------------------------------------------------


def _dyadic_axis(v, ax, periodic):
    v = np.moveaxis(v, ax, -1)
    n = v.shape[-1]
    if periodic:
        out = np.empty(v.shape[:-1] + (2 * n,))
        out[..., 0::2] = v
        out[..., 1::2] = 0.5 * (v + np.roll(v, -1, axis=-1))
    else:
        out = np.empty(v.shape[:-1] + (2 * n - 1,))
        out[..., 0::2] = v
        out[..., 1::2] = 0.5 * (v[..., :-1] + v[..., 1:])
    return np.moveaxis(out, -1, ax)


def _linear_axis(v, ax, m, periodic):
    v = np.moveaxis(v, ax, -1)
    n = v.shape[-1]
    if periodic:
        src = np.arange(n + 1) / n
        dst = np.arange(m) / m
        vv = np.concatenate([v, v[..., :1]], axis=-1)
    else:
        src = np.linspace(0.0, 1.0, n)
        dst = np.linspace(0.0, 1.0, m)
        vv = v
    # locate each target node in the source cell and blend the two end values
    idx = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, src.size - 2)
    w = (dst - src[idx]) / (src[idx + 1] - src[idx])
    out = vv[..., idx] * (1.0 - w) + vv[..., idx + 1] * w
    return np.moveaxis(out, -1, ax)


def is_dyadic(n, m, periodic):
    return m == 2 * n if periodic else m == 2 * n - 1


def prolong_residual(r, target, periodic=True):
    """Interpolate ``r`` of shape ``(B, *grid)`` to ``target`` extents.

    Dyadic refinements copy coincident nodes, average the two neighbours at
    edge midpoints and the four corners at cell centres (2-d), i.e. exact
    (bi)linear interpolation; other ratios interpolate (bi)linearly at the
    target nodes.
    """
    r = np.asarray(r, dtype=np.float64)
    dim = r.ndim - 1
    target = (target,) * dim if np.isscalar(target) else tuple(target)
    if len(target) != dim:
        raise ValueError(f"target {target} does not match a {dim}-d field")
    out = r
    for k, m in enumerate(target):
        ax = k + 1
        n = out.shape[ax]
        if m < n or (not periodic and n < 2):
            raise ValueError(f"cannot prolong extent {n} to {m}")
        if m == n:
            continue
        if is_dyadic(n, m, periodic):
            out = _dyadic_axis(out, ax, periodic)
        else:
            out = _linear_axis(out, ax, m, periodic)
    return out


# --- normalization ---------------------------------------------------------------


@dataclass
class NormalizationStats:
    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, r):
        r = np.asarray(r, dtype=np.float64)
        std = float(r.std())
        return cls(float(r.mean()), std if std > STD_FLOOR else 1.0)

    def normalize(self, r):
        return (np.asarray(r) - self.mean) / self.std

    def denormalize(self, z):
        return np.asarray(z) * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean, "std": self.std}


def compute_residual_dataset(model, level, next_level, periodic=True, stats=None, previous=None):
    """Normalized residual targets for the next level.

    Parameters
    ----------
    model : FnoModel or MscaleFno
        Trained on ``level``.
    level, next_level : GridLevel
    previous : tuple, optional
        ``(train_targets, test_targets, stats)`` the model was trained on, in
        normalized units; ``None`` when ``model`` learned ``u`` itself.
    stats : NormalizationStats, optional
        Reuse instead of fitting on the training residuals.

    Returns
    -------
    train, test : ndarray
        Normalized prolonged residuals (``test`` is ``None`` without a test split).
    stats : NormalizationStats
    """

    def raw(split_idx):
        ds = level.train if split_idx == 0 else level.test
        nxt = next_level.train if split_idx == 0 else next_level.test
        if ds is None:
            return None
        if len(ds) != len(nxt):
            raise ValueError("level datasets are not index-aligned")
        if previous is None:
            target = ds.outputs
            pred = model.predict(ds.inputs)
        else:
            prev_stats = previous[2]
            target = prev_stats.denormalize(previous[split_idx])
            pred = prev_stats.denormalize(model.predict(ds.inputs))
        r = target - pred
        return prolong_residual(r, nxt.grid, periodic)

    r_train = raw(0)
    r_test = raw(1)
    stats = stats or NormalizationStats.fit(r_train)
    return stats.normalize(r_train), (None if r_test is None else stats.normalize(r_test)), stats


# --- training ------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 20
    lr0: float = 1e-3
    halving_period: int = 100
    seed: int = 0


def _spatial_dim(model):
    return model.config.spatial_dim if isinstance(model, FnoModel) else model.config.branch.spatial_dim


def _periodic(model):
    return model.config.periodic if isinstance(model, FnoModel) else model.config.branch.periodic


def _loss_and_grads(model, x, y):
    tape = Tape()
    bound = model.bind(tape)
    pred = model.forward(x, params=bound)
    if pred.shape[-1] == 1 and y.ndim == pred.ndim - 1:
        pred = ops.getitem(pred, (Ellipsis, 0))
    loss = relative_l2(pred, y)
    grads = tape.backward(loss)
    return float(loss.data), {name: grads[i] for i, name in enumerate(bound)}


def train_level(model, inputs, targets, cfg=None, test_inputs=None, test_targets=None, on_step=None):
    """Minimize the mean relative L2 error of ``model`` on ``(inputs, targets)``.

    Returns ``(model, history)`` where history rows are
    ``(epoch, train_loss, test_loss)``; ``test_loss`` is ``nan`` without a
    test split. ``model`` is updated in place. ``on_step(step, model)`` is
    called after every optimizer step.

    Raises
    ------
    FloatingPointError
        When a batch loss is not finite.
    """
    cfg = cfg or TrainConfig()
    history = []
    if cfg.epochs <= 0:
        return model, history
    dim = _spatial_dim(model)
    x_all = with_coords(inputs, dim, _periodic(model))
    y_all = np.asarray(targets, dtype=np.float64)
    n = x_all.shape[0]
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(lr0=cfg.lr0, halving_period=cfg.halving_period)
    params = model.params
    ids = {name: i for i, name in enumerate(params)}
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, grads = _loss_and_grads(model, x_all[idx], y_all[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            adam_step(state, params, grads, epoch=epoch, ids=ids)
            total += loss * len(idx)
            step += 1
            if on_step is not None:
                on_step(step, model)
        test_loss = float("nan")
        if test_inputs is not None:
            test_loss = float(relative_l2(model.predict(test_inputs), test_targets).data)
        history.append((epoch, total / n, test_loss))
    return model, history


# --- ensemble --------------------------------------------------------------------------


@dataclass
class EnsembleModel:
    models: list
    stats: list = field(default_factory=list)
    trained: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.stats) != len(self.models) - 1:
            raise ValueError("need one NormalizationStats per residual level")
        if not self.trained:
            self.trained = [False] * len(self.models)

    def n_params(self):
        return sum(m.n_params() for m in self.models)

    def level_predictions(self, a, batch_size=50):
        """Denormalized contribution of every level on the grid of ``a``."""
        if not all(self.trained):
            raise RuntimeError("every level must be trained before inference")
        modes = max(_modes(m) for m in self.models)
        grid = np.asarray(a).shape[1:]
        if min(grid) < 2 * modes:
            raise ValueError(f"grid {grid} too small for {modes} modes")
        out = [self.models[0].predict(a, batch_size)]
        for model, st in zip(self.models[1:], self.stats):
            out.append(st.denormalize(model.predict(a, batch_size)))
        return out

    def predict(self, a, batch_size=50):
        parts = self.level_predictions(a, batch_size)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total


def ensemble_predict(ens, a, batch_size=50):
    return ens.predict(a, batch_size)


def _modes(model):
    return model.config.modes if isinstance(model, FnoModel) else model.config.branch.modes


def build_level_model(spec, seed):
    """``spec`` is an FnoConfig, MscaleConfig or an already built model."""
    if isinstance(spec, FnoConfig):
        return FnoModel.init(spec, seed)
    if isinstance(spec, MscaleConfig):
        return MscaleFno.init(spec, seed)
    return spec


def train_mgfno(hierarchy, configs, train_cfgs, on_level=None):
    """Train one model per hierarchy level, each on the previous residual.

    Parameters
    ----------
    hierarchy : GridHierarchy
    configs : list
        Per level: FnoConfig, MscaleConfig or an initialized model.
    train_cfgs : list of TrainConfig
    on_level : callable, optional
        ``on_level(index, model, history, train_targets)`` after each level.

    Returns
    -------
    EnsembleModel, list of histories
    """
    if not len(configs) == len(train_cfgs) == len(hierarchy):
        raise ValueError("one model config and one training config per level are required")
    periodic = hierarchy.periodic
    models, stats, histories = [], [], []
    previous = None
    for i, (lv, spec, tcfg) in enumerate(zip(hierarchy.levels, configs, train_cfgs)):
        model = build_level_model(spec, tcfg.seed)
        if i == 0:
            y_train = lv.train.outputs
            y_test = None if lv.test is None else lv.test.outputs
        else:
            y_train, y_test, st = compute_residual_dataset(
                models[-1], hierarchy[i - 1], lv, periodic=periodic, previous=previous
            )
            stats.append(st)
        test_in = None if lv.test is None else lv.test.inputs
        model, hist = train_level(model, lv.train.inputs, y_train, tcfg, test_in, y_test)
        models.append(model)
        histories.append(hist)
        previous = (y_train, y_test, stats[-1]) if i else None
        if on_level is not None:
            on_level(i, model, hist, y_train)
    return EnsembleModel(models, stats, [True] * len(models)), histories


# --- persistence ---------------------------------------------------------------------------


def model_spec(model):
    if isinstance(model, FnoModel):
        return {"kind": "fno", "config": model.config.to_dict()}
    return {
        "kind": "mscale",
        "config": {"branch": model.config.branch.to_dict(), "scales": list(model.config.scales)},
    }


def model_from_spec(spec, params):
    if spec["kind"] == "fno":
        return FnoModel(FnoConfig.from_dict(spec["config"]), params)
    cfg = MscaleConfig(FnoConfig.from_dict(spec["config"]["branch"]), tuple(spec["config"]["scales"]))
    branches = []
    for i in range(len(cfg.scales)):
        prefix = f"branch{i}."
        branches.append(FnoModel(cfg.branch, {k[len(prefix) :]: v for k, v in params.items() if k.startswith(prefix)}))
    return MscaleFno(cfg, branches)


def save_model(model, path):
    return tensors_write(model.params, path)


def load_model(spec, path):
    return model_from_spec(spec, tensors_read(path))


def save_ensemble(ens, directory, extra=None):
    """Write ``level{i}.mgft`` files and ``manifest.json`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    levels = []
    for i, model in enumerate(ens.models):
        name = f"level{i + 1}.mgft"
        digest = save_model(model, os.path.join(directory, name))
        entry = {"file": name, "sha256": digest, **model_spec(model)}
        if i:
            entry["stats"] = ens.stats[i - 1].to_dict()
        levels.append(entry)
    manifest = {"format": "mgfno-ensemble", "version": 1, "levels": levels}
    if extra:
        manifest.update(extra)
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_ensemble(directory):
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    models, stats = [], []
    for i, entry in enumerate(manifest["levels"]):
        path = os.path.join(directory, entry["file"])
        if file_hash(path) != entry["sha256"]:
            raise ValueError(f"{path}: checksum mismatch")
        models.append(load_model(entry, path))
        if i:
            stats.append(NormalizationStats(**entry["stats"]))
    return EnsembleModel(models, stats, [True] * len(models))
