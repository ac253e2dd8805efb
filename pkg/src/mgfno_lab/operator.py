"""Fourier neural operator models.

Three model families share one parameter layout:

* :class:`FnoModel` -- lifting ``P``, ``n_layers`` Fourier layers, two-layer
  projection ``Q``. With ``coord_scales`` set, the lifted channels are split
  into equal groups and group ``i`` sees the coordinate channels dilated by
  ``coord_scales[i]`` (a single-network multiscale operator whose parameter
  count equals the plain FNO).
* :class:`MscaleFno` -- a sum of independent FNO branches, branch ``i``
  evaluated on coordinates dilated by ``scales[i]``.

Inputs are channel-last ``(B, *grid, d_a + dim)`` arrays whose last ``dim``
channels are normalized grid coordinates (see :func:`with_coords`).
"""

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .nn.layers import LinearLayer, SpectralConvLayer, fourier_layer, linear_init, spectral_init
from .tensor import Tape, Tensor, ops
from .tensor.tape import as_array

VARIANTS = ("standard", "skip")


@dataclass(frozen=True)
class FnoConfig:
    spatial_dim: int = 1
    in_channels: int = 1
    out_channels: int = 1
    width: int = 64
    modes: int = 16
    n_layers: int = 4
    proj_dim: int = 128
    variant: str = "standard"
    activation: str = "gelu"
    layer_mlp: bool = True
    periodic: bool = True
    coord_scales: tuple = None

    def __post_init__(self):
        if self.spatial_dim not in (1, 2):
            raise ValueError("spatial_dim must be 1 or 2")
        for name in ("in_channels", "out_channels", "width", "modes", "n_layers", "proj_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.coord_scales is not None:
            scales = tuple(float(s) for s in self.coord_scales)
            object.__setattr__(self, "coord_scales", scales)
            if self.width % len(scales):
                raise ValueError("width must be divisible by the number of coordinate scales")

    @property
    def lift_in(self):
        return self.in_channels + self.spatial_dim

    def to_dict(self):
        d = asdict(self)
        if d["coord_scales"] is not None:
            d["coord_scales"] = list(d["coord_scales"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("coord_scales") is not None:
            d["coord_scales"] = tuple(d["coord_scales"])
        return cls(**d)


def grid_coords(grid, periodic=True):
    """Normalized node coordinates, shape ``(*grid, len(grid))``.

    Periodic grids use ``i/N`` (the right endpoint is the first node again);
    closed grids include both ends, ``i/(N-1)``.
    """
    axes = [np.arange(n) / (n if periodic else max(n - 1, 1)) for n in grid]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)


def with_coords(a, spatial_dim=1, periodic=True):
    """Append coordinate channels to ``a`` of shape ``(B, *grid)`` or ``(B, *grid, d_a)``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == spatial_dim + 1:
        a = a[..., None]
    grid = a.shape[1 : 1 + spatial_dim]
    coords = np.broadcast_to(grid_coords(grid, periodic), (a.shape[0],) + grid + (spatial_dim,))
    return np.concatenate([a, coords], axis=-1)


def parameter_shapes(cfg):
    """Ordered ``name -> (shape, is_complex)`` for an FNO configuration."""
    shapes = {"lift.W": ((cfg.lift_in, cfg.width), False), "lift.b": ((cfg.width,), False)}
    modes = (cfg.modes,) * cfg.spatial_dim
    r_shape = ((2,) if cfg.spatial_dim == 2 else ()) + modes + (cfg.width, cfg.width)
    for i in range(cfg.n_layers):
        shapes[f"layers.{i}.spectral.R"] = (r_shape, True)
        if cfg.layer_mlp:
            for j in range(2):
                shapes[f"layers.{i}.mlp.{j}.W"] = ((cfg.width, cfg.width), False)
                shapes[f"layers.{i}.mlp.{j}.b"] = ((cfg.width,), False)
        shapes[f"layers.{i}.w.W"] = ((cfg.width, cfg.width), False)
        shapes[f"layers.{i}.w.b"] = ((cfg.width,), False)
    shapes["proj.0.W"] = ((cfg.width, cfg.proj_dim), False)
    shapes["proj.0.b"] = ((cfg.proj_dim,), False)
    shapes["proj.1.W"] = ((cfg.proj_dim, cfg.out_channels), False)
    shapes["proj.1.b"] = ((cfg.out_channels,), False)
    return shapes


def count_parameters(params):
    """Real degrees of freedom; complex entries count twice."""
    return int(sum(p.size * (2 if np.iscomplexobj(p) else 1) for p in params.values()))


class FnoModel:
    def __init__(self, config, params):
        self.config = config
        expected = parameter_shapes(config)
        if list(params) != list(expected):
            missing = set(expected) ^ set(params)
            raise ValueError(f"parameter set does not match configuration: {sorted(missing)}")
        for name, (shape, _) in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape} != {shape}")
        self.params = params

    @classmethod
    def init(cls, config, seed=0):
        rng = np.random.default_rng(seed)
        params = {}
        modes = (config.modes,) * config.spatial_dim

        def lin(prefix, d_in, d_out):
            params[prefix + ".W"], params[prefix + ".b"] = linear_init(rng, d_in, d_out)

        lin("lift", config.lift_in, config.width)
        for i in range(config.n_layers):
            params[f"layers.{i}.spectral.R"] = spectral_init(rng, modes, config.width, config.width)
            if config.layer_mlp:
                lin(f"layers.{i}.mlp.0", config.width, config.width)
                lin(f"layers.{i}.mlp.1", config.width, config.width)
            lin(f"layers.{i}.w", config.width, config.width)
        lin("proj.0", config.width, config.proj_dim)
        lin("proj.1", config.proj_dim, config.out_channels)
        return cls(config, params)

    @classmethod
    def zeros(cls, config):
        params = {
            name: np.zeros(shape, dtype=np.complex128 if cplx else np.float64)
            for name, (shape, cplx) in parameter_shapes(config).items()
        }
        return cls(config, params)

    def n_params(self):
        return count_parameters(self.params)

    def copy(self):
        return FnoModel(self.config, {k: v.copy() for k, v in self.params.items()})

    def bind(self, tape, offset=0):
        """Register every parameter on ``tape``; ids are ``offset + position``."""
        return {name: tape.parameter(v, offset + i) for i, (name, v) in enumerate(self.params.items())}

    def forward(self, x, tape=None, params=None):
        return fno_forward(self, x, tape=tape, params=params)

    def predict(self, a, batch_size=50):
        """Untracked evaluation on raw inputs ``a`` (coordinates appended here)."""
        return _batched_predict(self, a, batch_size)


def _lift(cfg, p, x, scales):
    if scales is None:
        return LinearLayer(p["lift.W"], p["lift.b"])(x)
    d_a = cfg.in_channels
    field_part = ops.matmul(ops.getitem(x, (Ellipsis, slice(0, d_a))), ops.getitem(p["lift.W"], slice(0, d_a)))
    coord_part = ops.matmul(ops.getitem(x, (Ellipsis, slice(d_a, None))), ops.getitem(p["lift.W"], slice(d_a, None)))
    group = cfg.width // len(scales)
    dilation = np.repeat(np.asarray(scales, dtype=np.float64), group)
    return ops.add(ops.add(field_part, ops.mul(coord_part, dilation)), p["lift.b"])


def fno_forward(model, x, tape=None, params=None):
    """Evaluate ``model`` on ``x`` (coordinate channels already appended).

    With ``tape`` the parameters are registered on it (unless pre-bound
    tensors are passed as ``params``) and the result is differentiable.
    """
    cfg = model.config
    x_arr = as_array(x)
    if x_arr.ndim != cfg.spatial_dim + 2 or x_arr.shape[-1] != cfg.lift_in:
        raise ValueError(f"expected input (B, *grid, {cfg.lift_in}), got {x_arr.shape}")
    if params is None:
        params = model.bind(tape) if tape is not None else model.params
    p = params
    modes = (cfg.modes,) * cfg.spatial_dim
    act = cfg.activation
    v = _lift(cfg, p, x, cfg.coord_scales)
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."
        S = SpectralConvLayer(p[pre + "spectral.R"], modes)
        W = LinearLayer(p[pre + "w.W"], p[pre + "w.b"])
        mlp_layers = None
        if cfg.layer_mlp:
            mlp_layers = (LinearLayer(p[pre + "mlp.0.W"], p[pre + "mlp.0.b"]), LinearLayer(p[pre + "mlp.1.W"], p[pre + "mlp.1.b"]))
        v = fourier_layer(v, W, S, activation=act, variant=cfg.variant, mlp_layers=mlp_layers)
    hidden = ops.activation(LinearLayer(p["proj.0.W"], p["proj.0.b"])(v), act)
    return LinearLayer(p["proj.1.W"], p["proj.1.b"])(hidden)


@dataclass(frozen=True)
class MscaleConfig:
    branch: FnoConfig = field(default_factory=lambda: FnoConfig(activation="phi"))
    scales: tuple = (1.0, 2.0, 4.0, 8.0)

    def __post_init__(self):
        scales = tuple(float(s) for s in self.scales)
        if not scales or scales[0] != 1.0 or any(b <= a for a, b in zip(scales, scales[1:])):
            raise ValueError("scales must be strictly increasing and start at 1")
        object.__setattr__(self, "scales", scales)
        if self.branch.activation != "phi":
            object.__setattr__(self, "branch", replace(self.branch, activation="phi"))


def scale_coords(x, alpha, spatial_dim):
    """Multiply the trailing ``spatial_dim`` coordinate channels by ``alpha``."""
    x = np.array(as_array(x))
    x[..., -spatial_dim:] *= alpha
    return x


class MscaleFno:
    """Sum of FNO branches, branch ``i`` seeing coordinates dilated by ``scales[i]``."""

    def __init__(self, config, branches):
        if len(branches) != len(config.scales):
            raise ValueError(f"{len(branches)} branches for {len(config.scales)} scales")
        self.config = config
        self.branches = branches

    @classmethod
    def init(cls, config, seed=0):
        return cls(config, [FnoModel.init(config.branch, seed=seed + 1000 * i) for i in range(len(config.scales))])

    @property
    def params(self):
        return {f"branch{i}.{k}": v for i, b in enumerate(self.branches) for k, v in b.params.items()}

    def n_params(self):
        return sum(b.n_params() for b in self.branches)

    def bind(self, tape, offset=0):
        bound = {}
        for i, b in enumerate(self.branches):
            sub = b.bind(tape, offset + len(bound))
            bound.update({f"branch{i}.{k}": v for k, v in sub.items()})
        return bound

    def forward(self, x, tape=None, params=None):
        return mscale_forward(self.config, self.branches, x, tape=tape, params=params)

    def predict(self, a, batch_size=50):
        return _batched_predict(self, a, batch_size)


def mscale_forward(cfg, branches, x, tape=None, params=None):
    if len(branches) != len(cfg.scales):
        raise ValueError(f"{len(branches)} branches for {len(cfg.scales)} scales")
    if params is None and tape is not None:
        params = MscaleFno(cfg, branches).bind(tape)
    dim = cfg.branch.spatial_dim
    out = None
    for i, (alpha, branch) in enumerate(zip(cfg.scales, branches)):
        sub = None
        if params is not None:
            sub = {k: params[f"branch{i}.{k}"] for k in branch.params}
        xi = x if alpha == 1.0 else scale_coords(x, alpha, dim)
        y = fno_forward(branch, xi, params=sub)
        out = y if out is None else ops.add(out, y)
    return out


def _batched_predict(model, a, batch_size):
    cfg = model.config if isinstance(model, FnoModel) else model.config.branch
    x = with_coords(a, cfg.spatial_dim, cfg.periodic)
    outs = [model.forward(x[i : i + batch_size]).data for i in range(0, x.shape[0], batch_size)]
    y = np.concatenate(outs, axis=0)
    return y[..., 0] if cfg.out_channels == 1 else y


def relative_l2(pred, target):
    """Mean over samples of ``||pred - target||_2 / ||target||_2``.

    Differentiable in ``pred``; ``target`` is treated as data.
    """
    y = as_array(target)
    p = as_array(pred)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {y.shape}")
    axes = tuple(range(1, y.ndim))
    norms = np.sqrt(np.sum(y * y, axis=axes)) if axes else np.abs(y)
    if np.any(norms == 0):
        raise ValueError("relative error undefined for a zero-norm target")
    diff = ops.sub(pred, y)
    err = ops.sqrt(ops.sum(ops.mul(diff, diff), axis=axes)) if axes else ops.sqrt(ops.mul(diff, diff))
    return ops.mean(ops.mul(err, 1.0 / norms))


def build_model(kind, config, seed=0):
    if kind == "mscale":
        return MscaleFno.init(config, seed)
    return FnoModel.init(config, seed)


__all__ = [
    "FnoConfig",
    "FnoModel",
    "MscaleConfig",
    "MscaleFno",
    "Tape",
    "Tensor",
    "count_parameters",
    "fno_forward",
    "grid_coords",
    "mscale_forward",
    "parameter_shapes",
    "relative_l2",
    "scale_coords",
    "with_coords",
]
