"""``mgfno-lab`` command line."""

import argparse
import json
import os
import sys
import time

import numpy as np
from pydantic import ValidationError

from . import __version__, _jit, analysis, mg
from .config import load_config
from .data import (
    DARCY_GRF,
    Dataset,
    burgers_dataset,
    darcy_generate,
    dataset_read,
    dataset_write,
    downsample,
    file_hash,
    tensors_write,
)
from .mgfno import (
    EnsembleModel,
    GridHierarchy,
    GridLevel,
    TrainConfig,
    load_ensemble,
    save_ensemble,
    train_level,
    train_mgfno,
)
from .operator import FnoConfig, FnoModel, MscaleConfig

COMMANDS = ("generate", "train", "eval", "analyze", "mg-solve")


class CliError(Exception):
    pass


# --- helpers --------------------------------------------------------------------------


def _write_manifest(out, cfg, command, files, extra=None):
    manifest = {
        "command": command,
        "version": __version__,
        "backend": _jit.backend_name(),
        "config": cfg.model_dump(),
        "files": {name: file_hash(os.path.join(out, name)) for name in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _periodic(cfg):
    return cfg.pde == "burgers"


def _dim(cfg):
    return 1 if cfg.pde == "burgers" else 2


def _level_name(split, res):
    return f"{split}_r{res}.mgfd"


def _stride(cfg, res):
    gen = cfg.data.gen_resolution
    span_gen, span = (gen, res) if _periodic(cfg) else (gen - 1, res - 1)
    if span <= 0 or span_gen % span:
        raise CliError(f"resolution {res} is not a subsampling of the generation grid {gen}")
    return span_gen // span


def generate_arrays(cfg):
    n = cfg.data.n_train + cfg.data.n_test
    if cfg.pde == "burgers":
        return burgers_dataset(n, cfg.data.gen_resolution, cfg.seed, nu=cfg.data.nu, t_end=cfg.data.t_end)
    return darcy_generate(cfg.data.gen_resolution, cfg.seed, n_samples=n, spec=DARCY_GRF)


def generate(cfg, out):
    for res in cfg.data.resolutions:
        _stride(cfg, res)
    a, u = generate_arrays(cfg)
    axes = tuple(range(1, a.ndim))
    files = []
    for res in cfg.data.resolutions:
        f = _stride(cfg, res)
        aa = downsample(a, f, axes=axes, periodic=_periodic(cfg))
        uu = downsample(u, f, axes=axes, periodic=_periodic(cfg))
        for split, sl in (("train", slice(0, cfg.data.n_train)), ("test", slice(cfg.data.n_train, None))):
            meta = {"pde": cfg.pde, "resolution": res, "seed": cfg.seed, "split": split}
            name = _level_name(split, res)
            dataset_write(Dataset(aa[sl], uu[sl], meta), os.path.join(out, name))
            files.append(name)
    return files


def _load_levels(cfg, out):
    src = cfg.data.dir
    if src is None:
        generate(cfg, out)
        src = out
    levels = []
    for res in cfg.data.resolutions:
        try:
            train = dataset_read(os.path.join(src, _level_name("train", res)))
            test = dataset_read(os.path.join(src, _level_name("test", res)))
        except FileNotFoundError as exc:
            raise CliError(f"missing dataset file: {exc.filename}") from None
        levels.append(GridLevel(res, train, test))
    return levels


def _fno_config(cfg, variant="standard", **kw):
    m = cfg.model
    base = dict(
        spatial_dim=_dim(cfg),
        width=m.width,
        modes=m.modes,
        n_layers=m.n_layers,
        proj_dim=m.proj_dim,
        activation=m.activation,
        layer_mlp=m.layer_mlp,
        periodic=_periodic(cfg),
        variant=variant,
    )
    base.update(kw)
    return FnoConfig(**base)


def _epochs(cfg, n_levels):
    e = cfg.train.epochs
    if isinstance(e, int):
        return [e] * n_levels
    if len(e) != n_levels:
        raise CliError(f"train.epochs has {len(e)} entries for {n_levels} levels")
    return list(e)


def _train_cfg(cfg, epochs, seed):
    t = cfg.train
    return TrainConfig(epochs=epochs, batch_size=t.batch_size, lr0=t.lr0, halving_period=t.halving_period, seed=seed)


def _loss_rows(histories):
    rows, epoch = [], 0
    for hist in histories:
        for _, tr, te in hist:
            rows.append((epoch, tr, te))
            epoch += 1
    return rows


# --- commands ------------------------------------------------------------------------------


def cmd_generate(cfg, out):
    files = generate(cfg, out)
    return _write_manifest(out, cfg, "generate", files, {"seed": cfg.seed})


def cmd_train(cfg, out):
    levels = _load_levels(cfg, out)
    mode = cfg.train.mode
    files = []
    if mode in ("fno", "fno-skip"):
        total = sum(_epochs(cfg, len(levels))) if isinstance(cfg.train.epochs, list) else cfg.train.epochs
        model = FnoModel.init(_fno_config(cfg, "skip" if mode == "fno-skip" else "standard"), cfg.seed)
        lv = levels[0]
        on_step = None
        if cfg.train.band_every:
            trace, on_step = analysis.band_tracker(lv.test.inputs, lv.test.outputs, cfg.train.band_every, dim=_dim(cfg))
        model, hist = train_level(
            model, lv.train.inputs, lv.train.outputs, _train_cfg(cfg, total, cfg.seed), lv.test.inputs, lv.test.outputs, on_step
        )
        ens = EnsembleModel([model], [], [True])
        histories = [hist]
    else:
        if len(levels) < 2:
            raise CliError("mgfno training needs at least two resolutions")
        epochs = _epochs(cfg, len(levels))
        specs = [_fno_config(cfg) for _ in levels[:-1]]
        scales = tuple(cfg.model.scales)
        if cfg.model.level3 == "grouped":
            specs.append(_fno_config(cfg, activation="phi", coord_scales=scales))
        else:
            specs.append(MscaleConfig(_fno_config(cfg, activation="phi"), scales))
        tcfgs = [_train_cfg(cfg, e, cfg.seed + i) for i, e in enumerate(epochs)]
        hierarchy = GridHierarchy(levels, periodic=_periodic(cfg))
        ens, histories = train_mgfno(hierarchy, specs, tcfgs)
        trace = None
    analysis.write_csv(os.path.join(out, "loss.csv"), ("epoch", "train_loss", "test_loss"), _loss_rows(histories))
    files.append("loss.csv")
    if mode != "mgfno" and cfg.train.band_every:
        trace.to_csv(os.path.join(out, "bands.csv"))
        files.append("bands.csv")
    save_ensemble(ens, os.path.join(out, "checkpoint"), {"mode": mode})
    files += [os.path.join("checkpoint", f) for f in sorted(os.listdir(os.path.join(out, "checkpoint")))]
    return _write_manifest(out, cfg, "train", files, {"n_params": ens.n_params()})


def _eval_data(cfg):
    src = cfg.eval.dataset or cfg.data.dir
    if src is None:
        raise CliError("eval needs eval.dataset (a directory written by generate)")
    resolutions = cfg.eval.resolutions or cfg.data.resolutions
    data = {}
    for res in resolutions:
        path = os.path.join(src, _level_name("test", res))
        if not os.path.exists(path):
            raise CliError(f"missing dataset file: {path}")
        ds = dataset_read(path)
        data[res] = (ds.inputs, ds.outputs)
    return data


def _checkpoint(path):
    if path is None:
        raise CliError("a checkpoint directory is required")
    if not os.path.exists(os.path.join(path, "manifest.json")):
        raise CliError(f"{path} is not a checkpoint directory")
    with open(os.path.join(path, "manifest.json")) as fh:
        mode = json.load(fh).get("mode", "model")
    return mode, load_ensemble(path)


def cmd_eval(cfg, out):
    mode, ens = _checkpoint(cfg.eval.checkpoint)
    rows = analysis.superres_eval({mode: ens.predict}, _eval_data(cfg))
    analysis.write_csv(os.path.join(out, "metrics.csv"), ("resolution", "model", "rel_err"), rows)
    return _write_manifest(out, cfg, "eval", ["metrics.csv"])


def cmd_analyze(cfg, out):
    an = cfg.analyze
    files = []
    if an.kind == "fprinciple":
        summary = []
        for seed in an.seeds:
            fcfg = analysis.FPrincipleConfig(
                steps=an.steps,
                lr=an.lr,
                record_every=an.record_every,
                loss=an.loss,
                optimizer=an.optimizer,
                stop_when=an.stop_when,
            )
            res = analysis.fprinciple_experiment(seed, fcfg)
            name = f"fprinciple_seed{seed}.csv"
            res.trace.to_csv(os.path.join(out, name))
            files.append(name)
            summary.append(
                {
                    "seed": seed,
                    "bins": list(res.bins),
                    "crossing": {str(k): v for k, v in res.crossing.items()},
                    "final": {str(k): v for k, v in res.final.items()},
                    "low_first": res.low_first,
                    "diverged_at": res.diverged_at,
                }
            )
        with open(os.path.join(out, "fprinciple_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        files.append("fprinciple_summary.json")
    else:
        mode, ens = _checkpoint(an.checkpoint)
        if an.dataset is None:
            raise CliError("analyze kind=bands needs analyze.dataset")
        ds = dataset_read(an.dataset)
        errs = analysis.band_error(ens.predict(ds.inputs), ds.outputs, dim=ds.inputs.ndim - 1)
        trace = analysis.BandErrorTrace()
        trace.add(0, errs)
        trace.to_csv(os.path.join(out, "bands.csv"))
        files.append("bands.csv")
    return _write_manifest(out, cfg, "analyze", files)


def cmd_mg_solve(cfg, out):
    m = cfg.mg
    theta, mu = mg.convergence_factor_curve(m.curve_n, m.sweep_omega)
    analysis.write_csv(os.path.join(out, "theta_mu.csv"), ("theta", "mu_loc"), zip(theta.tolist(), mu.tolist()))
    shape = (m.n,) * m.dim
    rhs = np.ones(shape) if m.rhs == "ones" else np.random.default_rng(cfg.seed).standard_normal(shape)
    system = mg.StencilSystem(rhs)
    mcfg = mg.MgConfig(levels=m.levels, pre_smooth=m.pre_smooth, post_smooth=m.post_smooth, omega=m.omega, max_cycles=m.max_cycles)
    try:
        u, history = mg.mg_solve(system, tol=m.tol, cfg=mcfg)
        converged = True
    except mg.MgConvergenceError as exc:
        u, history, converged = None, exc.history, False
    analysis.write_csv(
        os.path.join(out, "residual_history.csv"), ("cycle", "rel_residual"), [(i, float(r)) for i, r in enumerate(history)]
    )
    files = ["theta_mu.csv", "residual_history.csv"]
    if u is not None:
        tensors_write({"u": u}, os.path.join(out, "solution.mgft"))
        files.append("solution.mgft")
    report = {"converged": converged, "cycles": len(history) - 1, "final_residual": float(history[-1])}
    manifest = _write_manifest(out, cfg, "mg-solve", files, {"report": report})
    if not converged:
        raise CliError(f"multigrid did not reach tol={m.tol} in {m.max_cycles} cycles")
    return manifest


HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "analyze": cmd_analyze,
    "mg-solve": cmd_mg_solve,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mgfno-lab", description="Neural-operator and multigrid experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, fixed batch order")
    p.add_argument("--out", required=True, help="output directory")
    return p


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 2


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
    except ValidationError as exc:
        return _fail("config", "; ".join(f"{'.'.join(map(str, e['loc']))}: {e['msg']}" for e in exc.errors()))
    except (OSError, ValueError) as exc:
        return _fail("config", str(exc))
    if args.deterministic:
        _jit.set_threads(1)
    os.makedirs(args.out, exist_ok=True)
    start = time.time()
    try:
        HANDLERS[args.command](cfg, args.out)
    except (CliError, ValueError, FloatingPointError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc))
    print(json.dumps({"command": args.command, "out": args.out, "seconds": round(time.time() - start, 3)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
