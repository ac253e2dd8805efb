import json

import numpy as np
import pytest

from mgfno_lab.cli import main
from mgfno_lab.config import load_config
from mgfno_lab.data import dataset_read, tensors_read

SMALL = [
    "data.gen_resolution=64",
    "data.resolutions=[16,32,64]",
    "data.n_train=4",
    "data.n_test=2",
    "model.width=4",
    "model.modes=3",
    "model.n_layers=1",
    "model.proj_dim=4",
    "train.epochs=1",
    "train.batch_size=2",
]


def run(command, out, *overrides, deterministic=True):
    argv = [command, "--out", str(out)]
    for o in list(SMALL) + list(overrides):
        argv += ["--set", o]
    if deterministic:
        argv.append("--deterministic")
    return main(argv)


def manifest(path):
    return json.loads((path / "manifest.json").read_text())


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("gen")
    assert run("generate", out, "seed=3") == 0
    return out


def test_generate_writes_every_level(generated):
    files = manifest(generated)["files"]
    assert sorted(files) == sorted(f"{s}_r{r}.mgfd" for s in ("train", "test") for r in (16, 32, 64))
    ds = dataset_read(generated / "train_r16.mgfd")
    assert ds.inputs.shape == (4, 16)
    assert ds.metadata == {"pde": "burgers", "resolution": 16, "seed": 3, "split": "train"}


def test_coarse_levels_subsample_the_finest(generated):
    fine = dataset_read(generated / "test_r64.mgfd")
    coarse = dataset_read(generated / "test_r16.mgfd")
    assert np.array_equal(coarse.outputs, fine.outputs[:, ::4])


def test_seeded_generation_is_bit_identical(generated, tmp_path):
    assert run("generate", tmp_path, "seed=3") == 0
    assert manifest(tmp_path)["files"] == manifest(generated)["files"]


def test_different_seed_changes_data(generated, tmp_path):
    assert run("generate", tmp_path, "seed=4") == 0
    assert manifest(tmp_path)["files"] != manifest(generated)["files"]


@pytest.mark.parametrize("mode", ["mgfno", "fno", "fno-skip"])
def test_training_is_reproducible(generated, tmp_path, mode):
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert run("train", out, f"data.dir={json.dumps(str(generated))}", f"train.mode={mode}") == 0
        outs.append(out)
    assert (outs[0] / "loss.csv").read_bytes() == (outs[1] / "loss.csv").read_bytes()
    assert manifest(outs[0])["files"] == manifest(outs[1])["files"]


def test_loss_csv_has_one_row_per_epoch(generated, tmp_path):
    assert run("train", tmp_path, f"data.dir={json.dumps(str(generated))}", "train.epochs=[1,2,1]") == 0
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,test_loss" and len(lines) == 5


def test_band_trace_during_fno_training(generated, tmp_path):
    assert run("train", tmp_path, f"data.dir={json.dumps(str(generated))}", "train.mode=fno", "train.band_every=1") == 0
    assert (tmp_path / "bands.csv").read_text().startswith("step,band_lo,band_hi,rel_err")


def test_eval_and_band_analysis(generated, tmp_path):
    ck = tmp_path / "train"
    assert run("train", ck, f"data.dir={json.dumps(str(generated))}") == 0
    ev = tmp_path / "eval"
    assert run("eval", ev, f"eval.checkpoint={json.dumps(str(ck / 'checkpoint'))}", f"eval.dataset={json.dumps(str(generated))}") == 0
    rows = (ev / "metrics.csv").read_text().splitlines()
    assert rows[0] == "resolution,model,rel_err" and [r.split(",")[0] for r in rows[1:]] == ["16", "32", "64"]
    an = tmp_path / "an"
    dataset = json.dumps(str(generated / "test_r64.mgfd"))
    assert run("analyze", an, "analyze.kind=bands", f"analyze.checkpoint={json.dumps(str(ck / 'checkpoint'))}", f"analyze.dataset={dataset}") == 0
    assert (an / "bands.csv").exists()


def test_fprinciple_analysis(tmp_path):
    assert run("analyze", tmp_path, "analyze.seeds=[0]", "analyze.steps=5", "analyze.record_every=5") == 0
    summary = json.loads((tmp_path / "fprinciple_summary.json").read_text())
    assert summary[0]["bins"] == [2, 10]
    assert (tmp_path / "fprinciple_seed0.csv").exists()


def test_mg_solve_outputs(tmp_path):
    assert run("mg-solve", tmp_path, "mg.n=65") == 0
    rows = (tmp_path / "theta_mu.csv").read_text().splitlines()
    assert rows[0] == "theta,mu_loc" and len(rows) == 64
    hist = [float(r.split(",")[1]) for r in (tmp_path / "residual_history.csv").read_text().splitlines()[1:]]
    assert hist[-1] < 1e-10
    u = tensors_read(tmp_path / "solution.mgft")["u"]
    x = np.linspace(0, 1, 65)
    np.testing.assert_allclose(u, x * (1 - x) / 2, atol=1e-10)
    assert manifest(tmp_path)["report"]["converged"] is True


def test_mg_solve_non_convergence_exits_with_error(tmp_path, capsys):
    assert run("mg-solve", tmp_path, "mg.max_cycles=1") == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "CliError"


@pytest.mark.parametrize(
    "override,kind",
    [("model.widht=3", "config"), ("train.mode=adam", "config"), ("data.resolutions=[64,32]", "config"), ("noequals", "config")],
)
def test_bad_config_reports_one_json_line(tmp_path, capsys, override, kind):
    assert main(["generate", "--out", str(tmp_path), "--set", override]) == 2
    lines = capsys.readouterr().err.strip().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["error"] == kind


def test_incompatible_resolution(tmp_path, capsys):
    assert run("generate", tmp_path, "data.resolutions=[24]") == 2
    assert "subsampling" in json.loads(capsys.readouterr().err)["message"]


def test_missing_checkpoint(tmp_path, capsys):
    assert main(["eval", "--out", str(tmp_path), "--set", "eval.dataset=\"x\""]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "CliError"


def test_config_file_and_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"pde": "darcy", "mg": {"n": 33}}))
    cfg = load_config(path, ["mg.n=17", "seed=5"])
    assert (cfg.pde, cfg.mg.n, cfg.seed) == ("darcy", 17, 5)


def test_darcy_generation(tmp_path):
    assert main(["generate", "--out", str(tmp_path), "--set", "pde=darcy", "--set", "data.gen_resolution=33", "--set", "data.resolutions=[17,33]", "--set", "data.n_train=1", "--set", "data.n_test=1"]) == 0
    ds = dataset_read(tmp_path / "train_r17.mgfd")
    assert ds.inputs.shape == (1, 17, 17)
