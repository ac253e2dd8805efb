import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mgfno_lab.analysis import high_frequency_fraction
from mgfno_lab.data import Dataset
from mgfno_lab.mgfno import (
    EnsembleModel,
    GridHierarchy,
    GridLevel,
    NormalizationStats,
    TrainConfig,
    compute_residual_dataset,
    ensemble_predict,
    load_ensemble,
    prolong_residual,
    save_ensemble,
    train_level,
    train_mgfno,
)
from mgfno_lab.operator import FnoConfig, FnoModel, MscaleConfig, relative_l2

TINY = FnoConfig(width=4, modes=3, n_layers=1, proj_dim=4)


def smooth_pairs(n_samples, res, seed=0):
    """Inputs ``a`` and targets ``u = a`` shifted, sampled from a few modes."""
    rng = np.random.default_rng(seed)
    x = np.arange(res) / res
    coef = rng.standard_normal((n_samples, 3))
    a = sum(coef[:, [k]] * np.sin(2 * np.pi * (k + 1) * x) for k in range(3))
    u = sum(coef[:, [k]] * np.cos(2 * np.pi * (k + 1) * x) for k in range(3)) + 0.1 * np.sin(2 * np.pi * 7 * x)
    return a, u


@pytest.fixture(scope="module")
def hierarchy():
    levels = []
    a, u = smooth_pairs(10, 64, seed=1)
    for res in (16, 32, 64):
        f = 64 // res
        levels.append(GridLevel(res, Dataset(a[:8, ::f], u[:8, ::f]), Dataset(a[8:, ::f], u[8:, ::f])))
    return GridHierarchy(levels)


@pytest.fixture(scope="module")
def trained(hierarchy):
    cfgs = [TINY, TINY, MscaleConfig(FnoConfig(width=4, modes=3, n_layers=1, proj_dim=4, activation="phi"), (1.0, 2.0))]
    return train_mgfno(hierarchy, cfgs, [TrainConfig(epochs=3, batch_size=4, seed=s) for s in range(3)])


# --- residual prolongation ----------------------------------------------------------


def test_bounded_1d_example():
    np.testing.assert_array_equal(prolong_residual(np.array([[0.0, 2.0]]), 3, periodic=False), [[0.0, 1.0, 2.0]])


def test_bounded_2d_centre():
    out = prolong_residual(np.array([[[0.0, 2.0], [2.0, 4.0]]]), (3, 3), periodic=False)
    np.testing.assert_array_equal(out[0], [[0, 1, 2], [1, 2, 3], [2, 3, 4]])


def test_periodic_dyadic_wraps():
    np.testing.assert_array_equal(prolong_residual(np.array([[0.0, 2.0]]), 4), [[0.0, 1.0, 2.0, 1.0]])


@pytest.mark.parametrize("periodic,shape,target", [(True, (8,), 16), (False, (9, 5), (17, 9)), (False, (11,), 15), (True, (6,), 10)])
def test_constants_preserved(periodic, shape, target):
    out = prolong_residual(np.full((2,) + shape, 1.25), target, periodic)
    np.testing.assert_allclose(out, 1.25, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n,m", [(9, 17), (11, 21), (85, 141), (141, 211)])
def test_linear_ramps_reproduced(n, m):
    xs, xt = np.linspace(0, 1, n), np.linspace(0, 1, m)
    ramp = 3 * xs[:, None] - 2 * xs[None, :] + 0.5
    out = prolong_residual(ramp[None], (m, m), periodic=False)
    np.testing.assert_allclose(out[0], 3 * xt[:, None] - 2 * xt[None, :] + 0.5, atol=1e-13)


@given(arrays(np.float64, (2, 8), elements=st.floats(-1e3, 1e3)))
def test_dyadic_rule_equals_general_linear_interpolation(r):
    xs, xt = np.arange(8) / 8, np.arange(16) / 16
    ref = np.stack([np.interp(xt, np.append(xs, 1.0), np.append(row, row[0])) for row in r])
    np.testing.assert_allclose(prolong_residual(r, 16), ref, atol=1e-9)


@pytest.mark.parametrize("target", [4, (16, 16)])
def test_prolong_rejects_incompatible_targets(target):
    with pytest.raises(ValueError):
        prolong_residual(np.zeros((1, 8)), target)


# --- normalization ------------------------------------------------------------------------


@given(arrays(np.float64, (3, 5), elements=st.floats(-1e3, 1e3)))
def test_normalize_round_trip(r):
    s = NormalizationStats.fit(r)
    np.testing.assert_allclose(s.denormalize(s.normalize(r)), r, atol=1e-12 * max(1.0, np.abs(r).max()))


def test_constant_residual_falls_back_to_unit_std():
    s = NormalizationStats.fit(np.zeros((4, 8)))
    assert s.std == 1.0 and s.mean == 0.0


def test_small_residuals_normalized_to_unit_std(rng):
    r = 1e-3 * rng.standard_normal((20, 64))
    assert NormalizationStats.fit(r).normalize(r).std() == pytest.approx(1.0)


class _Fixed:
    """Stand-in model returning a fixed prediction."""

    def __init__(self, pred):
        self.pred = pred

    def predict(self, a, batch_size=50):
        return self.pred


def test_perfect_model_gives_zero_residuals():
    u = np.arange(8.0).reshape(2, 4)
    lv = GridLevel(4, Dataset(u, u))
    nxt = GridLevel(8, Dataset(np.zeros((2, 8)), np.zeros((2, 8))))
    train, test, stats = compute_residual_dataset(_Fixed(u), lv, nxt)
    assert not np.any(train) and test is None and stats.std == 1.0


def test_interpolate_then_normalize():
    # the residual scale varies in space, so coarse and prolonged statistics differ
    u = np.array([[0.0, 0.0, 0.0, 4.0]])
    lv = GridLevel(4, Dataset(u, u))
    nxt = GridLevel(8, Dataset(np.zeros((1, 8)), np.zeros((1, 8))))
    train, _, stats = compute_residual_dataset(_Fixed(np.zeros_like(u)), lv, nxt)
    fine = prolong_residual(u, 8)
    expected = (fine - fine.mean()) / fine.std()
    np.testing.assert_allclose(train, expected, atol=1e-14)
    coarse = NormalizationStats.fit(u)
    other = prolong_residual(coarse.normalize(u), 8)
    assert np.max(np.abs(other - train)) > 0.1


def test_later_levels_use_denormalized_targets():
    u = np.array([[1.0, 3.0, 1.0, 3.0]])
    prev_stats = NormalizationStats(mean=2.0, std=0.5)
    prev_train = prev_stats.normalize(u)
    lv = GridLevel(4, Dataset(np.zeros_like(u), np.zeros_like(u)))
    nxt = GridLevel(8, Dataset(np.zeros((1, 8)), np.zeros((1, 8))))
    pred = np.zeros_like(u)  # normalized prediction 0 means the mean, 2.0
    train, _, _ = compute_residual_dataset(_Fixed(pred), lv, nxt, previous=(prev_train, None, prev_stats))
    raw = prolong_residual(u - 2.0, 8)
    np.testing.assert_allclose(train, (raw - raw.mean()) / raw.std(), atol=1e-14)


def test_misaligned_levels_rejected():
    lv = GridLevel(4, Dataset(np.zeros((2, 4)), np.zeros((2, 4))))
    nxt = GridLevel(8, Dataset(np.zeros((3, 8)), np.zeros((3, 8))))
    with pytest.raises(ValueError):
        compute_residual_dataset(_Fixed(np.zeros((2, 4))), lv, nxt)


# --- hierarchy validation ------------------------------------------------------------------


def test_hierarchy_rules():
    d = lambda n, s=2: Dataset(np.zeros((s, n)), np.zeros((s, n)))
    with pytest.raises(ValueError):
        GridHierarchy([GridLevel(8, d(8))])
    with pytest.raises(ValueError):
        GridHierarchy([GridLevel(8, d(8)), GridLevel(8, d(8))])
    with pytest.raises(ValueError):
        GridHierarchy([GridLevel(8, d(8)), GridLevel(16, d(16, 3))])
    with pytest.raises(ValueError):
        GridHierarchy([GridLevel(8, d(8)), GridLevel(16, d(12))])


# --- training ---------------------------------------------------------------------------------


def test_zero_epochs_leaves_model_unchanged():
    model = FnoModel.init(TINY, seed=0)
    before = {k: v.copy() for k, v in model.params.items()}
    a, u = smooth_pairs(4, 16)
    _, history = train_level(model, a, u, TrainConfig(epochs=0))
    assert history == []
    assert all(np.array_equal(before[k], model.params[k]) for k in before)


def test_training_reduces_loss():
    a, u = smooth_pairs(16, 16)
    model = FnoModel.init(FnoConfig(width=8, modes=4, n_layers=2, proj_dim=8), seed=0)
    before = float(relative_l2(model.predict(a), u).data)
    _, history = train_level(model, a, u, TrainConfig(epochs=15, batch_size=4, lr0=1e-2))
    assert history[-1][1] < history[0][1]
    assert float(relative_l2(model.predict(a), u).data) < before


def test_training_is_seeded():
    a, u = smooth_pairs(8, 16)
    runs = [train_level(FnoModel.init(TINY, 0), a, u, TrainConfig(epochs=2, batch_size=4, seed=5))[1] for _ in range(2)]
    assert np.array_equal(np.array(runs[0]), np.array(runs[1]), equal_nan=True)


def test_nan_loss_aborts():
    a, u = smooth_pairs(4, 16)
    u[0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        train_level(FnoModel.init(TINY, 0), a, u, TrainConfig(epochs=1))


def test_on_step_called_per_batch():
    a, u = smooth_pairs(8, 16)
    steps = []
    train_level(FnoModel.init(TINY, 0), a, u, TrainConfig(epochs=2, batch_size=3), on_step=lambda s, m: steps.append(s))
    assert steps == list(range(1, 7))


# --- ensemble ----------------------------------------------------------------------------------


def test_ensemble_is_sum_of_levels(trained, hierarchy):
    ens, _ = trained
    a = hierarchy[2].test.inputs
    parts = [ens.models[0].predict(a)] + [s.denormalize(m.predict(a)) for m, s in zip(ens.models[1:], ens.stats)]
    np.testing.assert_allclose(ensemble_predict(ens, a), parts[0] + parts[1] + parts[2], atol=1e-12)


def test_zero_correction_levels_reduce_to_first(trained, hierarchy):
    ens, _ = trained
    zeroed = []
    for m, s in zip(ens.models[1:], ens.stats):
        z = FnoModel.zeros(m.config) if isinstance(m, FnoModel) else type(m).init(m.config)
        for k in z.params:
            z.params[k][...] = 0.0
        zeroed.append(z)
    # zero models predict 0 in normalized units, so their denormalized output is the stored mean
    ablated = EnsembleModel([ens.models[0]] + zeroed, [type(s)(0.0, s.std) for s in ens.stats], [True] * 3)
    a = hierarchy[0].test.inputs
    np.testing.assert_array_equal(ablated.predict(a), ens.models[0].predict(a))


def test_zero_models_sum_biases():
    models = [FnoModel.zeros(TINY) for _ in range(3)]
    for m, b in zip(models, (0.5, 1.0, -2.0)):
        m.params["proj.1.b"][:] = b
    ens = EnsembleModel(models, [NormalizationStats(0.1, 2.0), NormalizationStats(0.0, 0.5)], [True] * 3)
    np.testing.assert_allclose(ens.predict(np.zeros((1, 16))), 0.5 + (1.0 * 2.0 + 0.1) + (-2.0 * 0.5))


def test_untrained_ensemble_refuses_inference():
    ens = EnsembleModel([FnoModel.zeros(TINY)] * 2, [NormalizationStats()])
    with pytest.raises(RuntimeError):
        ens.predict(np.zeros((1, 16)))


def test_grid_too_small_for_ensemble(trained):
    with pytest.raises(ValueError):
        trained[0].predict(np.zeros((1, 4)))


def test_stats_count_checked():
    with pytest.raises(ValueError):
        EnsembleModel([FnoModel.zeros(TINY)] * 3, [NormalizationStats()])


def test_histories_per_level(trained):
    _, hists = trained
    assert [len(h) for h in hists] == [3, 3, 3]


def test_residual_targets_carry_more_high_frequency_energy(hierarchy):
    captured = {}
    cfg = FnoConfig(width=8, modes=4, n_layers=2, proj_dim=8)
    train_mgfno(
        hierarchy,
        [cfg, TINY, TINY],
        [TrainConfig(epochs=e, batch_size=4, lr0=1e-2, seed=s) for s, e in enumerate((40, 0, 0))],
        on_level=lambda i, m, h, y: captured.setdefault(i, y),
    )
    cutoff = cfg.modes
    assert high_frequency_fraction(captured[1], cutoff) > high_frequency_fraction(hierarchy[1].train.outputs, cutoff)


def test_save_and_load_round_trip(tmp_path, trained, hierarchy):
    ens, _ = trained
    save_ensemble(ens, tmp_path / "ck", extra={"note": "x"})
    back = load_ensemble(tmp_path / "ck")
    a = hierarchy[1].test.inputs
    assert np.array_equal(back.predict(a), ens.predict(a))
    assert back.n_params() == ens.n_params()


def test_tampered_checkpoint_detected(tmp_path, trained):
    ens, _ = trained
    save_ensemble(ens, tmp_path / "ck")
    path = tmp_path / "ck" / "level2.mgft"
    raw = bytearray(path.read_bytes())
    raw[-1] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        load_ensemble(tmp_path / "ck")
