import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from mgfno_lab.analysis import (
    BandErrorTrace,
    FPrincipleConfig,
    band_edges,
    band_error,
    band_tracker,
    fprinciple_experiment,
    high_frequency_fraction,
    superres_eval,
    target_bins,
    write_csv,
)
from mgfno_lab.operator import relative_l2


def lowpass(x, cutoff):
    X = np.fft.fft(x, axis=-1)
    k = np.abs(np.fft.fftfreq(x.shape[-1], 1.0 / x.shape[-1]))
    X[..., k >= cutoff] = 0
    return np.fft.ifft(X, axis=-1).real


@pytest.fixture
def signal(rng):
    return rng.standard_normal((4, 64))


def test_identical_fields_have_zero_error(signal):
    assert all(v == 0 for v in band_error(signal, signal).values())


def test_lowpassed_prediction(signal):
    errs = band_error(lowpass(signal, 16), signal, [(0, 16), (16, 33)])
    assert errs[(0, 16)] < 1e-12
    assert errs[(16, 33)] == pytest.approx(1.0, abs=1e-12)


@given(arrays(np.float64, (3, 32), elements=st.floats(-10, 10)), arrays(np.float64, (3, 32), elements=st.floats(-10, 10)))
def test_single_band_matches_spatial_error(p, t):
    t = t - t.mean(axis=-1, keepdims=True)
    if np.linalg.norm(t) < 1e-6:
        return
    (err,) = band_error(p, t, [(0, 17)]).values()
    assert err == pytest.approx(np.linalg.norm(p - t) / np.linalg.norm(t), rel=1e-10)


def test_empty_band_reported_absent():
    errs = band_error(np.ones((1, 32)), np.zeros((1, 32)), [(0, 1), (1, 17)])
    assert errs == {(0, 1): None, (1, 17): None}


def test_round_off_band_is_empty(signal):
    smooth = lowpass(signal, 8)
    errs = band_error(smooth + 1e-3, smooth, [(0, 8), (8, 33)])
    assert errs[(8, 33)] is None


def test_total_reference(signal):
    smooth = lowpass(signal, 8)
    rough = np.roll(signal, 1, axis=0)
    rough = rough - lowpass(rough, 8)
    pred = smooth + 0.01 * rough
    errs = band_error(pred, smooth, [(8, 33)], reference="total")
    expected = 0.01 * np.linalg.norm(rough) / np.linalg.norm(smooth)
    assert errs[(8, 33)] == pytest.approx(expected, rel=1e-10)
    full = band_error(pred, smooth, [(0, 33)], reference="total")[(0, 33)]
    assert full == pytest.approx(band_error(pred, smooth, [(0, 33)])[(0, 33)], rel=1e-12)


def test_unknown_reference(signal):
    with pytest.raises(ValueError):
        band_error(signal, signal, reference="peak")


def test_two_dimensional_bands(rng):
    t = rng.standard_normal((2, 16, 16))
    (err,) = band_error(t + 0.1 * t, t, [(0, 100)], dim=2).values()
    assert err == pytest.approx(0.1)


def test_default_edges_partition():
    assert band_edges(64) == [(0, 4), (4, 16), (16, 33)]
    assert band_edges(10) == [(0, 4), (4, 6)]


def test_shape_mismatch():
    with pytest.raises(ValueError):
        band_error(np.zeros(8), np.zeros(9))


def test_high_frequency_fraction():
    x = np.arange(64) / 64
    f = np.sin(2 * np.pi * x) + np.sin(2 * np.pi * 20 * x)
    assert high_frequency_fraction(f, 16) == pytest.approx(0.5)
    assert high_frequency_fraction(np.zeros(8), 2) == 0.0


def test_trace_rejects_non_increasing_steps():
    trace = BandErrorTrace()
    trace.add(1, {(0, 4): 0.5})
    with pytest.raises(ValueError):
        trace.add(1, {(0, 4): 0.4})


def test_trace_series_and_csv(tmp_path):
    trace = BandErrorTrace()
    trace.add(0, {(0, 4): 0.5, (4, 8): None})
    trace.add(10, {(0, 4): 0.25, (4, 8): 1.0})
    assert trace.series((0, 4)) == [(0, 0.5), (10, 0.25)]
    trace.to_csv(tmp_path / "t.csv")
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["step", "band_lo", "band_hi", "rel_err"]
    assert len(rows) == 4


def test_band_tracker_callback(signal):
    class Model:
        def predict(self, a):
            return a

    trace, cb = band_tracker(signal, signal, every=2)
    for step in range(1, 5):
        cb(step, Model())
    assert sorted({r[0] for r in trace.rows}) == [2, 4]


def test_superres_at_train_resolution_reproduces_error(signal):
    rows = superres_eval({"id": lambda a: 0.5 * a}, {64: (signal, signal)})
    assert rows == [(64, "id", pytest.approx(float(relative_l2(0.5 * signal, signal).data)))]


def test_write_csv_round_trips_floats(tmp_path):
    write_csv(tmp_path / "m.csv", ("a", "b"), [(1, 0.1 + 0.2)])
    assert float(list(csv.reader(open(tmp_path / "m.csv")))[1][1]) == 0.1 + 0.2


# --- frequency-ordering experiment --------------------------------------------------------


def test_target_bins_are_nearest_to_frequencies():
    bins = target_bins(FPrincipleConfig())
    assert bins == (2, 10)
    # naive DFT of the target peaks exactly at these bins
    x = np.linspace(-2 * np.pi, 2 * np.pi, 1000)
    y = np.sin(x) + np.sin(5 * x)
    k = np.arange(40)
    amp = np.abs(np.exp(-2j * np.pi * np.outer(k, np.arange(1000)) / 1000) @ y)
    peaks = sorted(np.argsort(amp)[-2:])
    assert tuple(peaks) == bins


def test_short_run_records_both_bins():
    res = fprinciple_experiment(0, FPrincipleConfig(n_points=200, widths=(20, 20), steps=20, record_every=5, optimizer="adam", lr=1e-3))
    assert res.diverged_at is None
    assert sorted({(r[1], r[2]) for r in res.trace.rows}) == [(2, 3), (10, 11)]
    assert [r[0] for r in res.trace.rows[::2]] == [0, 5, 10, 15, 20]


def test_divergence_reported_with_step():
    res = fprinciple_experiment(0, FPrincipleConfig(n_points=200, widths=(20, 20), steps=200, lr=10.0, optimizer="gd"))
    assert res.diverged_at is not None and 0 < res.diverged_at <= 200


def test_unknown_optimizer():
    with pytest.raises(ValueError):
        fprinciple_experiment(0, FPrincipleConfig(optimizer="sgd"))


@pytest.mark.slow
def test_both_frequencies_converge_within_budget():
    res = fprinciple_experiment(0, FPrincipleConfig(steps=10_000, stop_when="all"))
    assert res.diverged_at is None
    assert set(res.crossing) == {2, 10}, f"final errors {res.final}"
    assert res.low_first
