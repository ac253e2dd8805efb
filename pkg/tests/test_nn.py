import numpy as np
import pytest

from mgfno_lab.nn import AdamState, LinearLayer, SpectralConvLayer, adam_step, fourier_layer, phi_activation, spectral_conv
from mgfno_lab.tensor import Tape, Tensor, gradcheck, ops
from mgfno_lab.tensor.ops import phi_values


def eye_modes(k, d):
    return np.broadcast_to(np.eye(d, dtype=complex), (k, d, d)).copy()


# --- spectral convolution ------------------------------------------------------


@pytest.mark.parametrize("n", [8, 9, 16])
def test_identity_weights_all_modes(rng, n):
    k = n // 2 + 1
    v = rng.standard_normal((2, n, 3))
    out = spectral_conv(SpectralConvLayer(eye_modes(k, 3), (k,)), v)
    assert np.max(np.abs(out.data - v)) < 1e-10


def test_zero_weights_give_zero(rng):
    v = rng.standard_normal((2, 16, 3))
    out = spectral_conv(SpectralConvLayer(np.zeros((4, 3, 3), complex), (4,)), v)
    assert not np.any(out.data)


def test_single_mode_eigenfunction():
    n, c = 32, 0.4 - 1.3j
    x = np.arange(n) / n
    v = np.cos(2 * np.pi * 2 * x)[None, :, None]
    R = np.zeros((4, 1, 1), complex)
    R[2] = c
    out = spectral_conv(SpectralConvLayer(R, (4,)), v).data[0, :, 0]
    # c * e^{i 2 pi 2 x} plus its conjugate partner, halved
    expected = np.real(c * np.exp(2j * np.pi * 2 * x))
    assert np.max(np.abs(out - expected)) < 1e-12


def test_2d_identity_on_low_modes(rng):
    n, k = 16, 3
    x = np.arange(n) / n
    field = np.cos(2 * np.pi * (x[:, None] + 2 * x[None, :])) + np.sin(2 * np.pi * (2 * x[:, None] - x[None, :]))
    R = np.broadcast_to(np.eye(1, dtype=complex), (2, k, k, 1, 1)).copy()
    out = spectral_conv(SpectralConvLayer(R, (k, k)), field[None, :, :, None])
    assert np.max(np.abs(out.data[0, :, :, 0] - field)) < 1e-12


@pytest.mark.parametrize("shape,modes", [((1, 8, 1), (6,)), ((1, 8, 8, 1), (5, 3))])
def test_grid_too_small(shape, modes):
    R = np.zeros((2,) * (len(modes) == 2) + modes + (1, 1), complex)
    with pytest.raises(ValueError):
        spectral_conv(SpectralConvLayer(R, modes), np.zeros(shape))


@pytest.mark.parametrize("dim", [1, 2])
def test_translation_equivariance(rng, dim):
    n, k, d = 16, 4, 2
    grid = (n,) * dim
    R_shape = ((2,) if dim == 2 else ()) + (k,) * dim + (d, d)
    R = rng.standard_normal(R_shape) + 1j * rng.standard_normal(R_shape)
    layer = SpectralConvLayer(R, (k,) * dim)
    v = rng.standard_normal((1,) + grid + (d,))
    axes = tuple(range(1, dim + 1))
    shifted = spectral_conv(layer, np.roll(v, 5, axis=axes)).data
    assert np.max(np.abs(shifted - np.roll(spectral_conv(layer, v).data, 5, axis=axes))) < 1e-10


# --- Fourier layer -----------------------------------------------------------------


def _layers(rng, d, k, zero=False):
    f = np.zeros if zero else (lambda s: rng.uniform(-1, 1, s))
    W = LinearLayer(f((d, d)), f(d))
    S = SpectralConvLayer(f((k, d, d)) + 1j * f((k, d, d)), (k,))
    M = (LinearLayer(f((d, d)), f(d)), LinearLayer(f((d, d)), f(d)))
    return W, S, M


def test_zero_layer_relu_gives_zero(rng):
    W, S, _ = _layers(rng, 3, 4, zero=True)
    out = fourier_layer(rng.standard_normal((2, 16, 3)), W, S, activation="relu")
    assert not np.any(out.data)


def test_skip_with_zero_weights_is_activation(rng):
    W, S, M = _layers(rng, 3, 4, zero=True)
    v = rng.standard_normal((2, 16, 3))
    out = fourier_layer(v, W, S, activation="gelu", variant="skip", mlp_layers=M)
    np.testing.assert_allclose(out.data, ops.gelu(v).data, atol=1e-15)


def test_width_mismatch(rng):
    W, S, _ = _layers(rng, 3, 4)
    with pytest.raises(ValueError):
        fourier_layer(np.zeros((1, 16, 2)), W, S)


@pytest.mark.parametrize("variant", ["standard", "skip"])
def test_two_layer_stack_gradients(rng, variant):
    d, k, n = 2, 3, 8
    params = {}
    for i in range(2):
        W, S, M = _layers(rng, d, k)
        params.update({f"W{i}": W.W, f"b{i}": W.b, f"R{i}": S.R, f"M{i}a": M[0].W, f"M{i}b": M[0].b, f"M{i}c": M[1].W, f"M{i}d": M[1].b})
    v = rng.uniform(-1, 1, (2, n, d))
    c = rng.uniform(-1, 1, (2, n, d))

    def fn(p):
        h = v
        for i in range(2):
            mlp = (LinearLayer(p[f"M{i}a"], p[f"M{i}b"]), LinearLayer(p[f"M{i}c"], p[f"M{i}d"]))
            h = fourier_layer(h, LinearLayer(p[f"W{i}"], p[f"b{i}"]), SpectralConvLayer(p[f"R{i}"], (k,)), "gelu", variant, mlp)
        return ops.sum(ops.mul(h, c))

    errs = gradcheck(fn, params)
    assert max(errs.values()) < 1e-5, errs


# --- phi ---------------------------------------------------------------------------------


@pytest.mark.parametrize("x,expected", [(-2.0, 0.0), (0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (1.5, 1.5), (3.0, 0.0), (4.0, 0.0)])
def test_phi_values(x, expected):
    assert phi_activation(np.array([x])).data[0] == pytest.approx(expected, abs=1e-14)


def test_phi_support_and_sign():
    x = np.linspace(-2, 5, 7001)
    y = phi_activation(x).data
    inside = (x > 0) & (x < 3)
    assert np.all(y[~inside] == 0)
    assert np.all(y[inside] > 0)


@pytest.mark.parametrize("knot", [0.0, 1.0, 2.0, 3.0])
def test_phi_is_c1(knot):
    eps = 1e-7
    _, d = phi_values(np.array([knot - eps, knot + eps]))
    assert abs(d[0] - d[1]) < 1e-5
    h = 1e-6
    v, _ = phi_values(np.array([knot - h, knot + h]))
    _, dk = phi_values(np.array([knot]))
    assert (v[1] - v[0]) / (2 * h) == pytest.approx(dk[0], abs=1e-5)


# --- Adam -------------------------------------------------------------------------------


def test_zero_gradient_leaves_parameters():
    p = {"w": np.array([1.0, -2.0]), "r": np.array([1 + 1j])}
    before = {k: v.copy() for k, v in p.items()}
    adam_step(AdamState(), p, {k: np.zeros_like(v) for k, v in p.items()})
    for k in p:
        np.testing.assert_array_equal(p[k], before[k])


def test_first_step_moves_by_lr():
    p = {"w": np.array([0.5])}
    adam_step(AdamState(lr0=1e-3), p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), rel=1e-12)


@pytest.mark.parametrize("epoch,factor", [(0, 1), (99, 1), (100, 0.5), (250, 0.25), (600, 1 / 64)])
def test_learning_rate_schedule(epoch, factor):
    assert AdamState(lr0=1e-3, halving_period=100).lr(epoch) == pytest.approx(1e-3 * factor)


def test_nan_gradient_reports_parameter():
    p = {"a": np.ones(2), "b": np.ones(2)}
    with pytest.raises(FloatingPointError, match="'b'.*id 1"):
        adam_step(AdamState(), p, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, ids={"a": 0, "b": 1})
    np.testing.assert_array_equal(p["a"], np.ones(2))


def test_adam_minimizes_quadratic():
    p = {"w": np.array([3.0, -2.0]), "z": np.array([1.0 - 1.0j])}
    st = AdamState(lr0=0.05)
    for _ in range(2000):
        adam_step(st, p, {"w": 2 * p["w"], "z": 2 * p["z"]})
    assert np.max(np.abs(p["w"])) < 1e-2 and abs(p["z"][0]) < 1e-2
