import numpy as np
import pytest

from conftest import unit_rows
from mcrn.encoder import Encoder, EncoderParams, OptimizerState, adam_step, init_params, lr_at, orthogonal


def param_fd_check(enc, x, g_out, h=1e-6):
    """Largest relative error between backprop and central differences of sum(g_out * f(x))."""
    feats, cache = enc.forward(x)
    grads = enc.backward(cache, g_out)

    def objective():
        return float(np.sum(enc.forward(x)[0] * g_out))

    worst = 0.0
    for p, g in zip(enc.params.arrays(), grads.arrays()):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = objective()
            p[idx] = old - h
            down = objective()
            p[idx] = old
            fd = (up - down) / (2 * h)
            worst = max(worst, abs(fd - g[idx]) / max(1.0, abs(fd)))
    return worst


def test_forward_is_unit_norm(rng):
    enc = Encoder.create([5, 7, 3], rng)
    f, _ = enc.forward(rng.normal(size=(10, 5)))
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), 1.0, atol=1e-12)


def test_param_gradients_match_finite_differences(rng):
    enc = Encoder.create([4, 6, 5, 3], rng, dtype=np.float64)
    x = rng.normal(size=(6, 4))
    assert param_fd_check(enc, x, rng.normal(size=(6, 3))) < 1e-5


def test_backward_rejects_stale_cache(rng):
    enc = Encoder.create([3, 4, 2], rng, dtype=np.float64)
    f, cache = enc.forward(rng.normal(size=(2, 3)))
    enc.backward(cache, np.ones_like(f))
    with pytest.raises(RuntimeError):
        enc.backward(cache, np.ones_like(f))
    f, cache = enc.forward(rng.normal(size=(2, 3)))
    zero = EncoderParams([np.zeros_like(w) for w in enc.params.weights], [np.zeros_like(b) for b in enc.params.biases])
    adam_step(enc, OptimizerState.for_params(enc.params), zero)
    with pytest.raises(RuntimeError):
        enc.backward(cache, np.ones_like(f))


def test_zero_output_is_degenerate():
    params = EncoderParams([np.zeros((2, 2))], [np.zeros(2)])
    with pytest.raises(ValueError):
        Encoder(params).forward(np.ones((1, 2)))


def test_orthogonal_init(rng):
    w = orthogonal(16, 64, rng)
    np.testing.assert_allclose(w @ w.T, np.eye(16), atol=1e-12)
    w = orthogonal(64, 32, rng)
    np.testing.assert_allclose(w.T @ w, np.eye(32), atol=1e-12)
    p = init_params([16, 64, 64, 32], rng)
    assert p.dims == [16, 64, 64, 32] and p.dtype == np.float32
    assert not any(b.any() for b in p.biases)


def test_adam_first_step_moves_by_lr(rng):
    # with bias correction the first step is lr * sign(g) (plus decay)
    enc = Encoder(EncoderParams([np.ones((2, 2))], [np.zeros(2)]))
    state = OptimizerState.for_params(enc.params, lr=0.01, weight_decay=0.0)
    g = EncoderParams([np.array([[1.0, -2.0], [3.0, 0.5]])], [np.array([-1.0, 1.0])])
    adam_step(enc, state, g)
    np.testing.assert_allclose(enc.params.weights[0], 1 - 0.01 * np.sign(g.weights[0]), atol=1e-9)
    np.testing.assert_allclose(enc.params.biases[0], [0.01, -0.01], atol=1e-9)
    assert state.step == 1 and enc.version == 1


def test_adam_weight_decay_is_decoupled():
    enc = Encoder(EncoderParams([np.full((1, 1), 2.0)], [np.zeros(1)]))
    state = OptimizerState.for_params(enc.params, lr=0.1, weight_decay=0.5)
    adam_step(enc, state, EncoderParams([np.zeros((1, 1))], [np.zeros(1)]))
    assert enc.params.weights[0][0, 0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_adam_keeps_storage_dtype(rng):
    enc = Encoder.create([3, 4, 2], rng, dtype=np.float32)
    state = OptimizerState.for_params(enc.params)
    f, cache = enc.forward(rng.normal(size=(3, 3)))
    adam_step(enc, state, enc.backward(cache, rng.normal(size=f.shape)))
    assert all(a.dtype == np.float32 for a in enc.params.arrays() + state.m + state.v)


def test_lr_schedule():
    assert lr_at(0) == 0.00035
    assert lr_at(19) == 0.00035
    assert lr_at(20) == pytest.approx(0.000035)
    assert lr_at(45) == pytest.approx(0.0000035)
    with pytest.raises(ValueError):
        lr_at(-1)


def test_training_separates_two_classes(rng):
    # a few hundred Adam steps on a contrastive toy pull classes apart
    x = np.vstack([rng.normal(size=(8, 4)) + 2.0, rng.normal(size=(8, 4)) - 2.0 + np.array([4.0, 0, 0, 0])])
    y = np.repeat([0, 1], 8)
    enc = Encoder.create([4, 8, 3], rng, dtype=np.float64)
    state = OptimizerState.for_params(enc.params, lr=0.01, weight_decay=0.0)
    protos = unit_rows(rng, 2, 3)
    for _ in range(300):
        f, cache = enc.forward(x)
        # maximise similarity to own prototype
        adam_step(enc, state, enc.backward(cache, -protos[y]))
    f, _ = enc.forward(x)
    assert np.mean(np.sum(f * protos[y], axis=1)) > 0.9
