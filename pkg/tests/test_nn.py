import math

import numpy as np
import pytest

from fedsim.errors import ConfigError, ShapeError
from fedsim.nn import (
    Batch,
    Layer,
    Model,
    accuracy,
    forward,
    init_model,
    loss_and_grads,
    n_extractor_params,
    n_params,
    sgd_step,
)


def random_batch(rng, n, dim, n_classes):
    return Batch(rng.normal(size=(n, dim)), rng.integers(0, n_classes, size=n))


def zero_model(dims, n_classes):
    model = init_model(dims, n_classes, seed=0)
    for layer in model.extractor + [model.head]:
        layer.weights[:] = 0.0
        layer.bias[:] = 0.0
    return model


# ---------------------------------------------------------------- init_model


def test_init_is_deterministic():
    a = init_model([4, 8], 3, seed=7)
    b = init_model([4, 8], 3, seed=7)
    for la, lb in zip(a.extractor + [a.head], b.extractor + [b.head]):
        assert np.array_equal(la.weights, lb.weights)
        assert np.array_equal(la.bias, lb.bias)


def test_init_shapes_chain():
    model = init_model([4, 8], 3, seed=7)
    assert len(model.extractor) == 1
    assert model.extractor[0].weights.shape == (4, 8)
    assert model.head.weights.shape == (8, 3)
    assert model.input_dim == 4
    assert model.n_classes == 3


def test_init_biases_zero_and_glorot_bounded():
    for seed in range(5):
        model = init_model([6, 5, 4], 3, seed=seed)
        for layer in model.extractor + [model.head]:
            assert np.all(layer.bias == 0.0)
            s = math.sqrt(6.0 / (layer.n_in + layer.n_out))
            assert np.all(np.abs(layer.weights) <= s)


def test_init_rejects_bad_dims():
    with pytest.raises(ConfigError):
        init_model([], 3, seed=0)
    with pytest.raises(ConfigError):
        init_model([4, 0], 3, seed=0)
    with pytest.raises(ConfigError):
        init_model([4], 1, seed=0)


def test_param_counts():
    model = init_model([32, 64, 32], 10, seed=0)
    assert n_extractor_params(model) == 32 * 64 + 64 + 64 * 32 + 32
    assert n_params(model) == n_extractor_params(model) + 32 * 10 + 10


# ------------------------------------------------------------------- forward


def naive_forward(model, inputs):
    """Oracle: explicit triple-loop matmul, no vectorization."""
    h = inputs
    for layer in model.extractor:
        out = np.zeros((h.shape[0], layer.n_out))
        for i in range(h.shape[0]):
            for j in range(layer.n_out):
                acc = layer.bias[j]
                for k in range(h.shape[1]):
                    acc += h[i, k] * layer.weights[k, j]
                out[i, j] = max(acc, 0.0)
        h = out
    logits = np.zeros((h.shape[0], model.head.n_out))
    for i in range(h.shape[0]):
        for j in range(model.head.n_out):
            acc = model.head.bias[j]
            for k in range(h.shape[1]):
                acc += h[i, k] * model.head.weights[k, j]
            logits[i, j] = acc
    return logits


def test_forward_matches_naive_matmul_oracle():
    rng = np.random.default_rng(0)
    for _ in range(5):
        model = init_model([5, 6, 4], 3, seed=int(rng.integers(1 << 30)))
        batch = random_batch(rng, 7, 5, 3)
        logits, _ = forward(model, batch)
        assert np.allclose(logits, naive_forward(model, batch.inputs), atol=1e-12, rtol=0)


def test_zero_model_gives_uniform_softmax():
    model = zero_model([4, 6], 5)
    batch = random_batch(np.random.default_rng(1), 8, 4, 5)
    logits, _ = forward(model, batch)
    assert np.all(logits == 0.0)
    loss, _ = loss_and_grads(model, batch)
    assert loss == pytest.approx(math.log(5), abs=1e-12)


def test_relu_kills_negative_representation():
    eye = Layer(np.eye(3), np.zeros(3))
    model = Model([eye], Layer(np.ones((3, 2)), np.zeros(2)))
    batch = Batch(np.full((4, 3), -2.0), np.zeros(4, dtype=int))
    logits, cache = forward(model, batch)
    assert np.all(cache.representation == 0.0)
    assert np.all(logits == 0.0)


def test_forward_rejects_dim_mismatch():
    model = init_model([4, 8], 3, seed=0)
    with pytest.raises(ShapeError):
        forward(model, Batch(np.zeros((2, 5)), np.zeros(2, dtype=int)))


def test_softmax_probabilities_normalize():
    rng = np.random.default_rng(2)
    for _ in range(10):
        model = init_model([4, 6], 5, seed=int(rng.integers(1 << 30)))
        for layer in model.extractor + [model.head]:
            layer.weights[:] *= 40.0  # push logits into extreme ranges
        batch = random_batch(rng, 6, 4, 5)
        logits, _ = forward(model, batch)
        shifted = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
        assert np.all(np.isfinite(probs))
        assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-12, rtol=0)


# ------------------------------------------------------------ loss_and_grads


def test_uniform_logits_loss_is_log_c():
    model = zero_model([3, 4], 4)
    batch = random_batch(np.random.default_rng(3), 6, 3, 4)
    loss, _ = loss_and_grads(model, batch)
    assert loss == pytest.approx(1.3862943611, abs=1e-9)


def test_freeze_zeroes_gradients_but_not_loss():
    rng = np.random.default_rng(4)
    model = init_model([3, 4], 3, seed=5)
    batch = random_batch(rng, 5, 3, 3)
    loss_full, grads_full = loss_and_grads(model, batch)
    loss_fe, grads_fe = loss_and_grads(model, batch, freeze_extractor=True)
    loss_fh, grads_fh = loss_and_grads(model, batch, freeze_head=True)

    assert loss_full == loss_fe == loss_fh
    for layer in grads_fe.extractor:
        assert np.all(layer.weights == 0.0) and np.all(layer.bias == 0.0)
    assert np.all(grads_fh.head.weights == 0.0) and np.all(grads_fh.head.bias == 0.0)
    # unfrozen parts agree with the unfrozen computation
    assert np.array_equal(grads_fe.head.weights, grads_full.head.weights)
    for a, b in zip(grads_fh.extractor, grads_full.extractor):
        assert np.array_equal(a.weights, b.weights)


def test_empty_batch_rejected():
    model = init_model([3, 4], 3, seed=0)
    with pytest.raises(ValueError):
        loss_and_grads(model, Batch(np.zeros((0, 3)), np.zeros(0, dtype=int)))


def fd_grad(fun, arr, step=1e-6):
    """Central finite differences of fun() w.r.t. each entry of arr."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        up = fun()
        arr[idx] = orig - step
        down = fun()
        arr[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def assert_grads_close(analytic, numeric):
    # relative error < 1e-6, with an absolute floor of 1e-8 covering
    # entries that are analytically zero (finite differences bottom out
    # around 1e-10 there)
    assert np.allclose(analytic, numeric, rtol=1e-6, atol=1e-8), (
        f"max abs diff {np.max(np.abs(analytic - numeric))}"
    )


@pytest.mark.parametrize("seed,dims,n_classes,batch_n", [
    (0, [3, 4], 3, 5),
    (1, [3, 4], 3, 5),
    (2, [3, 4], 3, 5),
    (3, [5, 6], 4, 8),   # largest covered instance
    (4, [5, 4, 6], 4, 8),
])
def test_gradients_match_finite_differences(seed, dims, n_classes, batch_n):
    rng = np.random.default_rng(seed)
    model = init_model(dims, n_classes, seed=seed + 100)
    batch = random_batch(rng, batch_n, dims[0], n_classes)
    _, grads = loss_and_grads(model, batch)

    def loss_value():
        return loss_and_grads(model, batch)[0]

    for g_layer, p_layer in zip(grads.extractor + [grads.head], model.extractor + [model.head]):
        assert_grads_close(g_layer.weights, fd_grad(loss_value, p_layer.weights))
        assert_grads_close(g_layer.bias, fd_grad(loss_value, p_layer.bias))


def test_gradients_finite_for_deeper_model():
    rng = np.random.default_rng(8)
    model = init_model([5, 6, 6], 4, seed=22)
    batch = random_batch(rng, 8, 5, 4)
    loss, grads = loss_and_grads(model, batch)
    assert np.isfinite(loss)
    for layer in grads.extractor + [grads.head]:
        assert np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))


# ------------------------------------------------------------------ sgd_step


def test_sgd_zero_lr_is_identity():
    model = init_model([3, 4], 3, seed=1)
    batch = random_batch(np.random.default_rng(5), 4, 3, 3)
    _, grads = loss_and_grads(model, batch)
    stepped = sgd_step(model, grads, 0.0)
    for a, b in zip(stepped.extractor + [stepped.head], model.extractor + [model.head]):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.bias, b.bias)


def test_sgd_arithmetic():
    model = Model([], Layer(np.array([[1.0]]), np.array([1.0])))
    grads = Model([], Layer(np.array([[0.5]]), np.array([0.5])))
    stepped = sgd_step(model, grads, 0.1)
    assert stepped.head.weights[0, 0] == pytest.approx(0.95, abs=0)
    assert stepped.head.bias[0] == pytest.approx(0.95, abs=0)


def test_sgd_decreases_convex_loss():
    rng = np.random.default_rng(6)
    model = init_model([4], 3, seed=3)  # single linear layer: convex problem
    batch = random_batch(rng, 20, 4, 3)
    loss_before, grads = loss_and_grads(model, batch)
    stepped = sgd_step(model, grads, 0.01)
    loss_after, _ = loss_and_grads(stepped, batch)
    assert loss_after < loss_before


def test_sgd_rejects_shape_mismatch():
    model = init_model([3, 4], 3, seed=1)
    grads = init_model([3, 5], 3, seed=1)
    with pytest.raises(ShapeError):
        sgd_step(model, grads, 0.1)


# ------------------------------------------------------------------ accuracy


def test_zero_model_predicts_class_zero():
    rng = np.random.default_rng(7)
    model = zero_model([4, 5], 3)
    labels = rng.integers(0, 3, size=50)
    batch = Batch(rng.normal(size=(50, 4)), labels)
    assert accuracy(model, batch) == pytest.approx((labels == 0).mean())


def test_separable_data_perfectly_fit():
    # construct a model by hand that implements argmax over coordinates
    model = Model([], Layer(np.eye(3) * 10.0, np.zeros(3)))
    rng = np.random.default_rng(8)
    labels = rng.integers(0, 3, size=30)
    inputs = np.full((30, 3), -1.0)
    inputs[np.arange(30), labels] = 1.0
    assert accuracy(model, Batch(inputs, labels)) == 1.0


def test_single_sample_accuracy():
    model = Model([], Layer(np.eye(2), np.zeros(2)))
    assert accuracy(model, Batch(np.array([[5.0, 0.0]]), np.array([0]))) == 1.0


def test_accuracy_empty_rejected():
    model = init_model([3, 4], 3, seed=0)
    with pytest.raises(ValueError):
        accuracy(model, Batch(np.zeros((0, 3)), np.zeros(0, dtype=int)))


def test_forward_is_pure():
    model = init_model([3, 4], 3, seed=9)
    batch = random_batch(np.random.default_rng(9), 5, 3, 3)
    snap = [(l.weights.copy(), l.bias.copy()) for l in model.extractor + [model.head]]
    forward(model, batch)
    loss_and_grads(model, batch)
    sgd_step(model, init_model([3, 4], 3, seed=9), 0.5)
    for (w, b), layer in zip(snap, model.extractor + [model.head]):
        assert np.array_equal(w, layer.weights) and np.array_equal(b, layer.bias)
