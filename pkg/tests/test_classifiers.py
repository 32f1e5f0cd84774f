import numpy as np
import pytest

from psodr.classifiers import (PerceptronModel, TrainConfig, elm_decision, elm_predict, elm_train,
                               hidden_activations, least_squares, perceptron_decision, perceptron_predict,
                               perceptron_retrain, perceptron_train)
from psodr.evaluation import score


def blobs(rng, m=200, d=5, sep=4.0):
    y = np.arange(m) % 2
    x = rng.normal(size=(m, d))
    x[:, 0] += np.where(y == 1, sep / 2, -sep / 2)
    return x, y


def test_elm_fits_separable_blobs(rng):
    x, y = blobs(rng)
    model = elm_train(x, y, hidden=80, seed=0)
    assert (elm_predict(model, x) == y).mean() >= 0.95


def test_elm_single_sample():
    model = elm_train(np.ones((1, 3)), np.array([1]), hidden=10, seed=0)
    assert model.output_weights.shape == (10,)
    assert np.all(np.isfinite(model.output_weights))
    assert elm_predict(model, np.ones((1, 3)))[0] == 1


def test_elm_deterministic(rng):
    x, y = blobs(rng)
    a, b = elm_train(x, y, 80, seed=4), elm_train(x, y, 80, seed=4)
    np.testing.assert_array_equal(a.output_weights, b.output_weights)
    np.testing.assert_array_equal(elm_predict(a, x), elm_predict(b, x))


def test_elm_dimension_check(rng):
    x, y = blobs(rng)
    model = elm_train(x, y, 20, seed=0)
    with pytest.raises(ValueError):
        elm_predict(model, x[:, :3])


def test_elm_zero_output_weights_predict_class_one(rng):
    x, y = blobs(rng)
    model = elm_train(x, y, 20, seed=0)
    model = type(model)(model.input_weights, model.input_biases, np.zeros_like(model.output_weights),
                        model.hidden, model.seed, model.one_class)
    np.testing.assert_array_equal(elm_predict(model, x), 1)


def test_least_squares_against_dense_oracle(rng):
    for _ in range(20):
        m = int(rng.integers(2, 51))
        h = int(rng.integers(1, 21))
        H = rng.normal(size=(m, h))
        if rng.random() < 0.3 and h > 1:
            H[:, -1] = H[:, 0]  # rank-deficient case
        t = rng.choice([-1.0, 1.0], size=m)
        beta = least_squares(H, t)
        grad = H.T @ (H @ beta - t)
        assert np.linalg.norm(grad) <= 1e-6 * max(np.linalg.norm(H.T @ t), 1.0)
        oracle = np.linalg.pinv(H) @ t
        np.testing.assert_allclose(H @ beta, H @ oracle, atol=1e-6)


def test_elm_output_layer_solves_normal_equations(rng):
    x, y = blobs(rng, m=40, d=3)
    model = elm_train(x, y, hidden=15, seed=1)
    H = hidden_activations(model, x)
    t = np.where(y == 1, 1.0, -1.0)
    grad = H.T @ (H @ model.output_weights - t)
    assert np.linalg.norm(grad) <= 1e-6 * np.linalg.norm(H.T @ t)
    np.testing.assert_allclose(elm_decision(model, x), H @ model.output_weights)


def test_perceptron_separable_reaches_full_accuracy(rng):
    x, y = blobs(rng, sep=8.0)
    model = perceptron_train(x, y, x, y, TrainConfig(max_epochs=200, patience=10))
    assert (perceptron_predict(model, x) == y).mean() == 1.0


def test_perceptron_early_stops_on_random_validation(rng):
    x, y = blobs(rng, sep=1.0)
    xv = rng.normal(size=(40, 5))
    yv = rng.integers(0, 2, 40)
    model = perceptron_train(x, y, xv, yv, TrainConfig(max_epochs=200, patience=1))
    assert model.stopped_early
    assert model.epochs_run < 200


def test_perceptron_zero_epochs_returns_zero_model(rng):
    x, y = blobs(rng)
    model = perceptron_train(x, y, x, y, TrainConfig(max_epochs=0))
    assert model.epochs_run == 0
    np.testing.assert_array_equal(model.weights, 0.0)
    assert model.bias == 0.0


def test_perceptron_deterministic(rng):
    x, y = blobs(rng, sep=1.5)
    cfg = TrainConfig(seed=3)
    a = perceptron_train(x, y, x[:20], y[:20], cfg)
    b = perceptron_train(x, y, x[:20], y[:20], cfg)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.bias == b.bias and a.epochs_run == b.epochs_run


def test_perceptron_patience_bound(rng):
    for seed in range(15):
        r = np.random.default_rng(seed)
        x, y = blobs(r, m=60, sep=float(r.uniform(0.5, 3)))
        xv, yv = blobs(r, m=20, sep=1.0)
        patience = int(r.integers(1, 6))
        m = perceptron_train(x, y, xv, yv, TrainConfig(patience=patience, seed=seed))
        assert m.epochs_run <= m.best_epoch + patience


def test_retrain_on_nothing_is_identity(rng):
    x, y = blobs(rng)
    model = perceptron_train(x, y, x, y, TrainConfig())
    same = perceptron_retrain(model, x[:0], y[:0], x, y, TrainConfig())
    np.testing.assert_array_equal(same.weights, model.weights)
    assert same.bias == model.bias
    np.testing.assert_array_equal(perceptron_predict(same, x), perceptron_predict(model, x))


def test_retrain_does_not_hurt_on_same_distribution():
    diffs = []
    for seed in range(10):
        r = np.random.default_rng(100 + seed)
        xa, ya = blobs(r, m=100, sep=2.0)
        xb, yb = blobs(r, m=60, sep=2.0)
        xv, yv = blobs(r, m=40, sep=2.0)
        xt, yt = blobs(r, m=400, sep=2.0)
        cfg = TrainConfig(seed=seed)
        pre = perceptron_train(xa, ya, xv, yv, cfg)
        post = perceptron_retrain(pre, xb, yb, xv, yv, cfg)
        diffs.append(score(yt, perceptron_predict(post, xt))[0] - score(yt, perceptron_predict(pre, xt))[0])
    diffs = np.asarray(diffs)
    assert diffs.mean() >= -2 * diffs.std(ddof=1) / np.sqrt(len(diffs))


def test_retrain_follows_flipped_labels(rng):
    x, y = blobs(rng, sep=6.0)
    pre = perceptron_train(x, y, x, y, TrainConfig())
    probe = np.zeros((1, 5))
    probe[0, 0] = 3.0
    before = perceptron_decision(pre, probe)[0]
    post = perceptron_retrain(pre, x, 1 - y, x, 1 - y, TrainConfig(max_epochs=200, patience=50))
    after = perceptron_decision(post, probe)[0]
    assert np.sign(before) == 1 and np.sign(after) == -1


def test_retrain_dimension_mismatch(rng):
    x, y = blobs(rng)
    model = PerceptronModel.zeros(3)
    with pytest.raises(ValueError):
        perceptron_retrain(model, x, y, x, y, TrainConfig())


def test_elm_one_class_is_constant_and_flagged(rng):
    x = rng.normal(size=(12, 3))
    for cls in (0, 1):
        model = elm_train(x, np.full(12, cls), hidden=10, seed=0)
        assert model.one_class
        np.testing.assert_array_equal(elm_predict(model, rng.normal(size=(30, 3))), cls)
    assert not elm_train(*blobs(rng), hidden=10).one_class
