import math

import numpy as np
import pytest

from adapcomfl import mlkit
from adapcomfl.config import ModelConfig
from adapcomfl.mlkit import Architecture, Dataset, ModelWeights


def random_batch(seed, samples=12, dims=5, classes=3):
    rng = np.random.default_rng(seed)
    return Dataset(rng.normal(size=(samples, dims)), rng.integers(0, classes, samples), classes)


def duplicated(d: Dataset) -> Dataset:
    return Dataset(np.vstack([d.features, d.features]), np.concatenate([d.labels, d.labels]), d.classes)


def test_zero_logreg_loss_is_log2():
    batch = Dataset(np.array([[1.0, -2.0], [0.5, 3.0]]), np.array([0, 1]), 2)
    loss, _ = mlkit.loss_and_grad(mlkit.init_weights(Architecture("logreg", 2, 2)), batch)
    assert loss == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("kind", mlkit.MODEL_KINDS)
def test_gradient_matches_finite_differences(kind):
    arch = Architecture(kind, 5, 3, hidden=6)
    rng = np.random.default_rng(8)
    w = ModelWeights(arch, rng.normal(0, 0.5, arch.size))
    batch = random_batch(9)
    _, analytic = mlkit.loss_and_grad(w, batch)
    numeric = mlkit.numeric_gradient(lambda v: mlkit.loss_and_grad(ModelWeights(arch, v), batch)[0], w.w)
    assert mlkit.max_relative_error(analytic, numeric) < 1e-4


@pytest.mark.parametrize("kind", mlkit.MODEL_KINDS)
def test_duplicating_samples_changes_nothing(kind):
    arch = Architecture(kind, 5, 3, hidden=6)
    w = mlkit.init_weights(arch, seed=2)
    batch = random_batch(3)
    l1, g1 = mlkit.loss_and_grad(w, batch)
    l2, g2 = mlkit.loss_and_grad(w, duplicated(batch))
    assert l1 == pytest.approx(l2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)


def test_flattening_order():
    arch = Architecture("mlp", 2, 3, hidden=4)
    w = ModelWeights(arch, np.arange(arch.size, dtype=float))
    (W1, b1), (W2, b2) = w.unpack()
    assert W1.shape == (2, 4) and W1[0].tolist() == [0, 1, 2, 3]
    assert b1.tolist() == [8, 9, 10, 11]
    assert W2.shape == (4, 3) and W2[0].tolist() == [12, 13, 14]
    assert b2.tolist() == [24, 25, 26]
    assert arch.size == 27


def test_shape_mismatch_rejected():
    w = mlkit.init_weights(Architecture("logreg", 4, 3))
    with pytest.raises(ValueError):
        mlkit.loss_and_grad(w, random_batch(0, dims=5))
    with pytest.raises(ValueError):
        mlkit.sgd_step(w, np.zeros(3), 0.1)


def test_sgd_step_arithmetic():
    w = ModelWeights(Architecture("logreg", 1, 2), np.ones(4))
    out = mlkit.sgd_step(w, np.array([1.0, -1.0, 0.0, 0.0]), 0.5)
    assert out.w[:2].tolist() == [0.5, 1.5]


def test_sgd_zero_grad_and_linearity():
    arch = Architecture("logreg", 3, 2)
    w = ModelWeights(arch, np.linspace(-1, 1, arch.size))
    assert np.array_equal(mlkit.sgd_step(w, np.zeros(arch.size), 0.3).w, w.w)
    g = np.linspace(0.5, -0.5, arch.size)
    twice = mlkit.sgd_step(mlkit.sgd_step(w, g, 0.1), g, 0.2)
    np.testing.assert_allclose(twice.w, mlkit.sgd_step(w, g, 0.3).w, rtol=1e-14)


def _onehot_classifier(classes):
    arch = Architecture("logreg", classes, classes)
    W = np.eye(classes)
    return ModelWeights(arch, np.concatenate([W.ravel(), np.zeros(classes)]))


def test_evaluate_perfect_and_partial():
    w = _onehot_classifier(3)
    feats = np.eye(3)[[0, 1, 2, 1]]
    assert mlkit.evaluate(w, Dataset(feats, np.array([0, 1, 2, 1]), 3)) == 100.0
    assert mlkit.evaluate(w, Dataset(feats, np.array([0, 1, 2, 0]), 3)) == 75.0


def test_evaluate_ties_go_to_lowest_class():
    w = _onehot_classifier(3)
    data = Dataset(np.array([[1.0, 1.0, 0.0]]), np.array([0]), 3)
    assert mlkit.evaluate(w, data) == 100.0


def test_evaluate_duplicate_invariance_and_range():
    data = mlkit.make_synthetic_dataset(1, 300, 4, 3, 1.0)
    w = mlkit.init_weights(Architecture("mlp", 4, 3, 8), seed=1)
    acc = mlkit.evaluate(w, data)
    assert 0.0 <= acc <= 100.0
    assert mlkit.evaluate(w, duplicated(data)) == acc


def test_evaluate_empty_rejected():
    w = _onehot_classifier(2)
    with pytest.raises(ValueError):
        mlkit.evaluate(w, Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2))


def test_synthetic_dataset_deterministic_and_balanced():
    a = mlkit.make_synthetic_dataset(5, 1001, 6, 4, 3.0)
    b = mlkit.make_synthetic_dataset(5, 1001, 6, 4, 3.0)
    assert a.digest() == b.digest()
    counts = np.bincount(a.labels, minlength=4)
    assert counts.max() - counts.min() <= 1


def test_no_separation_means_chance_accuracy():
    classes = 4
    train = mlkit.make_synthetic_dataset(0, 2000, 5, classes, 0.0)
    test = mlkit.make_synthetic_dataset(1, 2000, 5, classes, 0.0)
    w = mlkit.train_local(mlkit.init_weights(Architecture("logreg", 5, classes)), train, 0.5, epochs=100)
    assert abs(mlkit.evaluate(w, test) - 100.0 / classes) <= 5.0


def test_wide_separation_is_learnable():
    train = mlkit.make_synthetic_dataset(0, 2000, 19, 10, 5.0)
    w = mlkit.train_local(mlkit.init_weights(Architecture("logreg", 19, 10)), train, 0.5, epochs=100)
    assert mlkit.evaluate(w, train) > 95.0


@pytest.mark.parametrize("kind", mlkit.MODEL_KINDS)
def test_full_batch_loss_decreases_monotonically(kind):
    data = mlkit.make_synthetic_dataset(2, 1000, 19, 10, 5.0)
    w = mlkit.init_weights(Architecture(kind, 19, 10), seed=0)
    lr = ModelConfig().lr
    losses = []
    for _ in range(50):
        loss, g = mlkit.loss_and_grad(w, data)
        losses.append(loss)
        w = mlkit.sgd_step(w, g, lr)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_minibatch_training_is_seeded():
    data = mlkit.make_synthetic_dataset(2, 200, 4, 3, 2.0)
    w0 = mlkit.init_weights(Architecture("logreg", 4, 3))
    a = mlkit.train_local(w0, data, 0.1, 2, 16, np.random.default_rng(1))
    b = mlkit.train_local(w0, data, 0.1, 2, 16, np.random.default_rng(1))
    assert np.array_equal(a.w, b.w)
