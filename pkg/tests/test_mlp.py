import numpy as np
import pytest

from forgescope.errors import ShapeError, SingleClassError, TruncatedModel, VersionMismatch
from forgescope.mlp import (
    Mlp,
    TaskKind,
    TrainConfig,
    forward,
    gradient_check,
    init_mlp,
    load_model,
    loss_and_gradients,
    save_model,
    train,
)


def zero_model(sizes=(320, 128, 32, 1)):
    weights = [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
    biases = [np.zeros(b) for b in sizes[1:]]
    return Mlp(weights=weights, biases=biases)


def toy_separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(np.int8)
    x[y == 1] += 0.8
    x[y == 0] -= 0.8
    return x, y


class TestForward:
    def test_zero_model_gives_half(self):
        model = zero_model()
        assert forward(model, np.zeros(320)) == 0.5
        assert forward(model, np.random.default_rng(0).random(320)) == 0.5

    def test_shape_error(self):
        model = zero_model()
        with pytest.raises(ShapeError):
            forward(model, np.zeros(319))

    def test_matmul_oracle(self):
        model = init_mlp((4, 5, 3, 1), seed=3)
        x = np.random.default_rng(1).random(4)
        # naive triple-loop forward pass
        a = x.copy()
        for w, b in zip(model.weights[:-1], model.biases[:-1]):
            nxt = np.zeros(w.shape[1])
            for j in range(w.shape[1]):
                s = b[j]
                for i in range(w.shape[0]):
                    s += a[i] * w[i, j]
                nxt[j] = max(s, 0.0)
            a = nxt
        logit = model.biases[-1][0]
        for i in range(len(a)):
            logit += a[i] * model.weights[-1][i, 0]
        expect = 1.0 / (1.0 + np.exp(-logit))
        assert abs(forward(model, x) - expect) < 1e-12

    def test_logistic_lipschitz(self):
        model = init_mlp((6, 8, 4, 1), seed=5)
        rng = np.random.default_rng(2)
        for _ in range(50):
            x1, x2 = rng.random((2, 6))
            l1 = forward(model, x1, return_logit=True)
            l2 = forward(model, x2, return_logit=True)
            s1, s2 = forward(model, x1), forward(model, x2)
            assert abs(s1 - s2) <= 0.25 * abs(l1 - l2) + 1e-15

    def test_batch_matches_scalar(self):
        model = init_mlp((6, 8, 4, 1), seed=9)
        xs = np.random.default_rng(3).random((10, 6))
        batch = forward(model, xs)
        for i in range(10):
            assert batch[i] == pytest.approx(forward(model, xs[i]), abs=1e-14)

    def test_batch_rows_position_independent(self):
        model = init_mlp((6, 8, 4, 1), seed=9)
        xs = np.random.default_rng(3).random((32, 6))
        perm = np.random.default_rng(4).permutation(32)
        assert np.array_equal(forward(model, xs)[perm], forward(model, xs[perm]))


class TestTrain:
    def test_toy_separable_accuracy(self):
        x, y = toy_separable()
        cfg = TrainConfig(learning_rate=0.05, batch_size=16, epochs=50, seed=1)
        model = train(x, y, cfg, layer_sizes=(2, 16, 8, 1))
        acc = np.mean((forward(model, x) >= 0.5) == (y == 1))
        assert acc >= 0.99

    def test_determinism(self):
        x, y = toy_separable()
        cfg = TrainConfig(learning_rate=0.05, batch_size=16, epochs=10, seed=2)
        m1 = train(x, y, cfg, layer_sizes=(2, 8, 4, 1))
        m2 = train(x, y, cfg, layer_sizes=(2, 8, 4, 1))
        for w1, w2 in zip(m1.weights, m2.weights):
            assert np.array_equal(w1, w2)
        for b1, b2 in zip(m1.biases, m2.biases):
            assert np.array_equal(b1, b2)

    def test_single_class(self):
        x = np.random.default_rng(0).random((10, 4))
        with pytest.raises(SingleClassError):
            train(x, np.ones(10), TrainConfig(), layer_sizes=(4, 4, 2, 1))

    def test_loss_mostly_decreasing(self):
        x, y = toy_separable()
        cfg = TrainConfig(learning_rate=0.01, batch_size=16, epochs=30, seed=3)
        _, history = train(x, y, cfg, layer_sizes=(2, 16, 8, 1), return_history=True)
        increases = sum(1 for a, b in zip(history, history[1:]) if b > a)
        assert increases <= 2


class TestGradientCheck:
    def test_random_model_passes(self):
        rng = np.random.default_rng(0)
        model = init_mlp((12, 10, 6, 1), seed=4)
        x = rng.random((16, 12))
        y = rng.integers(0, 2, 16)
        assert gradient_check(model, x, y, l2=1e-3, seed=0, samples=120) < 1e-6

    def test_zero_batch_zero_weights(self):
        model = zero_model((8, 6, 4, 1))
        x = np.zeros((4, 8))
        y = np.array([0, 1, 0, 1])
        _, gw, _ = loss_and_gradients(model, x, y)
        assert np.max(np.abs(gw[0])) == 0.0  # dead inputs, dead hidden grads
        assert gradient_check(model, x, y, seed=1) < 1e-6

    def test_corrupted_gradient_detected(self):
        rng = np.random.default_rng(5)
        model = init_mlp((12, 10, 6, 1), seed=6)
        x = rng.random((16, 12))
        y = rng.integers(0, 2, 16)
        _, gw, gb = loss_and_gradients(model, x, y, 0.0)
        gw = [-w for w in gw]  # sign flip
        err = gradient_check(model, x, y, seed=2, gradients=(gw, gb))
        assert err > 0.1

    def test_empty_batch_rejected(self):
        model = zero_model((4, 4, 2, 1))
        with pytest.raises(ValueError):
            gradient_check(model, np.zeros((0, 4)), np.zeros(0))


class TestSerialization:
    def test_roundtrip_identical_outputs(self, tmp_path):
        model = init_mlp(seed=7, task=TaskKind.SHEAR)
        path = tmp_path / "model.fsmlp"
        save_model(model, path)
        back = load_model(path)
        assert back.task is TaskKind.SHEAR
        assert back.layer_sizes == model.layer_sizes
        xs = np.random.default_rng(8).random((100, 320))
        assert np.array_equal(forward(model, xs), forward(back, xs))

    def test_truncated_file(self, tmp_path):
        model = init_mlp((8, 6, 4, 1), seed=1)
        path = tmp_path / "model.fsmlp"
        save_model(model, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 16])
        with pytest.raises(TruncatedModel):
            load_model(path)

    def test_wrong_version(self, tmp_path):
        model = init_mlp((8, 6, 4, 1), seed=1)
        path = tmp_path / "model.fsmlp"
        save_model(model, path)
        data = bytearray(path.read_bytes())
        data[5] = ord("9")
        path.write_bytes(bytes(data))
        with pytest.raises(VersionMismatch):
            load_model(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "model.fsmlp"
        path.write_bytes(b"GARBAGE!" + b"\x00" * 100)
        with pytest.raises(VersionMismatch):
            load_model(path)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(l2=-1.0)

    def test_model_shape_validation(self):
        with pytest.raises(ValueError):
            Mlp(weights=[np.zeros((4, 3))], biases=[np.zeros(2)])
