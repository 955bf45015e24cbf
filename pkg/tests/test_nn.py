import numpy as np
import pytest

from shapespace.nn import (
    Adam,
    BatchNorm,
    Dense,
    LeakyRelu,
    Sigmoid,
    Tanh,
    grad_check,
)


def layer_loss(layer, x, training=True):
    """Scalar probe: sum of squares of the layer output."""
    y = layer.forward(x, training)
    return float((y * y).sum())


def layer_backward_grads(layer, x, training=True):
    y = layer.forward(x, training)
    layer.backward(2.0 * y)
    return [g.copy() for g in layer.gradients()]


class TestDense:
    def test_identity_weights(self, rng):
        layer = Dense(rng, 4, 4)
        layer.w[...] = np.eye(4)
        x = rng.normal(size=(3, 4))
        assert np.array_equal(layer.forward(x), x)

    def test_zero_input_broadcasts_bias(self, rng):
        layer = Dense(rng, 4, 2)
        layer.b[...] = [1.5, -2.0]
        y = layer.forward(np.zeros((3, 4)))
        assert np.array_equal(y, np.tile([1.5, -2.0], (3, 1)))

    def test_gradients_match_finite_differences(self, rng):
        layer = Dense(rng, 5, 3)
        x = rng.uniform(-1.0, 1.0, (4, 5))
        analytic = layer_backward_grads(layer, x)
        err = grad_check(lambda: layer_loss(layer, x),
                         [p for _, p in layer.parameters()], analytic, h=1e-6)
        assert err < 1e-6

    def test_input_gradient(self, rng):
        layer = Dense(rng, 5, 3)
        x = rng.uniform(-1.0, 1.0, (4, 5))
        y = layer.forward(x)
        gx = layer.backward(2.0 * y)
        num = np.zeros_like(x)
        h = 1e-6
        for idx in np.ndindex(*x.shape):
            xp = x.copy(); xp[idx] += h
            xm = x.copy(); xm[idx] -= h
            num[idx] = (layer_loss(layer, xp) - layer_loss(layer, xm)) / (2 * h)
        assert np.abs(gx - num).max() / np.abs(num).max() < 1e-6

    def test_shape_mismatch(self, rng):
        with pytest.raises(ValueError, match="width"):
            Dense(rng, 5, 3).forward(np.zeros((2, 4)))

    def test_no_bias_variant(self, rng):
        layer = Dense(rng, 3, 2, bias=False)
        assert len(layer.parameters()) == 1
        assert np.array_equal(layer.forward(np.zeros((2, 3))), np.zeros((2, 2)))


class TestActivations:
    def test_leaky_values(self, rng):
        act = LeakyRelu()
        y = act.forward(np.array([[1.0, -1.0]]))
        assert y.tolist() == [[1.0, -0.2]]  # default slope 0.2

    def test_tanh_sigmoid_values(self):
        assert Tanh().forward(np.zeros((1, 1)))[0, 0] == 0.0
        assert Sigmoid().forward(np.zeros((1, 1)))[0, 0] == 0.5

    def test_saturation_no_overflow(self):
        y = Tanh().forward(np.array([[20.0, -20.0]]))
        assert abs(y[0, 0] - 1.0) < 1e-12 and abs(y[0, 1] + 1.0) < 1e-12
        s = Sigmoid().forward(np.array([[800.0, -800.0]]))
        assert np.all(np.isfinite(s))

    @pytest.mark.parametrize("act_cls", [LeakyRelu, Tanh, Sigmoid])
    def test_gradient_matches_finite_differences(self, act_cls, rng):
        act = act_cls()
        x = rng.uniform(-1.0, 1.0, (4, 6))
        x[np.abs(x) < 1e-3] = 0.5  # keep clear of the leaky kink
        y = act.forward(x)
        gx = act.backward(2.0 * y)
        num = np.zeros_like(x)
        h = 1e-6
        for idx in np.ndindex(*x.shape):
            xp = x.copy(); xp[idx] += h
            xm = x.copy(); xm[idx] -= h
            num[idx] = (layer_loss(act, xp) - layer_loss(act, xm)) / (2 * h)
        assert np.abs(gx - num).max() / np.abs(num).max() < 1e-6


class TestBatchNorm:
    def test_training_normalizes_batch(self, rng):
        bn = BatchNorm(6)
        x = rng.normal(3.0, 2.5, (32, 6))
        y = bn.forward(x, training=True)
        assert np.abs(y.mean(axis=0)).max() < 1e-12
        assert np.abs(y.var(axis=0) - 1.0).max() < 1e-4  # eps guard shifts it

    def test_inference_with_unit_stats_is_identity(self, rng):
        bn = BatchNorm(4)
        x = rng.normal(size=(3, 4))
        y = bn.forward(x, training=False)
        assert np.abs(y - x).max() < 1e-5  # within the eps guard

    def test_running_stats_updated_by_momentum(self, rng):
        bn = BatchNorm(4, momentum=0.9)
        x = rng.normal(2.0, 1.0, (64, 4))
        bn.forward(x, training=True)
        assert np.abs(bn.running_mean - 0.1 * x.mean(axis=0)).max() < 1e-12

    def test_inference_independent_of_batch_composition(self, rng):
        bn = BatchNorm(4)
        bn.forward(rng.normal(size=(32, 4)), training=True)
        x = rng.normal(size=(8, 4))
        whole = bn.forward(x, training=False)
        alone = bn.forward(x[3:4], training=False)
        assert np.array_equal(whole[3:4], alone)

    def test_batch_of_one_rejected_in_training(self, rng):
        with pytest.raises(ValueError, match="batch"):
            BatchNorm(4).forward(rng.normal(size=(1, 4)), training=True)

    def test_gradients_match_finite_differences(self, rng):
        bn = BatchNorm(5)
        bn.gain[...] = rng.uniform(0.5, 1.5, 5)
        bn.shift[...] = rng.normal(size=5)
        x = rng.uniform(-1.0, 1.0, (8, 5))
        analytic = layer_backward_grads(bn, x, training=True)
        err = grad_check(lambda: layer_loss(bn, x, training=True),
                         [p for _, p in bn.parameters()], analytic, h=1e-6)
        assert err < 1e-5

    def test_input_gradient_through_batch_stats(self, rng):
        bn = BatchNorm(3)
        bn.gain[...] = [1.2, 0.8, 1.0]
        x = rng.uniform(-1.0, 1.0, (6, 3))
        y = bn.forward(x, training=True)
        gx = bn.backward(2.0 * y)
        num = np.zeros_like(x)
        h = 1e-6
        for idx in np.ndindex(*x.shape):
            xp = x.copy(); xp[idx] += h
            xm = x.copy(); xm[idx] -= h
            num[idx] = (layer_loss(bn, xp, True) - layer_loss(bn, xm, True)) / (2 * h)
        scale = max(np.abs(num).max(), 1e-8)
        assert np.abs(gx - num).max() / scale < 1e-5


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        p = np.array([1.0])
        adam = Adam([p], lr=0.001)
        adam.step([np.array([7.3])])
        # bias-corrected first step: -lr * g / (|g| + eps) ~ -lr * sign(g)
        assert p[0] == pytest.approx(1.0 - 0.001, rel=1e-6)

    def test_zero_gradient_keeps_parameters(self):
        p = np.array([1.0, -2.0])
        adam = Adam([p])
        adam.step([np.zeros(2)])
        assert np.array_equal(p, [1.0, -2.0])
        assert adam.t == 1

    def test_two_steps_match_scalar_recurrence(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        grads = [0.4, -1.7]
        # independent evaluation of the update recurrence
        theta, m, v = 2.0, 0.0, 0.0
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        p = np.array([2.0])
        adam = Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)
        for g in grads:
            adam.step([np.array([g])])
        assert p[0] == pytest.approx(theta, abs=1e-15)

    def test_non_finite_gradient_rejected(self):
        adam = Adam([np.zeros(2)])
        with pytest.raises(FloatingPointError):
            adam.step([np.array([1.0, np.nan])])

    def test_gradient_count_mismatch(self):
        with pytest.raises(ValueError):
            Adam([np.zeros(2)]).step([np.zeros(2), np.zeros(2)])


class TestGradCheck:
    def test_detects_corrupted_backward(self, rng):
        layer = Dense(rng, 4, 3)
        x = rng.uniform(-1.0, 1.0, (4, 4))
        analytic = layer_backward_grads(layer, x)
        analytic[0] = analytic[0] * 1.1  # injected bug
        err = grad_check(lambda: layer_loss(layer, x),
                         [p for _, p in layer.parameters()], analytic)
        assert err > 1e-2

    def test_composite_fragment(self, rng):
        dense = Dense(rng, 6, 4)
        act = Tanh()
        x = rng.uniform(-1.0, 1.0, (5, 6))

        def loss():
            return float((act.forward(dense.forward(x)) ** 2).sum())

        y = act.forward(dense.forward(x))
        dense.backward(act.backward(2.0 * y))
        err = grad_check(loss, [p for _, p in dense.parameters()],
                         dense.gradients(), h=1e-6)
        assert err < 1e-6


def test_seeded_init_is_deterministic():
    a = Dense(np.random.default_rng(42), 8, 8)
    b = Dense(np.random.default_rng(42), 8, 8)
    assert np.array_equal(a.w, b.w)
