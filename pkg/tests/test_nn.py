"""NN kit: gradient checks against finite differences, Adam, OU noise,
replay buffer, soft updates, Gaussian log density."""

import numpy as np
import pytest

from fluidcc.nn import (AdamState, Mlp, NnError, OuState, ReplayBuffer,
                        adam_step, gaussian_logprob, ou_step, soft_update)


def finite_diff_param_grads(net, x, dy, eps=1e-5):
    """Central finite differences of sum(dy * net(x)) over all parameters."""
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p[i]
            p[i] = orig + eps
            y1, _ = net.forward(x)
            p[i] = orig - eps
            y2, _ = net.forward(x)
            p[i] = orig
            g[i] = ((y1 - y2) * dy).sum() / (2 * eps)
        grads.append(g)
    return grads


def max_rel_err(analytic, numeric):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-8)
        worst = max(worst, (np.abs(a - n) / denom).max())
    return worst


class TestMlpForward:
    def test_zero_params_tanh(self):
        rng = np.random.default_rng(0)
        net = Mlp([3, 4, 2], ["tanh", "tanh"], rng)
        for p in net.params:
            p[:] = 0.0
        y, _ = net.forward(np.array([1.0, -2.0, 3.0]))
        np.testing.assert_array_equal(y, [0.0, 0.0])

    def test_identity_single_layer(self):
        rng = np.random.default_rng(0)
        net = Mlp([2, 2], ["identity"], rng)
        net.params[0][:] = np.eye(2)
        net.params[1][:] = 0.0
        y, _ = net.forward(np.array([0.3, -0.7]))
        np.testing.assert_allclose(y, [0.3, -0.7])

    def test_fixed_two_by_two(self):
        rng = np.random.default_rng(0)
        net = Mlp([2, 2], ["identity"], rng)
        net.params[0][:] = [[1.0, 2.0], [3.0, 4.0]]
        net.params[1][:] = 0.0
        y, _ = net.forward(np.array([1.0, 1.0]))
        np.testing.assert_allclose(y, [3.0, 7.0])

    def test_dim_mismatch(self):
        net = Mlp([3, 2], ["tanh"], np.random.default_rng(0))
        with pytest.raises(NnError):
            net.forward(np.ones(4))

    def test_bad_activation(self):
        with pytest.raises(NnError):
            Mlp([2, 2], ["softplus"], np.random.default_rng(0))


class TestMlpBackward:
    @pytest.mark.parametrize("dims,acts", [
        ([6, 8, 8, 2], ["tanh", "tanh", "identity"]),
        ([6, 10, 7, 2], ["relu", "relu", "sigmoid"]),
        ([5, 9, 1], ["relu", "identity"]),
    ])
    def test_gradcheck_small(self, dims, acts):
        rng = np.random.default_rng(42)
        net = Mlp(dims, acts, rng)
        x = rng.standard_normal((5, dims[0]))
        dy = rng.standard_normal((5, dims[-1]))
        _, cache = net.forward(x)
        grads, _ = net.backward(cache, dy)
        numeric = finite_diff_param_grads(net, x, dy)
        assert max_rel_err(grads, numeric) < 1e-4

    def test_gradcheck_policy_architecture(self):
        """256/256 tanh head, spot-checked parameters (full finite
        differences over ~70k weights would be too slow)."""
        rng = np.random.default_rng(1)
        net = Mlp([12, 256, 256, 4], ["tanh", "tanh", "identity"], rng)
        x = rng.standard_normal((3, 12))
        dy = rng.standard_normal((3, 4))
        _, cache = net.forward(x)
        grads, _ = net.backward(cache, dy)
        eps = 1e-5
        worst = 0.0
        for pi, p in enumerate(net.params):
            flat = p.reshape(-1)
            for j in rng.integers(0, flat.size, size=30):
                orig = flat[j]
                flat[j] = orig + eps
                y1, _ = net.forward(x)
                flat[j] = orig - eps
                y2, _ = net.forward(x)
                flat[j] = orig
                num = ((y1 - y2) * dy).sum() / (2 * eps)
                ana = grads[pi].reshape(-1)[j]
                worst = max(worst, abs(num - ana) /
                            max(abs(num) + abs(ana), 1e-8))
        assert worst < 1e-4

    def test_gradcheck_ddpg_architecture(self):
        rng = np.random.default_rng(2)
        net = Mlp([10, 400, 300, 1], ["relu", "relu", "identity"], rng,
                  final_init_scale=3e-3)
        x = rng.standard_normal((4, 10))
        dy = rng.standard_normal((4, 1))
        _, cache = net.forward(x)
        grads, _ = net.backward(cache, dy)
        eps = 1e-5
        worst = 0.0
        for pi, p in enumerate(net.params):
            flat = p.reshape(-1)
            for j in rng.integers(0, flat.size, size=30):
                orig = flat[j]
                flat[j] = orig + eps
                y1, _ = net.forward(x)
                flat[j] = orig - eps
                y2, _ = net.forward(x)
                flat[j] = orig
                num = ((y1 - y2) * dy).sum() / (2 * eps)
                ana = grads[pi].reshape(-1)[j]
                worst = max(worst, abs(num - ana) /
                            max(abs(num) + abs(ana), 1e-8))
        assert worst < 1e-4

    def test_input_gradient(self):
        rng = np.random.default_rng(3)
        net = Mlp([4, 6, 2], ["tanh", "identity"], rng)
        x = rng.standard_normal(4)
        dy = rng.standard_normal(2)
        _, cache = net.forward(x)
        _, dx = net.backward(cache, dy)
        eps = 1e-6
        num = np.zeros(4)
        for i in range(4):
            orig = x[i]
            x[i] = orig + eps
            y1, _ = net.forward(x)
            x[i] = orig - eps
            y2, _ = net.forward(x)
            x[i] = orig
            num[i] = ((y1 - y2) * dy).sum() / (2 * eps)
        np.testing.assert_allclose(dx, num, rtol=1e-5, atol=1e-8)

    def test_zero_upstream_zero_grads(self):
        rng = np.random.default_rng(4)
        net = Mlp([3, 5, 2], ["relu", "identity"], rng)
        x = rng.standard_normal((2, 3))
        _, cache = net.forward(x)
        grads, dx = net.backward(cache, np.zeros((2, 2)))
        assert all((g == 0.0).all() for g in grads)
        assert (dx == 0.0).all()

    def test_mismatched_cache(self):
        rng = np.random.default_rng(5)
        a = Mlp([3, 5, 2], ["tanh", "identity"], rng)
        b = Mlp([3, 4, 4, 2], ["tanh", "tanh", "identity"], rng)
        _, cache = a.forward(np.ones(3))
        with pytest.raises(NnError):
            b.backward(cache, np.ones(2))


class TestAdam:
    def test_first_step_magnitude(self):
        p = [np.array([0.5])]
        adam_step(p, [np.array([0.1])], AdamState(), 1e-3)
        assert p[0][0] - 0.5 == pytest.approx(-9.999e-4, rel=1e-3)

    def test_zero_gradient_no_move(self):
        p = [np.array([1.0, -2.0])]
        adam_step(p, [np.zeros(2)], AdamState(), 1e-3)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_deterministic(self):
        def go():
            p = [np.array([0.2, 0.8])]
            s = AdamState()
            for i in range(10):
                adam_step(p, [np.array([0.1 * i, -0.05])], s, 1e-3)
            return p[0].copy()

        np.testing.assert_array_equal(go(), go())

    def test_weight_decay_only_on_matrices(self):
        W = np.full((2, 2), 1.0)
        b = np.full(2, 1.0)
        s = AdamState()
        adam_step([W, b], [np.zeros((2, 2)), np.zeros(2)], s, 1e-3,
                  weight_decay=1e-2)
        assert (W < 1.0).all()  # decay pulled weights down
        np.testing.assert_array_equal(b, [1.0, 1.0])

    def test_length_mismatch(self):
        with pytest.raises(NnError):
            adam_step([np.zeros(2)], [], AdamState(), 1e-3)


class TestOuNoise:
    def test_fixed_point(self):
        st = OuState(dim=2)
        out = ou_step(st, np.zeros(2))
        np.testing.assert_array_equal(out, [0.0, 0.0])

    def test_drift_from_one(self):
        st = OuState(dim=1, x=np.array([1.0]))
        assert ou_step(st, np.zeros(1))[0] == pytest.approx(0.85)

    def test_stationary_variance(self):
        # AR(1): Var = sigma^2 / (1 - (1-theta)^2) ~ 0.14415
        st = OuState(dim=1)
        rng = np.random.default_rng(11)
        xs = np.empty(200_000)
        for i in range(len(xs)):
            xs[i] = ou_step(st, rng.standard_normal(1))[0]
        target = 0.2 ** 2 / (1.0 - 0.85 ** 2)
        assert np.var(xs[2000:]) == pytest.approx(target, rel=0.05)

    def test_scale_applied(self):
        st = OuState(dim=1, scale=0.5, x=np.array([1.0]))
        assert ou_step(st, np.zeros(1))[0] == pytest.approx(0.425)


class TestSoftUpdate:
    def test_basic(self):
        t = [np.zeros(3)]
        s = [np.ones(3)]
        soft_update(t, s, 1e-3)
        np.testing.assert_allclose(t[0], 1e-3)

    def test_tau_one_copies(self):
        t = [np.zeros(3)]
        s = [np.full(3, 0.7)]
        soft_update(t, s, 1.0)
        np.testing.assert_allclose(t[0], 0.7)

    def test_fixed_point(self):
        t = [np.full(3, 0.4)]
        soft_update(t, [np.full(3, 0.4)], 0.3)
        np.testing.assert_allclose(t[0], 0.4)

    def test_monotone_convergence(self):
        rng = np.random.default_rng(8)
        t = [rng.standard_normal((4, 4))]
        s = [rng.standard_normal((4, 4))]
        dists = []
        for _ in range(50):
            soft_update(t, s, 1e-2)
            dists.append(np.abs(t[0] - s[0]).max())
        assert all(a > b for a, b in zip(dists, dists[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(NnError):
            soft_update([np.zeros(2)], [np.zeros(3)], 0.5)


class TestGaussianLogprob:
    def test_standard_normal_peak(self):
        lp = gaussian_logprob(np.zeros(1), np.zeros(1), np.zeros(1))
        assert lp == pytest.approx(-0.9189385)

    def test_doubling_sigma(self):
        lp1 = gaussian_logprob(np.zeros(3), np.zeros(3), np.zeros(3))
        lp2 = gaussian_logprob(np.zeros(3), np.full(3, np.log(2.0)),
                               np.zeros(3))
        assert lp1 - lp2 == pytest.approx(3 * np.log(2.0))

    def test_batched(self):
        mean = np.zeros((5, 2))
        lp = gaussian_logprob(mean, np.zeros(2), mean)
        assert lp.shape == (5,)

    def test_shape_mismatch(self):
        with pytest.raises(NnError):
            gaussian_logprob(np.zeros(2), np.zeros(2), np.zeros(3))


class TestReplayBuffer:
    def test_eviction_order(self):
        buf = ReplayBuffer(capacity=4, state_dim=1, action_dim=1)
        for i in range(6):
            buf.add([float(i)], [0.0], float(i), [0.0], False)
        assert buf.size == 4
        # Oldest two entries (0, 1) were overwritten.
        assert set(buf.r.tolist()) == {2.0, 3.0, 4.0, 5.0}

    def test_uniform_sampling_bounds(self):
        buf = ReplayBuffer(capacity=10, state_dim=2, action_dim=1)
        for i in range(5):
            buf.add([i, i], [0.5], 1.0, [i, i], False)
        rng = np.random.default_rng(0)
        s, a, r, s2, done = buf.sample(rng, 64)
        assert s.shape == (64, 2)
        assert set(s[:, 0].tolist()) <= {0.0, 1.0, 2.0, 3.0, 4.0}
