"""Finite networks: forward/backward, empirical NTK, centering and training."""

import math

import numpy as np
import pytest

from revntk.activations import Custom, Hermite, Named, linear, relu
from revntk.data import Dataset, circle_inputs, parity_split
from revntk.hermite import HermiteSeries
from revntk.kernels import LayerScales, deep_kernels, relu_preset_scales
from revntk.net import (
    DivergenceError,
    Network,
    NetworkConfig,
    TrainRecord,
    accuracy,
    default_record_interval,
    mse,
    train,
)
from revntk.synthesis import synthesize_activation


def small_net(seed=0, act=None, hidden=(5, 4), scales=None, d=3, out=2):
    act = act or Named("sin", 1.3)
    scales = scales or [LayerScales(1.2, 0.3), LayerScales(0.9, 0.2), LayerScales(1.1, 0.5)]
    return Network(NetworkConfig(d, list(hidden), act, scales[: len(hidden) + 1],
                                 output_dim=out, seed=seed))


def flat(params):
    omegas, betas = params
    return np.concatenate([p.ravel() for p in omegas] + [b.ravel() for b in betas])


def unflat(net, v):
    omegas, betas, i = [], [], 0
    for o in net.omegas:
        omegas.append(v[i:i + o.size].reshape(o.shape))
        i += o.size
    for b in net.betas:
        betas.append(v[i:i + b.size].reshape(b.shape))
        i += b.size
    return omegas, betas


class TestInit:
    def test_seeded_determinism(self):
        a, b = small_net(seed=3), small_net(seed=3)
        for x, y in zip(a.omegas + a.betas, b.omegas + b.betas):
            np.testing.assert_array_equal(x, y)
        c = small_net(seed=4)
        assert not np.array_equal(a.omegas[0], c.omegas[0])

    def test_standard_normal_parameters(self):
        net = Network(NetworkConfig(64, [512], relu(), seed=0))
        w = net.omegas[0]
        assert abs(w.mean()) < 0.01 and abs(w.std() - 1) < 0.01

    def test_zero_bias_scale(self):
        cfg = NetworkConfig(3, [6], Named("sin"), LayerScales(1.0, 0.0), seed=0)
        net = Network(cfg)
        x = np.random.default_rng(0).normal(size=(4, 3))
        before = net.forward(x)[0]
        for b in net.betas:
            b += 100.0
        np.testing.assert_array_equal(net.forward(x)[0], before)

    def test_relu_preset(self):
        s = relu_preset_scales(4)
        assert len(s) == 5
        assert s[0] == LayerScales(math.sqrt(2), 0.1) and s[-1] == LayerScales(1.0, 0.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NetworkConfig(3, [0], relu())
        with pytest.raises(ValueError):
            NetworkConfig(3, [4, 4], relu(), [LayerScales()] * 2)

    def test_parameter_count(self):
        cfg = NetworkConfig(11, [64], relu(), output_dim=1)
        assert cfg.n_params() == 11 * 64 + 64 + 64 * 1 + 1


class TestForward:
    def test_linear_network(self):
        net = Network(NetworkConfig(3, [7], linear(), seed=1))
        x = np.array([[0.5, -1.0, 2.0]])
        expected = net.omegas[1] @ net.omegas[0] @ x[0] / math.sqrt(7 * 3)
        np.testing.assert_allclose(net.forward(x)[0][0], expected, atol=1e-14)

    def test_zero_input_odd_activation(self):
        net = Network(NetworkConfig(4, [9, 9], Named("sin"), LayerScales(1.5, 0.0), seed=2))
        np.testing.assert_array_equal(net.forward(np.zeros((1, 4)))[0], 0.0)

    def test_engineered_activation_is_finite_at_init(self):
        phi = Hermite(synthesize_activation([0, 1, 1], "ntk"))
        net = Network(NetworkConfig(2, [2**14], phi, seed=0))
        X, _ = circle_inputs(64)
        assert np.all(np.isfinite(net.forward(X)[0]))

    def test_wrong_input_dimension(self):
        with pytest.raises(ValueError):
            small_net().forward(np.zeros((1, 4)))

    def test_non_finite_activation_names_layer(self):
        blowup = Custom(lambda z: np.exp(np.exp(np.abs(z) * 50)), lambda z: z)
        net = Network(NetworkConfig(2, [4, 4], blowup, LayerScales(3.0, 0.0), seed=0))
        with pytest.raises(DivergenceError) as err:
            with np.errstate(over="ignore"):
                net.forward(np.array([[5.0, 5.0]]))
        assert err.value.layer == 1


class TestGradient:
    @pytest.mark.parametrize("seed", range(20))
    def test_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        acts = [Named("sin", 1.3), Named("erf", 0.8), Named("cos", 0.7),
                Hermite(HermiteSeries([0.1, 0.9, 0.3, -0.2]))]
        depth = int(rng.integers(1, 4))
        hidden = [int(v) for v in rng.integers(2, 6, size=depth)]
        scales = [LayerScales(float(rng.uniform(0.5, 2)), float(rng.uniform(0, 0.5)))
                  for _ in range(depth + 1)]
        d, out = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        net = Network(NetworkConfig(d, hidden, acts[seed % 4], scales, output_dim=out, seed=seed))
        x = rng.normal(size=(3, d))
        r = rng.normal(size=(3, out))
        g = flat(net.grad(x, r))
        v0 = flat((net.omegas, net.betas))
        h = 1e-4
        fd = np.empty_like(v0)
        for i in range(len(v0)):
            e = np.zeros_like(v0)
            e[i] = h
            fp = np.sum(r * net.forward(x, unflat(net, v0 + e))[0])
            fm = np.sum(r * net.forward(x, unflat(net, v0 - e))[0])
            fd[i] = (fp - fm) / (2 * h)
        rel = np.max(np.abs(g - fd)) / max(np.max(np.abs(fd)), 1e-12)
        assert rel <= 1e-5

    def test_zero_readout_kills_hidden_gradients(self):
        net = small_net()
        net.omegas[-1][:] = 0.0
        d_omegas, d_betas = net.grad(np.ones((2, 3)), np.ones((2, 2)))
        for g in d_omegas[:-1] + d_betas[:-1]:
            np.testing.assert_array_equal(g, 0.0)

    def test_linear_closed_form(self):
        """f = v . W x / sqrt(n d): df/dW = v x^T / sqrt(n d), df/dv = W x / sqrt(n d)."""
        d, n = 3, 5
        net = Network(NetworkConfig(d, [n], linear(), seed=4))
        x = np.array([[0.3, -0.2, 0.9]])
        d_omegas, _ = net.grad(x, np.ones((1, 1)))
        W, v = net.omegas
        np.testing.assert_allclose(d_omegas[0], np.outer(v[0], x[0]) / math.sqrt(n * d),
                                   atol=1e-14)
        np.testing.assert_allclose(d_omegas[1][0], W @ x[0] / math.sqrt(n * d), atol=1e-14)


class TestEmpiricalNTK:
    def test_singleton_is_squared_gradient_norm(self):
        net = small_net(out=1)
        x = np.array([[0.2, -0.4, 1.1]])
        g = flat(net.grad(x, np.ones((1, 1))))
        K = net.empirical_ntk(x)
        assert K.shape == (1, 1)
        assert K[0, 0] == pytest.approx(g @ g, rel=1e-12)

    def test_matches_explicit_jacobian(self):
        net = small_net(out=2)
        X = np.random.default_rng(5).normal(size=(4, 3))
        J = np.array([flat(net.grad(x[None], np.array([[0.0, 1.0]]))) for x in X])
        np.testing.assert_allclose(net.empirical_ntk(X, output=1), J @ J.T, rtol=1e-11)

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetric_psd(self, seed):
        net = Network(NetworkConfig(4, [16, 8], Named("erf"), LayerScales(1.3, 0.2), seed=seed))
        X = np.random.default_rng(seed).normal(size=(10, 4))
        K = net.empirical_ntk(X)
        np.testing.assert_allclose(K, K.T, atol=1e-12)
        assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K)

    def test_memory_guard(self):
        net = Network(NetworkConfig(2, [64], relu(), seed=0))
        with pytest.raises(MemoryError, match="average"):
            net.empirical_ntk(np.ones((100, 2)), budget=1000)

    def test_deep_linear_concentrates(self):
        X, c = circle_inputs(16)
        errs = []
        for width in (64, 4096):
            K = np.mean([Network(NetworkConfig(2, [width, width], linear(), seed=s))
                         .empirical_ntk(X[:1], X)[0] for s in range(4)], axis=0)
            errs.append(np.max(np.abs(K - 3 * c)))
        assert errs[1] < errs[0] and errs[1] < 0.1

    def test_width_convergence_trend(self):
        """Sup error of the 8-seed average against c^2 + c shrinks at every
        width doubling from 2^10 to 2^13.  A single 8-seed estimate fluctuates
        by more than the expected 1/sqrt(2) gain per doubling, so the error is
        averaged over 16 independent 8-seed replicates."""
        phi = Hermite(synthesize_activation([0, 1, 1], "ntk"))
        X, c = circle_inputs(64)
        target = c * c + c
        errs = []
        for width in (2**10, 2**11, 2**12, 2**13):
            sup = []
            for block in range(16):
                K = np.mean([Network(NetworkConfig(2, [width], phi, seed=8 * block + s))
                             .empirical_ntk(X[:1], X)[0] for s in range(8)], axis=0)
                sup.append(np.max(np.abs(K - target)))
            errs.append(np.mean(sup))
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_rotation_invariance(self):
        """Points at angle t and -t from the reference share c; their kernels
        differ only by sampling noise."""
        phi = Hermite(synthesize_activation([0, 1, 1], "ntk"))
        t = np.linspace(0, np.pi, 17)[1:-1]
        X = np.sqrt(2) * np.concatenate([
            [[1.0, 0.0]], np.stack([np.cos(t), np.sin(t)], 1), np.stack([np.cos(t), -np.sin(t)], 1)])
        rows = np.array([Network(NetworkConfig(2, [2048], phi, seed=s)).empirical_ntk(X[:1], X)[0]
                         for s in range(8)])
        up, down = rows[:, 1:len(t) + 1], rows[:, len(t) + 1:]
        diff = (up - down).mean(axis=0)
        sd = rows[:, 1:].std(axis=0, ddof=1).reshape(2, -1).max(axis=0)
        assert np.all(np.abs(diff) <= 3 * sd)

    def test_relu_1hl_against_analytic(self):
        X, c = circle_inputs(9)
        scales = relu_preset_scales(1)
        K = np.mean([Network(NetworkConfig(2, [4096], relu(), scales, seed=s))
                     .empirical_ntk(X[:1], X)[0] for s in range(8)], axis=0)
        target = deep_kernels(relu(), scales, 1, c)[1]
        assert np.max(np.abs(K - target)) / target.max() < 0.02


class TestTraining:
    def linear_data(self, n=32, d=4, seed=0):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d))
        return Dataset(X, X @ rng.normal(size=d), kind="regression")

    def test_linear_monotone_decrease(self):
        data = self.linear_data()
        net = Network(NetworkConfig(4, [32], linear(), seed=0))
        rec = train(net, data, lr=0.05, max_epochs=200)
        assert np.all(np.diff(rec.train_mse) <= 1e-15)
        assert rec.train_mse[-1] < 0.1 * rec.train_mse[0]

    def test_centered_start_is_zero(self):
        data = self.linear_data()
        net = Network(NetworkConfig(4, [16], Named("erf"), seed=1))
        rec = train(net, data, data, max_epochs=0)
        assert rec.train_mse[0] == pytest.approx(mse(np.zeros_like(data.targets), data.targets))
        assert rec.epochs_run == 0 and rec.stop_reason == "max_epochs"

    def test_centered_predictions(self):
        net = Network(NetworkConfig(4, [16], Named("erf"), seed=1))
        X = np.random.default_rng(2).normal(size=(5, 4))
        np.testing.assert_array_equal(net.predict(X, centered=True), 0.0)
        assert not np.allclose(net.predict(X), 0.0)

    def test_initial_snapshot_survives_updates(self):
        data = self.linear_data()
        net = Network(NetworkConfig(4, [8], Named("erf"), seed=1))
        w0 = net.omegas[0].copy()
        train(net, data, max_epochs=3)
        np.testing.assert_array_equal(net.initial[0][0], w0)
        assert not np.array_equal(net.omegas[0], w0)

    def test_stop_on_mse(self):
        data = self.linear_data()
        net = Network(NetworkConfig(4, [64], linear(), seed=0))
        rec = train(net, data, lr=0.1, max_epochs=5000, stop_mse=1e-3)
        assert rec.stop_reason == "train_mse" and rec.train_mse[-1] < 1e-3
        assert rec.epochs_run == rec.epochs[-1]

    def test_divergence_reports_epoch(self):
        data = self.linear_data()
        net = Network(NetworkConfig(4, [64], Hermite(HermiteSeries([0, 1, 0, 1])), seed=0))
        with pytest.raises(DivergenceError) as err:
            with np.errstate(over="ignore", invalid="ignore"):
                train(net, data, lr=50.0, max_epochs=100)
        assert err.value.epoch is not None and err.value.epoch > 0

    def test_lr_must_be_positive(self):
        with pytest.raises(ValueError):
            train(small_net(), self.linear_data(d=3), lr=0.0)

    def test_loss_factor_scales_the_step(self):
        """One step on 0.5 * MSE at lr equals one step on MSE at lr / 2."""
        data = self.linear_data()
        a = Network(NetworkConfig(4, [8], Named("erf"), seed=3))
        b = Network(NetworkConfig(4, [8], Named("erf"), seed=3))
        train(a, data, lr=0.2, max_epochs=1, loss_factor=0.5)
        train(b, data, lr=0.1, max_epochs=1, loss_factor=1.0)
        np.testing.assert_allclose(a.omegas[0], b.omegas[0], atol=1e-15)

    def test_record_interval(self):
        assert default_record_interval(1000) and not default_record_interval(1001)
        assert default_record_interval(1010)
        data = self.linear_data()
        rec = train(Network(NetworkConfig(4, [8], linear(), seed=0)), data, max_epochs=7,
                    record=lambda e: e % 3 == 0)
        assert rec.epochs == [0, 3, 6, 7]

    def test_half_sine_parity_stops_on_low_mse(self):
        """With the plain-MSE gradient the 0.5 sin(6z) net reaches train MSE
        1e-3 well before 10k epochs."""
        tr, te = parity_split(11, 0.5, seed=0)
        net = Network(NetworkConfig(11, [128], Named("sin", 6.0, 0.5), seed=0))
        rec = train(net, tr, te, lr=0.1, max_epochs=10_000, stop_mse=1e-3, loss_factor=1.0,
                    record=lambda e: e % 1000 == 0)
        assert rec.stop_reason == "train_mse" and rec.epochs_run < 10_000
        assert rec.test_acc[-1] == 1.0


class TestMetrics:
    def test_mse_has_no_half(self):
        assert mse(np.array([[1.0], [3.0]]), np.zeros((2, 1))) == pytest.approx(5.0)

    def test_mse_sums_outputs(self):
        assert mse(np.array([[1.0, 1.0]]), np.zeros((1, 2))) == pytest.approx(2.0)

    def test_accuracy_rules(self):
        y = np.array([[0, 1], [1, 0]], dtype=float)
        p = np.array([[0.1, 0.9], [0.2, 0.8]])
        assert accuracy(p, y, "classification") == 0.5
        assert accuracy(np.array([[0.3], [-2.0]]), np.array([[1.0], [-1.0]]), "signed") == 1.0
        assert math.isnan(accuracy(p, y, "regression"))

    def test_record_csv(self):
        rec = TrainRecord([0, 1], [1.0, 0.5], [1.1, 0.6], [0.5, 0.75], [0.4, 0.7], "max_epochs", 1)
        text = rec.to_csv()
        assert text.splitlines()[0] == "epoch,train_mse,test_mse,train_acc,test_acc"
        assert text.splitlines()[2] == "1,0.5,0.6,0.75,0.7"
        assert rec.epochs_to(0.8) == 1 and rec.epochs_to(0.1) is None
