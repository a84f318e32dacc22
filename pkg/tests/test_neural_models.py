import math

import numpy as np
import pytest

from oracles import finite_diff, max_rel_err
from tendonml.errors import MissingOrderingMetadata
from tendonml.neural_models import (build_sequences, fit_bnn, fit_rnn, gaussian_kl,
                                    bnn_loss_and_grad, grid_from_meta, init_dense,
                                    net_forward, net_loss_and_grad, rnn_forward, rnn_init,
                                    rnn_loss_and_grad, scheduled_lr)
from tendonml.numerics import RngStream, scaler_fit


def _small_net(seed=0):
    return init_dense([2, 4, 3], RngStream(seed, 7))


class TestDenseNet:
    def test_zero_net_loss(self, rng):
        params = [np.zeros_like(p) for p in _small_net()]
        X, Y = rng.standard_normal((10, 2)), rng.standard_normal((10, 3))
        loss, _ = net_loss_and_grad(params, X, Y)
        assert abs(loss - np.mean((Y ** 2).sum(1)) / 2) < 1e-12

    def test_gradient_matches_finite_differences(self, rng):
        params = _small_net()
        for p in params[1::2]:
            p += 0.1 * rng.standard_normal(p.shape)
        X, Y = rng.standard_normal((6, 2)), rng.standard_normal((6, 3))
        _, grads = net_loss_and_grad(params, X, Y)
        num = finite_diff(lambda: net_loss_and_grad(params, X, Y)[0], params)
        assert max_rel_err(grads, num) < 1e-4

    def test_batch_permutation_invariance(self, rng):
        params = _small_net()
        X, Y = rng.standard_normal((12, 2)), rng.standard_normal((12, 3))
        p = rng.permutation(12)
        la, ga = net_loss_and_grad(params, X, Y)
        lb, gb = net_loss_and_grad(params, X[p], Y[p])
        assert abs(la - lb) < 1e-12
        assert max(np.max(np.abs(a - b)) for a, b in zip(ga, gb)) < 1e-12

    def test_output_shape(self, rng):
        out, acts = net_forward(_small_net(), rng.standard_normal((5, 2)))
        assert out.shape == (5, 3) and len(acts) == 2


class TestSchedule:
    def test_cosine_endpoints(self):
        assert scheduled_lr(0.1, 1, 100, "cosine") == pytest.approx(0.1)
        assert scheduled_lr(0.1, 51, 100, "cosine") == pytest.approx(0.05)
        assert 0 < scheduled_lr(0.1, 100, 100, "cosine") < 1e-4

    def test_constant_and_unknown(self):
        assert scheduled_lr(0.1, 40, 100, "constant") == 0.1
        with pytest.raises(ValueError):
            scheduled_lr(0.1, 1, 10, "step")


class TestBnn:
    def test_kl_examples(self):
        assert gaussian_kl(np.zeros(4), np.zeros(4)) == pytest.approx(0.0, abs=1e-12)
        assert gaussian_kl([2.0], [0.0]) == pytest.approx(2.0)
        assert gaussian_kl([0.0], [math.log(2.0)], prior_std=2.0) == pytest.approx(0.0, abs=1e-12)

    def test_elbo_gradient_fixed_noise(self, rng):
        mu = _small_net(1)
        log_std = [np.full_like(m, -1.0) + 0.1 * rng.standard_normal(m.shape) for m in mu]
        eps = [rng.standard_normal(m.shape) for m in mu]
        X, Y = rng.standard_normal((5, 2)), rng.standard_normal((5, 3))
        _, g_mu, g_rho = bnn_loss_and_grad(mu, log_std, eps, X, Y, 0.1, 1.5)

        def f():
            return bnn_loss_and_grad(mu, log_std, eps, X, Y, 0.1, 1.5)[0]
        num = finite_diff(f, mu + log_std)
        assert max_rel_err(g_mu + g_rho, num) < 1e-4

    def test_training(self, small_data):
        tr, va = small_data
        xs, ys = scaler_fit(tr.X), scaler_fit(tr.Y)
        kw = dict(y_scale=ys.stds, epochs=100, kl_weight=1e-6, seed=3)
        m = fit_bnn(xs.transform(tr.X), ys.transform(tr.Y), xs.transform(va.X),
                    ys.transform(va.Y), **kw)
        assert len(m.curve) == 100 and [c.epoch for c in m.curve] == list(range(1, 101))
        assert m.curve[-1].train_mae < m.curve[0].train_mae
        _, std = m.predict_with_std(xs.transform(va.X))
        assert np.all(std > 0)
        again = fit_bnn(xs.transform(tr.X), ys.transform(tr.Y), xs.transform(va.X),
                        ys.transform(va.Y), **kw)
        assert again.curve == m.curve
        np.testing.assert_array_equal(again.predict(xs.transform(va.X)),
                                      m.predict(xs.transform(va.X)))


class TestRnn:
    def test_bptt_matches_finite_differences(self, rng):
        params = rnn_init(2, 4, 3, RngStream(2, 0))
        params[2] += 0.1 * rng.standard_normal(4)
        params[4] += 0.1 * rng.standard_normal(3)
        Xs = rng.standard_normal((2, 3, 2))
        Ys = rng.standard_normal((2, 3, 3))
        mask = np.array([[True, True, True], [True, True, False]])
        _, grads = rnn_loss_and_grad(params, Xs, Ys, mask)
        num = finite_diff(lambda: rnn_loss_and_grad(params, Xs, Ys, mask)[0], params)
        assert max_rel_err(grads, num) < 1e-4

    def test_no_recurrence_equals_feedforward(self, rng):
        Wx, Wh, bh, Wo, bo = rnn_init(2, 5, 3, RngStream(4, 0))
        Wh[:] = 0.0
        Xs = rng.standard_normal((3, 4, 2))
        out, _ = rnn_forward([Wx, Wh, bh, Wo, bo], Xs)
        ff, _ = net_forward([Wx, bh, Wo, bo], Xs.reshape(-1, 2))
        assert np.max(np.abs(out.reshape(-1, 3) - ff)) < 1e-10

    def test_padding_does_not_leak(self, rng):
        params = rnn_init(2, 4, 3, RngStream(5, 0))
        Xs = rng.standard_normal((1, 3, 2))
        Ys = rng.standard_normal((1, 3, 3))
        padded_x = np.concatenate([Xs, 100 * np.ones((1, 2, 2))], axis=1)
        padded_y = np.concatenate([Ys, np.ones((1, 2, 3))], axis=1)
        mask = np.array([[True] * 3 + [False] * 2])
        la, ga = rnn_loss_and_grad(params, Xs, Ys, np.ones((1, 3), dtype=bool))
        lb, gb = rnn_loss_and_grad(params, padded_x, padded_y, mask)
        assert abs(la - lb) < 1e-12
        assert max(np.max(np.abs(a - b)) for a, b in zip(ga, gb)) < 1e-12

    def test_sequences_follow_beta_sweep(self, small_data):
        tr, _ = small_data
        grid = grid_from_meta(tr.meta)
        seqs = build_sequences(tr.X, tr.replicates, grid, bptt_len=4)
        assert sorted(np.concatenate(seqs).tolist()) == list(range(len(tr)))
        for s in seqs:
            assert len(s) <= 4
            assert np.ptp(np.rint(tr.X[s, 0] / 30)) == 0
            assert len(set(tr.replicates[s])) == 1
            assert np.all(np.diff(tr.X[s, 1]) > 0)

    def test_missing_metadata(self, small_data):
        tr, _ = small_data
        xs = scaler_fit(tr.X)
        with pytest.raises(MissingOrderingMetadata):
            fit_rnn(tr.X, xs.transform(tr.X), tr.Y, tr.replicates, {}, x_scaler=xs, epochs=1)

    def test_training(self, small_data):
        tr, va = small_data
        xs, ys = scaler_fit(tr.X), scaler_fit(tr.Y)
        kw = dict(x_scaler=xs, y_scale=ys.stds, epochs=100, seed=2)
        args = (tr.X, xs.transform(tr.X), ys.transform(tr.Y), tr.replicates, tr.meta, va.X,
                ys.transform(va.Y))
        m = fit_rnn(*args, **kw)
        assert len(m.curve) == 100
        assert m.curve[-1].train_mae < m.curve[0].train_mae
        assert all(c.val_mae is not None for c in m.curve)
        assert fit_rnn(*args, **kw).curve == m.curve
        assert m.predict_raw(np.zeros((0, 2))).shape == (0, 3)
