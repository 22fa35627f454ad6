import numpy as np
import pytest

import snakerl.autograd as ag
from snakerl.autograd import Tensor, gradient
from snakerl.errors import ContractError, DimensionError, DomainError, FormatError
from snakerl.nn import (
    GaussianPolicyHead,
    Mlp,
    adam_init,
    adam_step,
    expectile_loss,
    load_checkpoint,
    params_checksum,
    save_checkpoint,
    squash_action,
    unsquash_action,
)


def finite_difference(loss_fn, params, h=1e-5):
    """Central-difference gradient over every coordinate of every param."""
    grads = []
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(loss_fn().data)
            flat[i] = orig - h
            lo = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * h)
        grads.append(g)
    return grads


def assert_close_to_fd(analytic, numeric):
    for a, n in zip(analytic, numeric):
        err = np.abs(a - n)
        tol = np.maximum(1e-4, 1e-3 * np.abs(n))
        assert np.all(err <= tol), f"gradient mismatch: max err {err.max()}"


class TestAutograd:
    def test_quadratic_gradient_is_identity(self):
        p = Tensor(np.array([1.5, -2.0, 0.25]), requires_grad=True)
        (g,) = gradient(lambda: ag.tsum(p * p) * 0.5, [p])
        assert np.allclose(g, p.data, atol=1e-12)

    def test_constant_loss_zero_gradient(self):
        p = Tensor(np.ones(4), requires_grad=True)
        (g,) = gradient(lambda: Tensor(3.0), [p])
        assert np.all(g == 0.0)

    def test_two_layer_net_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        net = Mlp([3, 8, 2], rng)
        x = rng.normal(size=(4, 3))
        y = rng.normal(size=(4, 2))

        def loss():
            d = ag.sub(net.forward(x), y)
            return ag.tmean(ag.power(d, 2.0))

        analytic = gradient(loss, net.params())
        numeric = finite_difference(loss, net.params())
        assert_close_to_fd(analytic, numeric)

    def test_composite_ops_match_finite_differences(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)

        def loss():
            z = ag.tanh(a) + ag.exp(b * 0.3)
            w = ag.minimum(z, ag.log(ag.exp(a) + 1.0))
            return ag.tmean(ag.power(ag.clip(w, -0.8, 0.8), 2.0))

        analytic = gradient(loss, [a, b])
        numeric = finite_difference(loss, [a, b])
        assert_close_to_fd(analytic, numeric)

    def test_concat_and_matmul_gradients(self):
        rng = np.random.default_rng(2)
        a = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        w = Tensor(rng.normal(size=(5, 1)), requires_grad=True)

        def loss():
            return ag.tmean(ag.power(ag.matmul(ag.concat(a, b, axis=1), w), 2.0))

        analytic = gradient(loss, [a, b, w])
        numeric = finite_difference(loss, [a, b, w])
        assert_close_to_fd(analytic, numeric)

    def test_backward_requires_scalar(self):
        p = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            (p * 2.0).backward()

    def test_gradient_requires_tensor_loss(self):
        p = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            gradient(lambda: 3.0, [p])


class TestMlp:
    def test_zero_final_layer_outputs_bias(self):
        rng = np.random.default_rng(3)
        net = Mlp([4, 6, 2], rng)
        net.weights[-1].data[:] = 0.0
        net.biases[-1].data[:] = 0.0
        out = net.forward_numpy(rng.normal(size=(5, 4)))
        assert np.all(out == 0.0)

    def test_identity_single_layer(self):
        net = Mlp([3, 3], np.random.default_rng(4))
        net.weights[0].data = np.eye(3)
        net.biases[0].data[:] = 0.0
        x = np.random.default_rng(5).normal(size=(7, 3))
        assert np.allclose(net.forward_numpy(x), x, atol=1e-15)

    def test_deterministic_under_seed(self):
        x = np.random.default_rng(6).normal(size=(2, 4))
        outs = []
        for _ in range(2):
            net = Mlp([4, 8, 8, 1], np.random.default_rng(42))
            outs.append(net.forward_numpy(x))
        assert np.all(outs[0] == outs[1])

    def test_graph_and_numpy_paths_agree(self):
        rng = np.random.default_rng(7)
        net = Mlp([5, 16, 3], rng)
        x = rng.normal(size=(9, 5))
        assert np.allclose(net.forward(x).data, net.forward_numpy(x), atol=1e-15)

    def test_dimension_mismatch(self):
        net = Mlp([4, 2], np.random.default_rng(8))
        with pytest.raises(DimensionError):
            net.forward_numpy(np.zeros((3, 5)))


class TestExpectileLoss:
    def test_symmetric_case(self):
        assert expectile_loss(2.0, 0.5) == pytest.approx(2.0, abs=1e-12)

    def test_asymmetric_values(self):
        assert expectile_loss(1.0, 0.7) == pytest.approx(0.7, abs=1e-12)
        assert expectile_loss(-1.0, 0.7) == pytest.approx(0.3, abs=1e-12)

    def test_zero_residual(self):
        for tau in (0.1, 0.5, 0.9):
            assert expectile_loss(0.0, tau) == 0.0

    def test_complementary_weights_sum_to_square(self):
        # |tau - 1[u<0]| + |(1-tau) - 1[u<0]| = 1, so the two losses on the
        # same residual at complementary asymmetry recover u^2.
        rng = np.random.default_rng(9)
        u = rng.normal(size=100) * 3
        for tau in (0.1, 0.3, 0.7):
            total = expectile_loss(u, tau) + expectile_loss(u, 1 - tau)
            assert np.allclose(total, u * u, atol=1e-12)

    def test_tau_domain(self):
        with pytest.raises(DomainError):
            expectile_loss(1.0, 0.0)
        with pytest.raises(DomainError):
            expectile_loss(1.0, 1.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        u = Tensor(rng.normal(size=16), requires_grad=True)

        def loss():
            return ag.tmean(expectile_loss(u, 0.3))

        analytic = gradient(loss, [u])
        numeric = finite_difference(loss, [u])
        assert_close_to_fd(analytic, numeric)


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        state = adam_init([p], lr=1e-2)
        adam_step(state, [p], [np.zeros(2)])
        assert np.all(p.data == np.array([1.0, 2.0]))

    def test_moves_against_gradient_sign(self):
        p = Tensor(np.array([0.0]), requires_grad=True)
        state = adam_init([p], lr=1e-2)
        for _ in range(50):
            adam_step(state, [p], [np.array([2.5])])
        assert p.data[0] < 0.0

    def test_quadratic_bowl_converges(self):
        rng = np.random.default_rng(11)
        target = rng.normal(size=6)
        p = Tensor(np.zeros(6), requires_grad=True)
        state = adam_init([p], lr=1e-2)
        initial = float(((p.data - target) ** 2).sum())
        for _ in range(500):
            adam_step(state, [p], [2.0 * (p.data - target)])
        final = float(((p.data - target) ** 2).sum())
        assert final < 1e-4 * initial

    def test_shape_mismatch(self):
        p = Tensor(np.zeros(3), requires_grad=True)
        state = adam_init([p], lr=1e-3)
        with pytest.raises(DimensionError):
            adam_step(state, [p], [np.zeros(4)])


class TestGaussianPolicyHead:
    def make_head(self, seed=12):
        return GaussianPolicyHead(3, 5, (16,), np.random.default_rng(seed))

    def test_log_prob_at_mode(self):
        head = self.make_head()
        obs = np.random.default_rng(13).normal(size=(4, 3))
        mode = head.mean_net.forward_numpy(obs)
        lp = head.log_prob(obs, mode).data
        expected = -np.sum(head.log_std.data) - 2.5 * np.log(2 * np.pi)
        assert np.allclose(lp, expected, atol=1e-12)

    def test_log_prob_decreases_away_from_mode(self):
        head = self.make_head()
        obs = np.zeros((1, 3))
        mode = head.mean_net.forward_numpy(obs)
        lp0 = head.log_prob(obs, mode).data[0]
        for scale in (0.5, 1.0, 2.0):
            lp = head.log_prob(obs, mode + scale).data[0]
            assert lp < lp0

    def test_against_independent_density(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        head = self.make_head()
        rng = np.random.default_rng(14)
        head.log_std.data = rng.uniform(-1, 0.5, 5)
        obs = rng.normal(size=(6, 3))
        acts = rng.normal(size=(6, 5))
        mean = head.mean_net.forward_numpy(obs)
        expected = scipy_stats.norm.logpdf(
            acts, loc=mean, scale=np.exp(head.log_std.data)
        ).sum(axis=1)
        assert np.allclose(head.log_prob(obs, acts).data, expected, atol=1e-9)

    def test_log_prob_gradients(self):
        head = self.make_head()
        rng = np.random.default_rng(15)
        obs = rng.normal(size=(4, 3))
        acts = rng.normal(size=(4, 5))

        def loss():
            return ag.tmean(head.log_prob(obs, acts)) * -1.0

        analytic = gradient(loss, head.params())
        numeric = finite_difference(loss, head.params())
        assert_close_to_fd(analytic, numeric)

    def test_dimension_check(self):
        head = self.make_head()
        with pytest.raises(DimensionError):
            head.log_prob(np.zeros((2, 3)), np.zeros((2, 4)))


class TestSquash:
    def test_round_trip(self):
        rng = np.random.default_rng(16)
        z = rng.normal(size=(50, 5)) * 2
        assert np.allclose(unsquash_action(squash_action(z)), z, atol=1e-9)

    def test_range(self):
        z = np.random.default_rng(17).normal(size=(200, 5)) * 10
        a = squash_action(z)
        assert np.all(a[:, :4] >= 0) and np.all(a[:, :4] <= 1)
        assert np.all(a[:, 4] >= -1) and np.all(a[:, 4] <= 1)

    def test_boundary_actions_unsquash_finite(self):
        a = np.array([[0.0, 1.0, 0.5, 0.5, -1.0]])
        assert np.all(np.isfinite(unsquash_action(a)))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(18)
        arrays = {"w0": rng.normal(size=(3, 4)), "b0": rng.normal(size=4)}
        meta = {"layer_sizes": [3, 4], "algorithm": "test"}
        path = tmp_path / "params.snkc"
        save_checkpoint(path, arrays, meta)
        loaded, loaded_meta = load_checkpoint(path)
        assert loaded_meta == meta
        for k in arrays:
            assert np.all(loaded[k] == arrays[k])

    def test_truncated_file_raises(self, tmp_path):
        path = tmp_path / "params.snkc"
        save_checkpoint(path, {"w": np.ones((4, 4))}, {})
        blob = path.read_bytes()
        path.write_bytes(blob[:-9])
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_corrupted_payload_raises(self, tmp_path):
        path = tmp_path / "params.snkc"
        save_checkpoint(path, {"w": np.ones(8)}, {})
        blob = bytearray(path.read_bytes())
        blob[-5] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_wrong_magic_raises(self, tmp_path):
        path = tmp_path / "params.snkc"
        path.write_bytes(b"JUNKxxxxyyyyzzzz")
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_checksum_reflects_params(self):
        a = np.ones(5)
        assert params_checksum([a]) == params_checksum([np.ones(5)])
        assert params_checksum([a]) != params_checksum([np.zeros(5)])
