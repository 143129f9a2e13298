"""Layer algebra, initialization statistics, parameter counts and checkpoints."""

import numpy as np
import pytest

from cheybsde.nn.autodiff import Tensor
from cheybsde.nn.layers import (
    ArchSpec,
    DenseLayer,
    MpoLayer,
    Network,
    grad_input,
    grad_params,
    init_network,
    load_network,
    mpo_contract,
    mpo_from_dense,
    param_count,
    save_network,
)
from cheybsde.simulate import RngSpec


def kron_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Brute-force oracle: sum of Kronecker products over the bond index."""
    return sum(np.kron(a[:, alpha, :], b[:, alpha, :]) for alpha in range(a.shape[1]))


class TestMpoContract:
    def test_identity_cores_give_identity(self):
        d = 3
        layer = MpoLayer(np.eye(d)[:, None, :], np.eye(d)[:, None, :], np.zeros(d * d))
        np.testing.assert_array_equal(mpo_contract(layer), np.eye(d * d))

    def test_chi_one_explicit_kron(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])[:, None, :]
        b = np.eye(2)[:, None, :]
        layer = MpoLayer(a, b, np.zeros(4))
        expected = np.array([
            [1.0, 0.0, 2.0, 0.0],
            [0.0, 1.0, 0.0, 2.0],
            [3.0, 0.0, 4.0, 0.0],
            [0.0, 3.0, 0.0, 4.0],
        ])
        np.testing.assert_array_equal(mpo_contract(layer), expected)

    @pytest.mark.parametrize("d,chi", [(2, 1), (2, 2), (3, 2), (3, 4), (4, 3), (4, 4)])
    def test_matches_kron_oracle(self, d, chi):
        rng = np.random.default_rng(d * 10 + chi)
        a = rng.integers(-5, 6, size=(d, chi, d)).astype(float)
        b = rng.integers(-5, 6, size=(d, chi, d)).astype(float)
        layer = MpoLayer(a, b, np.zeros(d * d))
        np.testing.assert_allclose(mpo_contract(layer), kron_sum(a, b), atol=1e-12)

    def test_parameter_count_formula(self):
        d, chi = 8, 2
        rng = np.random.default_rng(0)
        layer = MpoLayer(
            rng.standard_normal((d, chi, d)), rng.standard_normal((d, chi, d)), np.zeros(d * d)
        )
        assert layer.param_count() == 2 * chi * d**2 + d**2

    def test_parameter_saving_vs_dense(self):
        # chi < d^2/2 saves exactly d^4 - 2 chi d^2 weights (biases equal).
        d = 4
        for chi in (1, 2, 7):
            rng = np.random.default_rng(chi)
            mpo = MpoLayer(
                rng.standard_normal((d, chi, d)), rng.standard_normal((d, chi, d)), np.zeros(d * d)
            )
            dense = DenseLayer(rng.standard_normal((d * d, d * d)), np.zeros(d * d))
            saving = dense.param_count() - mpo.param_count()
            assert saving == d**4 - 2 * chi * d**2
            if chi < d**2 / 2:
                assert mpo.param_count() < dense.param_count()


class TestMpoFromDense:
    def test_full_bond_dimension_reproduces_target(self):
        rng = np.random.default_rng(5)
        target = rng.standard_normal((4, 4))
        a, b = mpo_from_dense(target, chi=4)
        np.testing.assert_allclose(kron_sum(a, b), target, atol=1e-12)
        assert np.linalg.norm(kron_sum(a, b) - target) < 1e-6

    def test_truncated_fit_is_best_frobenius(self):
        rng = np.random.default_rng(6)
        exact_a = rng.standard_normal((2, 2, 2))
        exact_b = rng.standard_normal((2, 2, 2))
        target = kron_sum(exact_a, exact_b)
        a, b = mpo_from_dense(target, chi=2)
        np.testing.assert_allclose(kron_sum(a, b), target, atol=1e-10)


class TestForwardEquivalence:
    @pytest.mark.parametrize("activation", ["tanh", "identity"])
    def test_mpo_layer_equals_contracted_dense(self, activation):
        rng = np.random.default_rng(7)
        d, chi = 4, 3
        a = rng.standard_normal((d, chi, d))
        b = rng.standard_normal((d, chi, d))
        bias = rng.standard_normal(d * d)
        mpo = Network([MpoLayer(a, b, bias, activation)])
        dense = Network([DenseLayer(kron_sum(a, b), bias, activation)])
        x = rng.standard_normal((10, d * d))
        np.testing.assert_allclose(mpo.predict(x), dense.predict(x), atol=1e-12)
        np.testing.assert_allclose(
            mpo.forward(x).data, dense.forward(x).data, atol=1e-14
        )

    def test_predict_matches_taped_forward(self):
        arch = ArchSpec(kind="tnn", hidden_layers=3, width=16, chi=2, input_width=7)
        net = init_network(arch, RngSpec(1))
        x = np.random.default_rng(2).standard_normal((6, 7))
        np.testing.assert_array_equal(net.predict(x), net.forward(x).data)


class TestNetworkForward:
    def test_zero_network_outputs_zero(self):
        net = Network([
            DenseLayer(np.zeros((8, 3)), np.zeros(8), "tanh"),
            DenseLayer(np.zeros((1, 8)), np.zeros(1), "identity"),
        ])
        x = np.random.default_rng(0).standard_normal((5, 3))
        np.testing.assert_array_equal(net.predict(x), np.zeros((5, 1)))

    def test_identity_layer_passes_input_through(self):
        net = Network([DenseLayer(np.eye(4), np.zeros(4), "identity")])
        x = np.random.default_rng(1).standard_normal((3, 4))
        np.testing.assert_allclose(net.predict(x), x, atol=1e-15)

    def test_width_mismatch_rejected(self):
        net = Network([DenseLayer(np.zeros((2, 3)), np.zeros(2), "identity")])
        with pytest.raises(ValueError):
            net.forward(np.zeros((1, 4)))
        with pytest.raises(ValueError):
            Network([
                DenseLayer(np.zeros((2, 3)), np.zeros(2)),
                DenseLayer(np.zeros((1, 5)), np.zeros(1)),
            ])


class TestGradients:
    """Central finite-difference checks at the layer and network level."""

    H = 1e-5
    RTOL = 1e-5

    def _check_param_grads(self, net: Network, x: np.ndarray):
        rng = np.random.default_rng(11)
        target = rng.standard_normal((x.shape[0], 1))

        def loss_value() -> float:
            res = net.predict(x) - target
            return float((res * res).sum())

        res = net.forward(x) - Tensor(target)
        grads = grad_params(net, (res * res).sum())
        worst = 0.0
        for p, g in zip(net.params(), grads):
            flat = p.data.reshape(-1)
            gflat = g.reshape(-1)
            idx = rng.choice(flat.size, size=min(12, flat.size), replace=False)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + self.H
                up = loss_value()
                flat[i] = orig - self.H
                down = loss_value()
                flat[i] = orig
                fd = (up - down) / (2.0 * self.H)
                denom = max(abs(fd), abs(gflat[i]), 1e-8)
                worst = max(worst, abs(fd - gflat[i]) / denom)
        assert worst < self.RTOL

    @pytest.mark.parametrize("kind,layers", [("dense", 2), ("tnn", 2), ("tnn", 4)])
    def test_param_grads_all_layer_types(self, kind, layers):
        arch = ArchSpec(kind=kind, hidden_layers=layers, width=16, chi=2, input_width=7)
        net = init_network(arch, RngSpec(3))
        x = np.random.default_rng(4).standard_normal((8, 7)) * 0.3
        self._check_param_grads(net, x)

    def test_linear_least_squares_hand_formula(self):
        # loss = 0.5 ||W x^T||^2 on a single linear layer: dL/dW = (W x^T) x
        rng = np.random.default_rng(5)
        w0 = rng.standard_normal((1, 4))
        x = rng.standard_normal((6, 4))
        net = Network([DenseLayer(w0, np.zeros(1), "identity")])
        out = net.forward(x)
        grads = grad_params(net, (out * out).sum() * 0.5)
        expected = (x @ w0.T).T @ x
        np.testing.assert_allclose(grads[0], expected, rtol=1e-12)

    def test_input_grads_match_finite_differences(self):
        arch = ArchSpec(kind="tnn", hidden_layers=2, width=16, chi=2, input_width=7)
        net = init_network(arch, RngSpec(6))
        rng = np.random.default_rng(7)
        x = rng.standard_normal((5, 7)) * 0.4
        gx = grad_input(net, x)
        worst = 0.0
        for j in range(x.shape[0]):
            for i in range(x.shape[1]):
                up = x.copy()
                up[j, i] += self.H
                down = x.copy()
                down[j, i] -= self.H
                fd = (net.predict(up)[j, 0] - net.predict(down)[j, 0]) / (2.0 * self.H)
                denom = max(abs(fd), abs(gx[j, i]), 1e-10)
                worst = max(worst, abs(fd - gx[j, i]) / denom)
        assert worst < self.RTOL

    def test_input_grad_of_linear_row_is_the_row(self):
        w = np.array([[2.0, -1.0, 0.5]])
        net = Network([DenseLayer(w, np.zeros(1), "identity")])
        x = np.random.default_rng(8).standard_normal((4, 3))
        gx = grad_input(net, x)
        np.testing.assert_allclose(gx, np.tile(w, (4, 1)), atol=1e-15)

    def test_constant_network_has_zero_input_grad(self):
        net = Network([DenseLayer(np.zeros((1, 3)), np.array([0.7]), "identity")])
        x = np.random.default_rng(9).standard_normal((4, 3))
        np.testing.assert_array_equal(grad_input(net, x), np.zeros((4, 3)))

    def test_taped_input_grad_equals_engine_backward(self):
        arch = ArchSpec(kind="tnn", hidden_layers=2, width=16, chi=2, input_width=7)
        net = init_network(arch, RngSpec(10))
        x = np.random.default_rng(11).standard_normal((6, 7))
        xt = Tensor(x, requires_grad=True)
        net.forward(xt).sum().backward()
        np.testing.assert_array_equal(grad_input(net, x), xt.grad)


class TestInitNetwork:
    def test_tnn_physical_dimension(self):
        arch = ArchSpec(kind="tnn", hidden_layers=2, width=64, chi=2, input_width=7)
        net = init_network(arch, RngSpec(0))
        assert isinstance(net.layers[1], MpoLayer)
        assert net.layers[1].d_phys == 8  # 64 = 8^2

    def test_non_square_tnn_width_rejected(self):
        with pytest.raises(ValueError, match="perfect square"):
            ArchSpec(kind="tnn", hidden_layers=2, width=60, chi=2, input_width=7)

    def test_deterministic_under_seed(self):
        arch = ArchSpec(kind="tnn", hidden_layers=3, width=16, chi=2, input_width=7)
        a = init_network(arch, RngSpec(42))
        b = init_network(arch, RngSpec(42))
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_contracted_variance_targets_glorot(self):
        # Sampling oracle: variance of contracted W entries over many inits
        # should match the Glorot variance 2/(fan_in + fan_out) within 20%.
        d, chi = 4, 2
        width = d * d
        glorot_var = 2.0 / (width + width)
        arch = ArchSpec(kind="tnn", hidden_layers=2, width=width, chi=chi, input_width=7)
        samples = []
        for seed in range(200):
            net = init_network(arch, RngSpec(seed))
            samples.append(mpo_contract(net.layers[1]).reshape(-1))
        variance = np.concatenate(samples).var()
        assert variance == pytest.approx(glorot_var, rel=0.2)

    def test_dense_biases_zero_and_weights_bounded(self):
        arch = ArchSpec(kind="dense", hidden_layers=2, width=64, chi=2, input_width=7)
        net = init_network(arch, RngSpec(1))
        first = net.layers[0]
        bound = np.sqrt(6.0 / (7 + 64))
        np.testing.assert_array_equal(first.bias.data, 0.0)
        assert np.abs(first.weight.data).max() <= bound


class TestParamCount:
    @pytest.mark.parametrize(
        "text,chi,expected",
        [
            ("dnn:2x64", 2, 4737),
            ("tnn:2x64", 2, 897),
            ("dnn:2x16", 2, 417),
            ("tnn:2x16", 2, 225),
            ("dnn:4x64", 2, 13057),
            ("tnn:4x64", 2, 1537),
            ("dnn:10x64", 2, 38017),
            ("tnn:10x64", 2, 3457),
            ("dnn:20x256", 2, 1252353),
            ("tnn:20x256", 2, 26625),
        ],
    )
    def test_reference_architecture_counts(self, text, chi, expected):
        net = init_network(ArchSpec.parse(text, chi=chi), RngSpec(0))
        assert param_count(net) == expected

    def test_arch_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            ArchSpec.parse("mlp:2x64")
        with pytest.raises(ValueError):
            ArchSpec.parse("tnn-2-64")


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        arch = ArchSpec(kind="tnn", hidden_layers=2, width=16, chi=2, input_width=7)
        net = init_network(arch, RngSpec(9))
        target = tmp_path / "net.npz"
        save_network(net, target, arch, seed=9)
        loaded, loaded_arch, seed = load_network(target)
        assert loaded_arch == arch
        assert seed == 9
        x = np.random.default_rng(0).standard_normal((4, 7))
        np.testing.assert_array_equal(loaded.predict(x), net.predict(x))
