import numpy as np
import pytest

from layerstream.gradcheck import numeric_grad, rel_error
from layerstream.neural import (
    DimensionError, NetSpec, Network, backward, forward, load_network, log_prob_grad_logits, masked_softmax,
    save_network,
)


def test_zero_network_outputs():
    pol = Network(NetSpec((16, 8, 2), "policy"), np.zeros(NetSpec((16, 8, 2)).num_params))
    assert list(forward(pol, np.ones(16))) == [0.5, 0.5]
    spec = NetSpec((16, 8, 1), "value")
    assert forward(Network(spec, np.zeros(spec.num_params)), np.ones(16)) == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_probabilities_normalised(seed):
    net = Network.init(NetSpec((6, 7, 2)), seed, output_scale=3.0)
    x = np.random.default_rng(seed).normal(size=6)
    assert abs(forward(net, x).sum() - 1.0) < 1e-12


def test_shape_mismatch():
    net = Network.init(NetSpec((4, 3, 2)), 0)
    with pytest.raises(DimensionError):
        forward(net, np.ones(5))
    with pytest.raises(DimensionError):
        Network(NetSpec((4, 3, 2)), np.zeros(7))
    with pytest.raises(DimensionError):
        NetSpec((4, 3, 3), "policy")


@pytest.mark.parametrize("seed", range(10))
def test_value_gradient_matches_finite_differences(seed):
    spec = NetSpec((5, 6, 4, 1), "value")
    net = Network.init(spec, seed, output_scale=1.0)
    net.params += np.random.default_rng(seed).uniform(-0.3, 0.3, net.params.size)
    x = np.random.default_rng(100 + seed).normal(size=5)
    g = backward(net, x, np.ones(1))
    num = numeric_grad(lambda p: forward(Network(spec, p), x), net.params)
    assert rel_error(g, num) < 1e-6


def test_zero_upstream_gives_zero_gradient():
    net = Network.init(NetSpec((4, 3, 2)), 1)
    assert not np.any(backward(net, np.ones(4), np.zeros(2)))


def test_log_prob_logit_gradient_at_uniform():
    g = log_prob_grad_logits(np.array([0.5, 0.5]), 1)
    assert g[1] == 0.5 and g[0] == -0.5


def test_mask_forces_feasible_action():
    p = masked_softmax(np.array([-5.0, 5.0]), np.array([True, False]))
    assert list(p) == [1.0, 0.0]


def test_raw_matches_batch_forward():
    net = Network.init(NetSpec((16, 64, 64, 2)), 3, output_scale=1.0)
    X = np.random.default_rng(0).normal(size=(5, 16))
    batch, _ = net.forward_batch(X)
    assert np.allclose([net.raw(x) for x in X], batch, rtol=0, atol=1e-13)


def test_save_load_roundtrip(tmp_path):
    net = Network.init(NetSpec((4, 3, 2)), 7, output_scale=1.0)
    save_network(net, tmp_path / "p.json", {"note": "x"})
    back, extra = load_network(tmp_path / "p.json")
    assert extra == {"note": "x"}
    assert back.spec == net.spec and np.array_equal(back.params, net.params)
