import pytest

from layerstream.lagrange import RewardWeights, combined_reward, update_weights


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_combined_reward():
    w = RewardWeights(lambda_q=1.0, eta=2.0, mu=0.5)
    assert rel(combined_reward(w, 0.6, 0.3, 1), -0.5) < 1e-12
    assert combined_reward(RewardWeights(lambda_q=2.0), 0.4, 0.0, 0) == 0.8
    assert combined_reward(w, 0.0, 0.0, 0) == 0.0


def test_dual_step_examples():
    w = update_weights(RewardWeights(eta=1.0, omega0=0.01, h0=0.0), 0.3, 1.0)
    assert rel(w.eta, 1.003) < 1e-12
    same = RewardWeights(eta=1.7, mu=0.4)
    assert update_weights(same, 0.0, 1.0) == same
    w = update_weights(RewardWeights(mu=0.005, omega1=0.01, h1=1.0), 0.0, 0.0)
    assert w.mu == 0.0


def test_constant_stall_gives_linear_growth_until_cap():
    w = RewardWeights(eta=1.0, weight_cap=1.05)
    etas = []
    for _ in range(15):
        w = update_weights(w, 0.5, 1.0)
        etas.append(w.eta)
    assert rel(etas[0], 1.005) < 1e-12
    assert all(rel(b - a, 0.005) < 1e-9 for a, b in zip(etas[:9], etas[1:10]))
    assert etas[-1] == 1.05


def test_negative_costs_rejected():
    with pytest.raises(ValueError):
        update_weights(RewardWeights(), -0.1, 0.0)
    with pytest.raises(ValueError):
        update_weights(RewardWeights(), float("nan"), 0.0)


@pytest.mark.parametrize("kw", [{"eta": -1.0}, {"omega0": 0.0}, {"weight_cap": 0.0}])
def test_invalid_weights(kw):
    with pytest.raises(ValueError):
        RewardWeights(**kw)
