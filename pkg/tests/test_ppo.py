import math

import numpy as np
import pytest

from layerstream.env import EnvConfig, StreamingEnv
from layerstream.lagrange import RewardWeights
from layerstream.manifest import synth_manifest
from layerstream.neural import NetSpec, Network
from layerstream.ppo import (
    TrainConfig, Trainer, TrainingError, Transition, clipped_objective, collect_rollout, gae_advantages,
    log_prob_and_grad, prob_ratio, td_advantage, update,
)
from layerstream.rng import XorShift64Star
from layerstream.traces import TraceProfile, synth_trace


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def test_prob_ratio():
    assert rel(prob_ratio(math.log(0.6), math.log(0.3)), 2.0) < 1e-12
    assert prob_ratio(-0.7, -0.7) == 1.0
    assert rel(prob_ratio(math.log(0.3), math.log(0.6)), 0.5) < 1e-12


def test_td_advantage():
    assert rel(td_advantage(1.0, 0.95, 2.0, 1.5), 1.4) < 1e-12
    assert td_advantage(0.0, 0.95, 0.0, 0.0) == 0.0
    assert td_advantage(2.0, 0.95, 10.0, 0.5, done=True) == 1.5


def test_clipped_objective():
    assert rel(float(clipped_objective(2.0, 1.0, 0.2)), 1.2) < 1e-12
    assert rel(float(clipped_objective(0.5, -1.0, 0.2)), -0.8) < 1e-12
    for a in (-3.0, 0.0, 0.7):
        assert float(clipped_objective(1.0, a, 0.2)) == a


def traj(rewards, values, dones=None):
    dones = dones or [False] * len(rewards)
    return [Transition(np.zeros(1), 0, 0.0, r, v, d) for r, v, d in zip(rewards, values, dones)]


def test_gae_examples():
    assert list(gae_advantages(traj([1, 1], [0, 0]), 1.0, 1.0)) == [2.0, 1.0]
    t = traj([0.3, -1.0, 2.0, 0.5], [0.1, 0.4, -0.2, 0.9], [False, True, False, False])
    vals = [0.1, 0.4, -0.2, 0.9]
    nxt = vals[1:] + [0.7]
    expected = [td_advantage(x.reward, 0.9, nv, x.value_est, x.done) for x, nv in zip(t, nxt)]
    assert np.allclose(gae_advantages(t, 0.9, 0.0, last_value=0.7), expected, rtol=1e-12, atol=0)
    one = traj([1.5], [0.4])
    assert gae_advantages(one, 0.95, 0.95)[0] == td_advantage(1.5, 0.95, 0.0, 0.4)
    with pytest.raises(ValueError):
        gae_advantages([], 0.9, 0.9)


def test_gae_stops_at_episode_boundary():
    a = gae_advantages(traj([0, 5, 1], [0, 0, 0], [False, True, False]), 1.0, 1.0)
    assert list(a) == [5.0, 5.0, 1.0]


def _batch(n=12, seed=0, in_size=4):
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=(n, in_size))
    return {"obs": obs, "actions": rng.integers(0, 2, n), "masks": np.ones((n, 2), bool),
            "advantages": rng.normal(size=n), "returns": rng.normal(size=n)}


def _nets(seed=0, in_size=4):
    pol = Network.init(NetSpec((in_size, 5, 2)), seed, output_scale=1.0)
    val = Network.init(NetSpec((in_size, 5, 1), "value"), seed + 1, output_scale=1.0)
    return pol, val


def _with_current_logp(pol, batch):
    batch["log_probs"] = np.array([log_prob_and_grad(pol, x, a)[0] for x, a in zip(batch["obs"], batch["actions"])])
    return batch


def test_zero_advantages_leave_policy_unchanged():
    pol, val = _nets()
    b = _with_current_logp(pol, _batch())
    b["advantages"] = np.zeros(12)
    cfg = TrainConfig(entropy_coef=0.0, minibatch_size=4)
    new_pol, new_val, _ = update(pol, val, b, cfg, XorShift64Star(1))
    assert np.array_equal(new_pol.params, pol.params)
    assert not np.array_equal(new_val.params, val.params)


def test_huge_clip_equals_vanilla_policy_gradient():
    pol, val = _nets(3)
    b = _with_current_logp(pol, _batch(seed=3))
    cfg = TrainConfig(clip_eps=1e12, entropy_coef=0.0, epochs_per_update=1, minibatch_size=64,
                      normalize_advantages=False, lr=0.01)
    new_pol, _, _ = update(pol, val, b, cfg, XorShift64Star(0))
    g = np.zeros_like(pol.params)
    for x, a, adv in zip(b["obs"], b["actions"], b["advantages"]):
        g -= adv * log_prob_and_grad(pol, x, a)[1]
    expected = pol.params - 0.01 * g / len(b["actions"])
    assert np.max(np.abs(new_pol.params - expected)) < 1e-10


def test_update_is_deterministic():
    pol, val = _nets(5)
    b = _with_current_logp(pol, _batch(seed=5))
    cfg = TrainConfig(minibatch_size=5)
    p1, v1, _ = update(pol, val, b, cfg, XorShift64Star(9))
    p2, v2, _ = update(pol, val, b, cfg, XorShift64Star(9))
    assert np.array_equal(p1.params, p2.params) and np.array_equal(v1.params, v2.params)


def test_nan_gradient_aborts():
    pol, val = _nets()
    b = _with_current_logp(pol, _batch())
    b["obs"][3, 0] = np.nan
    with pytest.raises(TrainingError, match="non-finite"):
        update(pol, val, b, TrainConfig(), XorShift64Star(0))


def test_bandit_learns_rewarding_arm():
    # one state; action 0 pays 1, action 1 pays 0
    pol, val = _nets(11, in_size=3)
    cfg = TrainConfig(minibatch_size=32, lr=0.01)
    rng = XorShift64Star(4)
    x = np.array([0.5, -0.2, 1.0])
    for _ in range(200):
        p1 = float(np.exp(log_prob_and_grad(pol, x, 1)[0]))
        acts = np.array([1 if rng.random() < p1 else 0 for _ in range(64)])
        rew = (acts == 0).astype(float)
        b = {"obs": np.tile(x, (64, 1)), "actions": acts, "masks": np.ones((64, 2), bool),
             "log_probs": np.log(np.where(acts == 1, p1, 1 - p1)), "advantages": rew - rew.mean(), "returns": rew}
        pol, val, _ = update(pol, val, b, cfg, rng)
    assert math.exp(log_prob_and_grad(pol, x, 0)[0]) > 0.95


def _env():
    m = synth_manifest(6, seed=2)
    prof = TraceProfile(8000, 500, 0.3, 2)
    return StreamingEnv(m, (synth_trace(prof, 60, 1, "mbs"), synth_trace(prof, 60, 2, "uav")),
                        EnvConfig(kbps_scale=8000))


def test_rollout_modes_are_reproducible():
    pol, _ = _nets(in_size=16)
    w = RewardWeights()
    with pytest.raises(ValueError):
        collect_rollout(_env(), pol, 0, w, XorShift64Star(0))
    g1 = collect_rollout(_env(), pol, 40, w, None, greedy=True)
    g2 = collect_rollout(_env(), pol, 40, w, None, greedy=True)
    assert np.array_equal(g1.actions, g2.actions)
    s1 = collect_rollout(_env(), pol, 40, w, XorShift64Star(3))
    s2 = collect_rollout(_env(), pol, 40, w, XorShift64Star(3))
    assert np.array_equal(s1.actions, s2.actions) and np.array_equal(s1.rewards, s2.rewards)
    assert s1.episodes and all(e.steps > 0 for e in s1.episodes)


def test_rollout_never_picks_masked_action():
    pol = Network.init(NetSpec((16, 5, 2)), 0, output_scale=1.0)
    pol.params[-1] = 50.0  # strongly prefer EL
    ro = collect_rollout(_env(), pol, 60, RewardWeights(), XorShift64Star(0))
    assert np.all(ro.masks[np.arange(60), ro.actions])


def _cases():
    prof = TraceProfile(8000, 500, 0.3, 2)
    return [(synth_manifest(5, seed=k), synth_trace(prof, 60, 10 + k, "mbs"), synth_trace(prof, 60, 20 + k, "uav"))
            for k in range(2)]


@pytest.mark.parametrize("workers", [1, 2])
def test_trainer_deterministic(workers):
    cfg = TrainConfig(num_updates=3, steps_per_rollout=64, minibatch_size=16, hidden=(8,), workers=workers)
    a = Trainer(_cases(), EnvConfig(kbps_scale=8000), cfg)
    b = Trainer(_cases(), EnvConfig(kbps_scale=8000), cfg)
    a.train()
    b.train()
    assert np.array_equal(a.policy.params, b.policy.params)
    assert a.history == b.history or all(
        (x == y) or (isinstance(x, float) and math.isnan(x) and math.isnan(y))
        for ra, rb in zip(a.history, b.history) for x, y in zip(ra.values(), rb.values()))


def test_step_dual_mode_needs_one_worker():
    with pytest.raises(ValueError):
        TrainConfig(dual_update="step", workers=2)
