"""Clipped-surrogate PPO with GAE and per-episode dual weight updates."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .env import EnvConfig, StreamingEnv, encode_state, feasible_actions
from .lagrange import RewardWeights, combined_reward, update_weights
from .manifest import VideoManifest
from .neural import NetSpec, Network, masked_softmax
from .rng import XorShift64Star
from .traces import ThroughputTrace


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    gamma: float = 0.95
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    epochs_per_update: int = 4
    steps_per_rollout: int = 2048
    minibatch_size: int = 256
    seed: int = 0
    num_updates: int = 100
    hidden: tuple[int, ...] = (64, 64)
    optimizer: str = "sgd"
    entropy_coef: float = 0.01
    entropy_decay: bool = True
    advantage: str = "gae"
    normalize_advantages: bool = True
    dual_update: str = "episode"
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if not self.clip_eps > 0:
            raise ValueError("clip_eps must be > 0")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.steps_per_rollout < 1 or self.minibatch_size < 1 or self.epochs_per_update < 1:
            raise ValueError("steps_per_rollout, minibatch_size and epochs_per_update must be >= 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")
        if self.advantage not in ("gae", "td"):
            raise ValueError("advantage must be 'gae' or 'td'")
        if self.dual_update not in ("episode", "step", "off"):
            raise ValueError("dual_update must be 'episode', 'step' or 'off'")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.dual_update == "step" and self.workers > 1:
            raise ValueError("per-step dual updates need a single worker")


@dataclass(frozen=True)
class Transition:
    features: np.ndarray
    action: int
    log_prob_old: float
    reward: float
    value_est: float
    done: bool
    mask: tuple[bool, bool] = (True, True)


# ------------------------------------------------------------ scalar pieces


def prob_ratio(log_prob_new, log_prob_old):
    return np.exp(np.asarray(log_prob_new) - np.asarray(log_prob_old))


def td_advantage(r: float, gamma: float, v_next: float, v_now: float, done: bool = False) -> float:
    return r + (0.0 if done else gamma * v_next) - v_now


def clipped_objective(ratio, advantage, eps):
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage)


def gae_from_arrays(rewards, values, next_values, dones, gamma, lam) -> np.ndarray:
    return kernels.gae(np.asarray(rewards, dtype=np.float64), np.asarray(values, dtype=np.float64),
                       np.asarray(next_values, dtype=np.float64), np.asarray(dones, dtype=np.float64),
                       gamma, lam)


def gae_advantages(transitions: Sequence[Transition], gamma: float, lam: float,
                   last_value: float = 0.0) -> np.ndarray:
    """GAE over an ordered trajectory; ``last_value`` bootstraps a non-terminal tail."""
    if not transitions:
        raise ValueError("empty trajectory")
    values = np.array([t.value_est for t in transitions])
    next_values = np.append(values[1:], last_value)
    return gae_from_arrays([t.reward for t in transitions], values, next_values,
                           [float(t.done) for t in transitions], gamma, lam)


def normalize(adv: np.ndarray) -> np.ndarray:
    if adv.size < 2:
        return adv - adv.mean()
    return (adv - adv.mean()) / max(adv.std(), 1e-8)


# ---------------------------------------------------------------- losses


def _entropy_terms(p: np.ndarray):
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0, np.log(np.where(p > 0, p, 1.0)), 0.0)
    ent = -(p * logp).sum(axis=1)
    dent = -p * (logp + ent[:, None])
    return ent, dent


def log_prob_and_grad(policy: Network, x: np.ndarray, action: int, mask=None) -> tuple[float, np.ndarray]:
    """log pi(action | x) and its parameter gradient."""
    logits, acts = policy.forward_batch(x)
    p = masked_softmax(logits, None if mask is None else np.atleast_2d(mask))
    g = -p.copy()
    g[0, action] += 1.0
    return float(np.log(p[0, action])), policy.backward(acts, g)


def policy_loss_and_grad(policy: Network, obs, actions, masks, old_logp, adv, clip_eps: float,
                         entropy_coef: float = 0.0, params: np.ndarray | None = None):
    """Negative mean clipped surrogate minus entropy bonus, with its exact gradient.

    Returns ``(loss, grad, stats)``. ``params`` evaluates at a different
    parameter vector without touching ``policy``.
    """
    net = policy if params is None else Network(policy.spec, params)
    logits, acts = net.forward_batch(obs)
    B = logits.shape[0]
    p = masked_softmax(logits, masks)
    rows = np.arange(B)
    logp = np.log(p[rows, actions])
    ratio = np.exp(logp - old_logp)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    obj = np.minimum(surr1, surr2)
    ent, dent = _entropy_terms(p)
    loss = -obj.mean() - entropy_coef * ent.mean()

    dobj_dratio = np.where(surr1 <= surr2, adv, 0.0)
    dlogp = -p
    dlogp[rows, actions] += 1.0
    g_logits = -(dobj_dratio * ratio)[:, None] * dlogp / B - entropy_coef * dent / B
    grad = net.backward(acts, g_logits)
    stats = {
        "policy_loss": float(-obj.mean()),
        "entropy": float(ent.mean()),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean(old_logp - logp)),
    }
    return float(loss), grad, stats


def value_loss_and_grad(value_net: Network, obs, returns, params: np.ndarray | None = None):
    net = value_net if params is None else Network(value_net.spec, params)
    out, acts = net.forward_batch(obs)
    err = out[:, 0] - returns
    loss = 0.5 * float(np.mean(err * err))
    grad = net.backward(acts, (err / err.size)[:, None])
    return loss, grad


# ------------------------------------------------------------ optimizers


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.lr * grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mhat = self.m / (1 - self.beta1 ** self.t)
        vhat = self.v / (1 - self.beta2 ** self.t)
        params -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def make_optimizer(config: TrainConfig):
    return Adam(config.lr) if config.optimizer == "adam" else SGD(config.lr)


# --------------------------------------------------------------- rollouts


@dataclass
class EpisodeSummary:
    tag: str
    steps: int
    total_reward: float
    total_quality: float
    total_stall_s: float
    total_smooth: int

    @property
    def avg_c_buf(self) -> float:
        return self.total_stall_s / self.steps

    @property
    def avg_c_smooth(self) -> float:
        return self.total_smooth / self.steps


@dataclass
class Rollout:
    obs: np.ndarray
    actions: np.ndarray
    masks: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    dones: np.ndarray
    reward_quality: np.ndarray
    cost_buffer: np.ndarray
    cost_smooth: np.ndarray
    episodes: list[EpisodeSummary] = field(default_factory=list)
    weights_after: RewardWeights | None = None

    def __len__(self) -> int:
        return self.actions.size

    def transitions(self) -> list[Transition]:
        return [Transition(self.obs[t], int(self.actions[t]), float(self.log_probs[t]), float(self.rewards[t]),
                           float(self.values[t]), bool(self.dones[t]), tuple(bool(m) for m in self.masks[t]))
                for t in range(len(self))]

    @staticmethod
    def concat(parts: Sequence["Rollout"]) -> "Rollout":
        arrays = {name: np.concatenate([getattr(r, name) for r in parts])
                  for name in ("obs", "actions", "masks", "log_probs", "rewards", "values", "next_values", "dones",
                               "reward_quality", "cost_buffer", "cost_smooth")}
        return Rollout(**arrays, episodes=[e for r in parts for e in r.episodes],
                       weights_after=parts[-1].weights_after)


class EpisodeStream:
    """Endless sequence of episodes over a pool of (manifest, MBS trace, UAV trace) cases.

    Each new episode picks a case uniformly with the stream's own generator.
    A partially played episode carries over between rollouts.
    """

    def __init__(self, envs: Sequence[StreamingEnv], seed: int = 0, tags: Sequence[str] | None = None):
        if not envs:
            raise ValueError("at least one environment is required")
        self.envs = list(envs)
        self.tags = list(tags) if tags is not None else [f"case{k}" for k in range(len(self.envs))]
        self.rng = XorShift64Star(seed)
        self.env: StreamingEnv | None = None
        self.tag = ""
        self._acc = [0, 0.0, 0.0, 0.0, 0]
        self.episodes_started = 0

    @classmethod
    def from_cases(cls, cases: Sequence[tuple[VideoManifest, ThroughputTrace, ThroughputTrace]],
                   env_config: EnvConfig, seed: int = 0, tags: Sequence[str] | None = None) -> "EpisodeStream":
        return cls([StreamingEnv(m, (mbs, uav), env_config) for m, mbs, uav in cases], seed, tags)

    def ensure_episode(self):
        if self.env is None or self.env.state is None or self.env.state.done:
            k = self.rng.below(len(self.envs)) if len(self.envs) > 1 else 0
            self.env, self.tag = self.envs[k], self.tags[k]
            self.env.reset(self.rng.next_u64() & 0x7FFFFFFF)
            self._acc = [0, 0.0, 0.0, 0.0, 0]
            self.episodes_started += 1
        return self.env


def select_action(policy: Network, obs: np.ndarray, mask: np.ndarray, rng: XorShift64Star | None,
                  greedy: bool = False) -> tuple[int, float]:
    """Sample (or argmax) an action under the feasibility mask; returns (action, log prob)."""
    probs = masked_softmax(policy.raw(obs), mask)
    if greedy:
        a = int(np.argmax(probs))
    else:
        a = 1 if rng.random() < probs[1] else 0
    return a, float(np.log(probs[a]))


def collect_rollout(env: StreamingEnv | EpisodeStream, policy: Network, steps: int, weights: RewardWeights,
                    rng: XorShift64Star, value_net: Network | None = None, greedy: bool = False,
                    dual_update: str = "off") -> Rollout:
    """Run ``steps`` environment steps, auto-resetting finished episodes.

    Rewards use ``weights``; with ``dual_update='step'`` the weights move after
    every step, otherwise they are left to the caller. Value estimates (and
    the bootstrap for an unfinished tail) come from ``value_net`` if given.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    stream = env if isinstance(env, EpisodeStream) else EpisodeStream([env])
    cfg = stream.envs[0].config
    obs = np.empty((steps, cfg.feature_len))
    masks = np.ones((steps, 2), dtype=bool)
    actions = np.empty(steps, dtype=np.int64)
    logps, rewards, dones = np.empty(steps), np.empty(steps), np.zeros(steps)
    rq, cb, cs = np.empty(steps), np.empty(steps), np.empty(steps)
    episodes = []
    for t in range(steps):
        e = stream.ensure_episode()
        s = e.state
        x = encode_state(s, cfg)
        mask = np.array(feasible_actions(s))
        a, lp = select_action(policy, x, mask, rng, greedy)
        out = e.step(a)
        r = combined_reward(weights, out.reward_quality, out.cost_buffer, out.cost_smooth)
        if not math.isfinite(r):
            raise TrainingError(f"non-finite reward at step {t}")
        obs[t], masks[t], actions[t], logps[t], rewards[t] = x, mask, a, lp, r
        rq[t], cb[t], cs[t] = out.reward_quality, out.cost_buffer, out.cost_smooth
        acc = stream._acc
        acc[0] += 1
        acc[1] += r
        acc[2] += out.reward_quality
        acc[3] += out.cost_buffer
        acc[4] += out.cost_smooth
        if dual_update == "step":
            weights = update_weights(weights, out.cost_buffer, out.cost_smooth)
        if out.done:
            dones[t] = 1.0
            episodes.append(EpisodeSummary(stream.tag, acc[0], acc[1], acc[2], acc[3], acc[4]))
    if value_net is not None:
        values, _ = value_net.forward_batch(obs)
        values = values[:, 0]
        tail = 0.0
        last = stream.env.state
        if not last.done:
            tail = float(value_net.forward_batch(encode_state(last, cfg))[0][0, 0])
        next_values = np.append(values[1:], tail)
    else:
        values = np.zeros(steps)
        next_values = np.zeros(steps)
    return Rollout(obs, actions, masks, logps, rewards, values, next_values, dones, rq, cb, cs,
                   episodes, weights)


# ----------------------------------------------------------------- update


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_frac: float
    approx_kl: float


def compute_advantages(rollout: Rollout, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """(advantages, value targets) for one stream's rollout."""
    lam = 0.0 if config.advantage == "td" else config.gae_lambda
    adv = gae_from_arrays(rollout.rewards, rollout.values, rollout.next_values, rollout.dones, config.gamma, lam)
    return adv, adv + rollout.values


def update(policy: Network, value_net: Network, batch: dict, config: TrainConfig, rng: XorShift64Star,
           entropy_coef: float | None = None, policy_opt=None, value_opt=None):
    """Several epochs of shuffled minibatch steps. Returns new networks and stats.

    ``batch`` holds ``obs, actions, masks, log_probs, advantages, returns``.
    Advantages are normalised over the whole batch here when configured.
    """
    if len(batch["actions"]) == 0:
        raise ValueError("empty rollout")
    policy, value_net = policy.clone(), value_net.clone()
    policy_opt = policy_opt or make_optimizer(config)
    value_opt = value_opt or make_optimizer(config)
    ent_coef = config.entropy_coef if entropy_coef is None else entropy_coef
    adv = batch["advantages"]
    if config.normalize_advantages:
        adv = normalize(adv)
    n = adv.size
    mb = min(config.minibatch_size, n)
    pl, vl, en, cf, kl, count = 0.0, 0.0, 0.0, 0.0, 0.0, 0
    for _ in range(config.epochs_per_update):
        order = np.array(rng.permutation(n))
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, g, st = policy_loss_and_grad(policy, batch["obs"][idx], batch["actions"][idx],
                                               batch["masks"][idx], batch["log_probs"][idx], adv[idx],
                                               config.clip_eps, ent_coef)
            vloss, vg = value_loss_and_grad(value_net, batch["obs"][idx], batch["returns"][idx])
            if not (np.all(np.isfinite(g)) and np.all(np.isfinite(vg))):
                raise TrainingError(
                    f"non-finite gradient (policy loss {loss}, value loss {vloss}, minibatch of {idx.size})")
            policy_opt.step(policy.params, g)
            value_opt.step(value_net.params, vg)
            pl += st["policy_loss"]
            vl += vloss
            en += st["entropy"]
            cf += st["clip_frac"]
            kl += st["approx_kl"]
            count += 1
    return policy, value_net, UpdateStats(pl / count, vl / count, en / count, cf / count, kl / count)


# ---------------------------------------------------------------- trainer


METRIC_COLUMNS = ("update_idx", "mean_reward", "mean_cost_buffer", "mean_cost_smooth", "eta", "mu",
                  "policy_loss", "value_loss", "entropy", "episodes", "mean_episode_reward",
                  "mean_episode_stall_s")


class Trainer:
    """Drives rollouts, dual weight updates and PPO updates."""

    def __init__(self, cases, env_config: EnvConfig, config: TrainConfig,
                 weights: RewardWeights | None = None, tags: Sequence[str] | None = None):
        self.config = config
        self.env_config = env_config
        self.weights = weights or RewardWeights()
        root = XorShift64Star(config.seed)
        pol_seed, val_seed = root.next_u64(), root.next_u64()
        in_size = env_config.feature_len
        self.policy = Network.init(NetSpec((in_size, *config.hidden, 2), "policy"), pol_seed)
        self.value_net = Network.init(NetSpec((in_size, *config.hidden, 1), "value"), val_seed, output_scale=1.0)
        self.streams = [EpisodeStream.from_cases(cases, env_config, root.next_u64(), tags)
                        for _ in range(config.workers)]
        self.action_rngs = [root.spawn() for _ in range(config.workers)]
        self.shuffle_rng = root.spawn()
        self.policy_opt = make_optimizer(config)
        self.value_opt = make_optimizer(config)
        self.history: list[dict] = []
        self.episodes: list[EpisodeSummary] = []
        self.updates_done = 0

    def _collect(self) -> list[Rollout]:
        cfg = self.config
        per = [cfg.steps_per_rollout // cfg.workers + (1 if k < cfg.steps_per_rollout % cfg.workers else 0)
               for k in range(cfg.workers)]
        snapshot = self.weights

        def work(k):
            return collect_rollout(self.streams[k], self.policy, max(1, per[k]), snapshot, self.action_rngs[k],
                                   self.value_net, dual_update=cfg.dual_update if cfg.dual_update == "step" else "off")

        if cfg.workers == 1:
            return [work(0)]
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(work, range(cfg.workers)))

    def step(self) -> dict:
        cfg = self.config
        parts = self._collect()
        advs, rets = zip(*(compute_advantages(r, cfg) for r in parts))
        ro = Rollout.concat(parts)
        if cfg.dual_update == "step":
            self.weights = ro.weights_after
        elif cfg.dual_update == "episode":
            for ep in ro.episodes:
                self.weights = update_weights(self.weights, ep.avg_c_buf, ep.avg_c_smooth)
        frac = self.updates_done / max(1, cfg.num_updates)
        ent = cfg.entropy_coef * (1.0 - frac) if cfg.entropy_decay else cfg.entropy_coef
        batch = {"obs": ro.obs, "actions": ro.actions, "masks": ro.masks, "log_probs": ro.log_probs,
                 "advantages": np.concatenate(advs), "returns": np.concatenate(rets)}
        self.policy, self.value_net, st = update(self.policy, self.value_net, batch, cfg, self.shuffle_rng, ent,
                                                 self.policy_opt, self.value_opt)
        self.episodes.extend(ro.episodes)
        row = {
            "update_idx": self.updates_done,
            "mean_reward": float(ro.rewards.mean()),
            "mean_cost_buffer": float(ro.cost_buffer.mean()),
            "mean_cost_smooth": float(ro.cost_smooth.mean()),
            "eta": self.weights.eta,
            "mu": self.weights.mu,
            "policy_loss": st.policy_loss,
            "value_loss": st.value_loss,
            "entropy": st.entropy,
            "episodes": len(ro.episodes),
            "mean_episode_reward": float(np.mean([e.total_reward for e in ro.episodes])) if ro.episodes else float("nan"),
            "mean_episode_stall_s": float(np.mean([e.total_stall_s for e in ro.episodes])) if ro.episodes else float("nan"),
        }
        self.history.append(row)
        self.updates_done += 1
        return row

    def train(self, num_updates: int | None = None, callback: Callable[[dict], None] | None = None) -> list[dict]:
        n = self.config.num_updates if num_updates is None else num_updates
        for _ in range(n):
            row = self.step()
            if callback:
                callback(row)
        return self.history


def with_overrides(config: TrainConfig, **kw) -> TrainConfig:
    return replace(config, **kw)
