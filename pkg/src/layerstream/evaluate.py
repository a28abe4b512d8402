"""Run whole episodes with a named scheduler and persist per-step logs."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .baselines import ThresholdPolicy, bl_only_action, random_action, threshold_action
from .env import EnvState, StreamingEnv, encode_state, feasible_actions
from .lagrange import RewardWeights, combined_reward
from .neural import Network, masked_softmax
from .rng import XorShift64Star

POLICY_NAMES = ("ppo", "threshold", "bl-only", "random")

Actor = Callable[[EnvState, StreamingEnv], int]


@dataclass(frozen=True)
class StepRecord:
    step: int
    wall_clock_s: float
    action: int
    layer_idx: int
    delta_t_s: float
    q_bl_s: float
    q_el_s: float
    stall_s: float
    reward_quality: float
    cost_buffer: float
    cost_smooth: int
    reward: float
    el_discarded: bool
    startup_s: float
    done: bool


CSV_COLUMNS = tuple(f.name for f in fields(StepRecord))
_INT_COLS = {"step", "action", "layer_idx", "cost_smooth"}
_BOOL_COLS = {"el_discarded", "done"}


@dataclass
class EpisodeLog:
    video_id: str
    trace_id: str
    policy: str
    records: list[StepRecord]
    psnr_norm_db: float = 60.0

    @property
    def complete(self) -> bool:
        return bool(self.records) and self.records[-1].done


def run_episode(env: StreamingEnv, actor: Actor, weights: RewardWeights, seed: int = 0,
                trace_id: str = "", policy: str = "", max_steps: int | None = None) -> EpisodeLog:
    s = env.reset(seed)
    limit = max_steps or 50 * env.manifest.num_segments + 10
    records = []
    for t in range(limit):
        a = actor(s, env)
        out = env.step(a)
        info = out.info
        s = out.next_state
        records.append(StepRecord(
            step=t, wall_clock_s=s.wall_clock_s, action=a, layer_idx=info["segment"], delta_t_s=info["delta_t_s"],
            q_bl_s=s.q[0], q_el_s=s.q[1], stall_s=info["stall_s"], reward_quality=out.reward_quality,
            cost_buffer=out.cost_buffer, cost_smooth=out.cost_smooth,
            reward=combined_reward(weights, out.reward_quality, out.cost_buffer, out.cost_smooth),
            el_discarded=info["el_discarded"], startup_s=info["startup_s"], done=out.done,
        ))
        if out.done:
            break
    return EpisodeLog(env.manifest.video_id, trace_id, policy, records, env.config.psnr_norm_db)


# ------------------------------------------------------------------ actors


def policy_actor(policy: Network, greedy: bool = True, rng: XorShift64Star | None = None) -> Actor:
    def act(s: EnvState, env: StreamingEnv) -> int:
        probs = masked_softmax(policy.raw(encode_state(s, env.config)), np.array(feasible_actions(s)))
        if greedy:
            return int(np.argmax(probs))
        return 1 if rng.random() < probs[1] else 0
    return act


def make_actor(name: str, policy: Network | None = None, seed: int = 0,
               threshold: ThresholdPolicy | None = None) -> Actor:
    if name == "ppo":
        if policy is None:
            raise ValueError("the 'ppo' scheduler needs a policy file")
        return policy_actor(policy)
    if name == "threshold":
        p = threshold or ThresholdPolicy()
        return lambda s, env: threshold_action(p, s)
    if name == "bl-only":
        return lambda s, env: bl_only_action(s)
    if name == "random":
        rng = XorShift64Star(seed)
        return lambda s, env: random_action(rng)
    raise ValueError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}")


def evaluate_cases(cases: Sequence[tuple[str, StreamingEnv]], actor_factory: Callable[[], Actor],
                   weights: RewardWeights, policy_name: str = "") -> list[EpisodeLog]:
    """One episode per ``(trace_id, env)``; a fresh actor per episode keeps runs replayable."""
    return [run_episode(env, actor_factory(), weights, seed=0, trace_id=tid, policy=policy_name)
            for tid, env in cases]


# --------------------------------------------------------------------- CSV


def write_episode_csv(log: EpisodeLog, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in log.records:
            row = asdict(rec)
            w.writerow([repr(row[c]) if isinstance(row[c], float) else int(row[c]) for c in CSV_COLUMNS])


def read_episode_csv(path: str | Path, video_id: str = "", trace_id: str = "", policy: str = "",
                     psnr_norm_db: float = 60.0) -> EpisodeLog:
    records = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for c in CSV_COLUMNS:
                if c in _INT_COLS:
                    vals[c] = int(row[c])
                elif c in _BOOL_COLS:
                    vals[c] = bool(int(row[c]))
                else:
                    vals[c] = float(row[c])
            records.append(StepRecord(**vals))
    return EpisodeLog(video_id, trace_id, policy, records, psnr_norm_db)
