"""Reward weights and their dual-ascent adjustment.

The per-step reward is ``lambda_q * quality - eta * stall_s - mu * smooth``.
After each episode ``eta`` and ``mu`` move toward whatever keeps the episode
average costs at their targets: a weight rises while its cost is above target
and decays (down to zero) while below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class RewardWeights:
    lambda_q: float = 1.0
    eta: float = 1.0
    mu: float = 1.0
    h0: float = 0.0
    h1: float = 1.0
    omega0: float = 0.01
    omega1: float = 0.01
    weight_cap: float | None = 50.0

    def __post_init__(self):
        if self.eta < 0 or self.mu < 0:
            raise ValueError("eta and mu must be >= 0")
        if not (self.omega0 > 0 and self.omega1 > 0):
            raise ValueError("omega0 and omega1 must be > 0")
        if self.weight_cap is not None and self.weight_cap <= 0:
            raise ValueError("weight_cap must be positive or None")


def combined_reward(w: RewardWeights, r_q: float, c_buf: float, c_smooth: float) -> float:
    return w.lambda_q * r_q - w.eta * c_buf - w.mu * c_smooth


def _project(value: float, cap: float | None) -> float:
    value = max(value, 0.0)
    return min(value, cap) if cap is not None else value


def update_weights(w: RewardWeights, avg_c_buf: float, avg_c_smooth: float) -> RewardWeights:
    """One dual step from episode-average per-step costs."""
    if not (avg_c_buf >= 0 and avg_c_smooth >= 0) or math.isnan(avg_c_buf + avg_c_smooth):
        raise ValueError("average costs must be non-negative")
    eta = _project(w.eta + w.omega0 * (avg_c_buf - w.h0), w.weight_cap)
    mu = _project(w.mu + w.omega1 * (avg_c_smooth - w.h1), w.weight_cap)
    return replace(w, eta=eta, mu=mu)
