"""Non-learning schedulers used as comparison points."""

from __future__ import annotations

from dataclasses import dataclass

from .env import EnvState, el_target
from .manifest import BL
from .rng import XorShift64Star


@dataclass(frozen=True)
class ThresholdPolicy:
    """Fill the BL buffer to a safe level, then fetch EL segments while it stays there."""

    bl_safe_threshold_s: float = 10.0
    buffer_capacity_s: float = 36.0

    def __post_init__(self):
        if not 0 < self.bl_safe_threshold_s <= self.buffer_capacity_s:
            raise ValueError("threshold must be in (0, buffer capacity]")


def threshold_action(p: ThresholdPolicy, state: EnvState) -> int:
    has_el = el_target(state) >= 0
    if state.i[BL] == state.num_segments - 1:
        return 1 if has_el else 0
    return 1 if has_el and state.q[BL] >= p.bl_safe_threshold_s else 0


def bl_only_action(state: EnvState) -> int:
    return 0


def random_action(rng: XorShift64Star) -> int:
    return rng.bernoulli(0.5)
