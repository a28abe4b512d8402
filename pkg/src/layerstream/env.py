"""Dual-buffer layered streaming environment.

One step downloads one segment: action 0 fetches the next base-layer (BL)
segment from the macro base station trace, action 1 fetches an enhancement-
layer (EL) segment from the UAV trace. Downloads are sequential (one radio).

Playback model
--------------
* Playback starts once the BL buffer holds ``startup_threshold_s`` seconds (or
  the whole BL track is downloaded). Time before that is startup wait.
* While playing, the BL buffer drains 1 s per second. An empty BL buffer with
  BL segments still missing is a stall; nothing drains during a stall.
* An EL segment plays merged with its BL segment, so the EL buffer drains
  with the play head over the contiguous run of downloaded EL segments.
* EL segments only attach to already-downloaded BL segments whose playback
  has not started. An EL segment whose playback started before it arrived is
  discarded.
* A BL segment that arrives while its buffer lacks room for it is held
  until playback frees the room (overflow wait; playback continues).
* Once the BL track is complete and no EL segment is eligible, or on a BL
  action after the BL track is complete, the remaining buffer plays out and
  the episode ends.

Clock accounting: every second of wall clock is exactly one of played,
stalled, startup wait, or idle (nothing left to play while a download is still
running at the very end of the video).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .manifest import BL, EL, NUM_LAYERS, VideoManifest, segment_bits, segment_psnr, validate_manifest
from .traces import ThroughputTrace, download_time, throughput_at

EPS = 1e-9
BS_NAMES = ("mbs", "uav")


class EnvConfigError(ValueError):
    pass


class EnvStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    buffer_capacity_s: float = 36.0
    history_len: int = 5
    num_buffers: int = 2
    num_layers: int = 2
    startup_threshold_s: float = 2.0
    psnr_norm_db: float = 60.0
    kbps_scale: float = 50_000.0
    random_trace_offset: bool = False

    def __post_init__(self):
        if not self.buffer_capacity_s > 0:
            raise EnvConfigError("buffer_capacity_s must be > 0")
        if self.history_len < 1:
            raise EnvConfigError("history_len must be >= 1")
        if self.num_buffers != 2 or self.num_layers != NUM_LAYERS:
            raise EnvConfigError("this simulator supports exactly 2 buffers and 2 layers")
        if not self.startup_threshold_s >= 0:
            raise EnvConfigError("startup_threshold_s must be >= 0")
        if not self.psnr_norm_db > 0 or not self.kbps_scale > 0:
            raise EnvConfigError("normalisers must be > 0")

    @property
    def feature_len(self) -> int:
        nb = len(BS_NAMES)
        return self.num_buffers + nb + self.num_layers + nb * self.history_len


@dataclass(frozen=True)
class EnvState:
    q: tuple[float, float]
    d: tuple[float, float]
    i: tuple[int, int]
    h: tuple[tuple[float, ...], tuple[float, ...]]
    playhead_s: float
    wall_clock_s: float
    stalled: bool
    started: bool = False
    done: bool = False
    total_stall_s: float = 0.0
    startup_wait_s: float = 0.0
    idle_s: float = 0.0
    overflow_wait_s: float = 0.0
    el_run_start: int = 0
    segment_s: float = 1.0
    num_segments: int = 1
    trace_offset_s: float = 0.0

    @property
    def el_target(self) -> int:
        """Next EL segment index an EL action would fetch, or -1."""
        return el_target(self)


def el_target(s: EnvState) -> int:
    playing_seg = math.floor(s.playhead_s / s.segment_s + EPS)
    k = max(s.i[EL], playing_seg) + 1
    return k if k <= s.i[BL] else -1


def feasible_actions(s: EnvState) -> tuple[bool, bool]:
    """(BL allowed, EL would download something). BL is always legal."""
    return True, el_target(s) >= 0


@dataclass(frozen=True)
class StepOutcome:
    reward_quality: float
    cost_buffer: float
    cost_smooth: int
    next_state: EnvState
    done: bool
    info: dict = field(default_factory=dict)


def advance_buffer(q_prev: float, delta_t: float, T: float, q_max: float) -> tuple[float, float]:
    """Buffer level after a download of ``delta_t`` seconds adds a ``T``-second segment.

    Returns ``(q_new, stall_s)``. The level floors at zero while draining and
    is capped at ``q_max``.
    """
    if min(q_prev, delta_t, T, q_max) < 0:
        raise ValueError("advance_buffer inputs must be >= 0")
    q_new = min(max(q_prev - delta_t, 0.0) + T, q_max)
    return q_new, max(delta_t - q_prev, 0.0)


class _Playback:
    """Mutable clock used inside one transition."""

    __slots__ = ("T", "N", "i0", "playhead", "wall", "started", "stall", "startup", "idle", "step_stall",
                 "step_startup")

    def __init__(self, s: EnvState):
        self.T, self.N = s.segment_s, s.num_segments
        self.i0 = s.i[BL]
        self.playhead = s.playhead_s
        self.wall = s.wall_clock_s
        self.started = s.started
        self.stall = s.total_stall_s
        self.startup = s.startup_wait_s
        self.idle = s.idle_s
        self.step_stall = 0.0
        self.step_startup = 0.0

    @property
    def bl_level(self) -> float:
        return max(0.0, (self.i0 + 1) * self.T - self.playhead)

    def advance(self, dt: float) -> None:
        if dt <= 0.0:
            return
        self.wall += dt
        if not self.started:
            self.startup += dt
            self.step_startup += dt
            return
        bound = (self.i0 + 1) * self.T
        avail = max(0.0, bound - self.playhead)
        if dt >= avail:
            self.playhead = bound
            rest = dt - avail
        else:
            self.playhead += dt
            rest = 0.0
        if rest > 0.0:
            if self.i0 == self.N - 1:
                self.idle += rest
            else:
                self.stall += rest
                self.step_stall += rest


def _el_level(i1: int, run_start: int, playhead: float, T: float) -> float:
    level = (i1 + 1) * T - max(playhead, run_start * T)
    return level if level > EPS else 0.0


class StreamingEnv:
    """Simulator for one video over one MBS/UAV trace pair."""

    def __init__(self, manifest: VideoManifest, traces: Mapping[str, ThroughputTrace] | Sequence[ThroughputTrace],
                 config: EnvConfig | None = None):
        self.config = config or EnvConfig()
        if not isinstance(traces, Mapping):
            traces = dict(zip(BS_NAMES, traces))
        missing = [b for b in BS_NAMES if traces.get(b) is None]
        if missing:
            raise EnvConfigError(f"missing throughput trace for base station(s): {', '.join(missing)}")
        validate_manifest(manifest, self.config.num_layers)
        T = manifest.segment_duration_s
        if self.config.startup_threshold_s > self.config.buffer_capacity_s - T:
            raise EnvConfigError("startup_threshold_s must leave room for one segment below capacity")
        self.manifest = manifest
        self.traces = (traces["mbs"], traces["uav"])
        self.state: EnvState | None = None

    # ------------------------------------------------------------------ api

    def reset(self, seed: int = 0) -> EnvState:
        offset = 0.0
        if self.config.random_trace_offset:
            from .rng import XorShift64Star

            offset = float(math.floor(XorShift64Star(seed).uniform(0.0, self.traces[0].period)))
        d = tuple(throughput_at(tr, offset) for tr in self.traces)
        H = self.config.history_len
        self.state = EnvState(
            q=(0.0, 0.0), d=d, i=(-1, -1), h=tuple((x,) * H for x in d),
            playhead_s=0.0, wall_clock_s=0.0, stalled=False,
            segment_s=self.manifest.segment_duration_s, num_segments=self.manifest.num_segments,
            trace_offset_s=offset,
        )
        return self.state

    def step(self, action: int) -> StepOutcome:
        if self.state is None:
            raise EnvStateError("call reset() before step()")
        out = self.transition(self.state, action)
        self.state = out.next_state
        return out

    def encode_state(self, s: EnvState | None = None) -> np.ndarray:
        return encode_state(s if s is not None else self.state, self.config)

    # ---------------------------------------------------------- transition

    def transition(self, s: EnvState, action: int) -> StepOutcome:
        """Pure transition function; does not touch ``self.state``."""
        if s.done:
            raise EnvStateError("step() called on a finished episode")
        if action not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {action!r}")
        cfg, m = self.config, self.manifest
        T, N, cap = s.segment_s, s.num_segments, cfg.buffer_capacity_s
        pb = _Playback(s)
        i1, run_start = s.i[EL], s.el_run_start
        wait = 0.0
        delta_t = 0.0
        reward_q = 0.0
        discarded = False
        segment, layer = -1, -1
        finish = False

        if action == 0:
            if s.i[BL] == N - 1:
                finish = True
            else:
                segment, layer = s.i[BL] + 1, BL
        else:
            k = el_target(s)
            if k >= 0:
                segment, layer = k, EL

        if layer >= 0:
            bits = segment_bits(m, layer, segment)
            delta_t = download_time(self.traces[layer], s.trace_offset_s + s.wall_clock_s, bits)
            pb.advance(delta_t)
            if layer == BL:
                # the arrived segment waits until the buffer has room for it
                excess = pb.bl_level - (cap - T)
                if excess > 0.0:
                    pb.advance(excess)
                    wait = excess
                pb.i0 = segment
                if not pb.started and (pb.bl_level >= cfg.startup_threshold_s - EPS or segment == N - 1):
                    pb.started = True
                reward_q = segment_psnr(m, BL, segment) / cfg.psnr_norm_db
            else:
                # the EL run never outgrows the BL buffer, so it never needs an overflow wait
                if pb.playhead > segment * T + EPS:
                    discarded = True
                    run_start = segment + 1
                else:
                    if segment != i1 + 1:
                        run_start = segment
                    reward_q = segment_psnr(m, EL, segment) / cfg.psnr_norm_db
                i1 = segment

        i0 = pb.i0
        probe = replace(s, i=(i0, i1), playhead_s=pb.playhead)
        done = False
        if finish or (i0 == N - 1 and el_target(probe) < 0):
            pb.started = True
            pb.advance(pb.bl_level)
            done = True

        q_bl = 0.0 if done else min(cap, pb.bl_level)
        if q_bl <= EPS:
            q_bl = 0.0
        q_el = 0.0 if done else _el_level(i1, run_start, pb.playhead, T)
        cost_smooth = int((s.q[EL] > 0.0) != (q_el > 0.0))

        wall = pb.wall
        d_new = tuple(throughput_at(tr, s.trace_offset_s + wall) for tr in self.traces)
        h_new = tuple((s.d[j],) + s.h[j][:-1] for j in range(len(self.traces)))
        nxt = replace(
            s,
            q=(q_bl, q_el), d=d_new, i=(i0, i1), h=h_new,
            playhead_s=pb.playhead, wall_clock_s=wall,
            stalled=bool(pb.started and not done and q_bl == 0.0 and i0 < N - 1),
            started=pb.started, done=done,
            total_stall_s=pb.stall, startup_wait_s=pb.startup, idle_s=pb.idle,
            overflow_wait_s=s.overflow_wait_s + wait, el_run_start=run_start,
        )
        info = {
            "delta_t_s": delta_t,
            "stall_s": pb.step_stall,
            "startup_s": pb.step_startup,
            "wait_s": wait,
            "el_discarded": discarded,
            "segment": segment,
            "layer": layer,
            "noop": layer < 0 and not finish,
        }
        return StepOutcome(reward_q, pb.step_stall, cost_smooth, nxt, done, info)


def encode_state(s: EnvState, config: EnvConfig) -> np.ndarray:
    """Feature vector ``[q/q_max, d/scale, (i+1)/N, h/scale]`` (h row-major, MBS first)."""
    qmax, scale = config.buffer_capacity_s, config.kbps_scale
    feats = [s.q[0] / qmax, s.q[1] / qmax, s.d[0] / scale, s.d[1] / scale,
             (s.i[0] + 1) / s.num_segments, (s.i[1] + 1) / s.num_segments]
    for row in s.h:
        feats.extend(x / scale for x in row)
    return np.array(feats, dtype=np.float64)
