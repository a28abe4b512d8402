"""Per-episode QoE metrics, empirical CDFs, and multi-scheduler comparisons."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np

from .evaluate import EpisodeLog


class IncompleteEpisodeError(ValueError):
    pass


@dataclass(frozen=True)
class EpisodeMetrics:
    mean_psnr_db: float
    total_stall_s: float
    startup_s: float
    quality_variation_count: int
    total_reward: float
    episode_len_steps: int
    psnr_variation_db: float = 0.0


METRIC_FIELDS = ("mean_psnr_db", "total_stall_s", "startup_s", "quality_variation_count", "total_reward",
                 "episode_len_steps", "psnr_variation_db")


def count_edges(levels: Sequence[float]) -> int:
    """Number of empty <-> non-empty switches in a buffer occupancy series."""
    occupied = [x > 0 for x in levels]
    return sum(a != b for a, b in zip(occupied[:-1], occupied[1:]))


def episode_metrics(log: EpisodeLog) -> EpisodeMetrics:
    if not log.complete:
        raise IncompleteEpisodeError(f"episode {log.video_id}/{log.trace_id} has no terminal step")
    bl: dict[int, float] = {}
    el: dict[int, float] = {}
    for r in log.records:
        if r.layer_idx < 0 or r.reward_quality <= 0:
            continue
        (bl if r.action == 0 else el)[r.layer_idx] = r.reward_quality * log.psnr_norm_db
    n = len(bl)
    if sorted(bl) != list(range(n)):
        raise IncompleteEpisodeError("base-layer segments missing from the log")
    played = [el.get(k, bl[k]) for k in range(n)]
    steps = len(log.records)
    return EpisodeMetrics(
        mean_psnr_db=float(np.mean(played)),
        total_stall_s=float(sum(r.stall_s for r in log.records)),
        startup_s=float(sum(r.startup_s for r in log.records)),
        quality_variation_count=count_edges([0.0] + [r.q_el_s for r in log.records]),
        total_reward=float(sum(r.reward for r in log.records)),
        episode_len_steps=steps,
        psnr_variation_db=float(np.abs(np.diff(played)).sum()) if n > 1 else 0.0,
    )


def cdf_points(values: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF; tied values each get their own step."""
    if len(values) == 0:
        raise ValueError("cdf of an empty sample")
    xs = sorted(float(v) for v in values)
    n = len(xs)
    return [(x, (k + 1) / n) for k, x in enumerate(xs)]


def _mean_std(xs: Sequence[float]) -> dict:
    arr = np.asarray(xs, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


@dataclass
class QoEReport:
    policy: str
    episodes: list[tuple[str, str, EpisodeMetrics]]

    def aggregate(self) -> dict:
        return {f: _mean_std([getattr(m, f) for _, _, m in self.episodes]) for f in METRIC_FIELDS}

    def cdf(self) -> list[tuple[float, float]]:
        return cdf_points([m.total_reward for _, _, m in self.episodes])

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "episodes": [{"video_id": v, "trace_id": t, **asdict(m)} for v, t, m in self.episodes],
            "aggregate": self.aggregate(),
            "reward_cdf": [list(p) for p in self.cdf()],
        }


def build_report(policy: str, logs: Sequence[EpisodeLog]) -> QoEReport:
    return QoEReport(policy, [(lg.video_id, lg.trace_id, episode_metrics(lg)) for lg in logs])


def _pct_reduction(a: float, b: float) -> float | None:
    if b == 0:
        return 0.0 if a == 0 else None
    return 100.0 * (b - a) / b


def pairwise_delta(a: Mapping[str, float], b: Mapping[str, float]) -> dict:
    """How run ``a`` compares with run ``b`` on mean metrics."""
    return {
        "psnr_db_delta": a["mean_psnr_db"] - b["mean_psnr_db"],
        "stall_reduction_pct": _pct_reduction(a["total_stall_s"], b["total_stall_s"]),
        "variation_reduction_pct": _pct_reduction(a["quality_variation_count"], b["quality_variation_count"]),
        "reward_delta": a["total_reward"] - b["total_reward"],
    }


def compare_report(runs: Mapping[str, QoEReport]) -> dict:
    """Per-video and overall mean/std for each run plus pairwise deltas (earlier run vs later)."""
    names = list(runs)
    if len(names) < 2:
        raise ValueError("comparison needs at least two runs")
    keysets = {n: sorted((v, t) for v, t, _ in runs[n].episodes) for n in names}
    ref = keysets[names[0]]
    for n in names[1:]:
        if keysets[n] != ref:
            raise ValueError(f"run {n!r} covers different (video, trace) pairs than {names[0]!r}")

    def summarize(episodes):
        return {f: _mean_std([getattr(m, f) for m in episodes]) for f in METRIC_FIELDS}

    videos = sorted({v for v, _ in ref})
    per_video = {v: {n: summarize([m for vv, _, m in runs[n].episodes if vv == v]) for n in names} for v in videos}
    overall = {n: summarize([m for _, _, m in runs[n].episodes]) for n in names}

    def means(block):
        return {f: block[f]["mean"] for f in METRIC_FIELDS}

    deltas = []
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            entry = {"a": a, "b": b, "overall": pairwise_delta(means(overall[a]), means(overall[b]))}
            entry["per_video"] = {v: pairwise_delta(means(per_video[v][a]), means(per_video[v][b])) for v in videos}
            deltas.append(entry)
    return {"runs": names, "per_video": per_video, "overall": overall, "deltas": deltas}


def comparison_rows(report: dict) -> list[dict]:
    """Flat table: one row per (video, run) with metric means and stds."""
    rows = []
    for video, block in report["per_video"].items():
        for name, stats in block.items():
            row = {"video_id": video, "policy": name}
            for f in METRIC_FIELDS:
                row[f"{f}_mean"] = stats[f]["mean"]
                row[f"{f}_std"] = stats[f]["std"]
            rows.append(row)
    return rows
