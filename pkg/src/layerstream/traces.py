"""Downlink throughput traces.

A trace is a zero-order-hold step function of time (kbps) that loops once it
runs out. Sample times are stored relative to the first sample; the last
sample is held for the same width as the gap before it (1 s for a
single-sample trace), which fixes the loop period.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .rng import XorShift64Star


class TraceValidationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ThroughputTrace:
    bs_id: str
    times: np.ndarray
    kbps: np.ndarray
    period: float = field(init=False)
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=np.float64)
        kbps = np.ascontiguousarray(self.kbps, dtype=np.float64)
        if times.ndim != 1 or times.shape != kbps.shape:
            raise TraceValidationError("times and kbps must be 1-D and the same length")
        if times.size == 0:
            raise TraceValidationError(f"{self.bs_id}: trace is empty")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(kbps)):
            raise TraceValidationError(f"{self.bs_id}: non-finite values")
        if np.any(np.diff(times) <= 0):
            raise TraceValidationError(f"{self.bs_id}: sample times must be strictly increasing")
        if np.any(kbps < 0):
            raise TraceValidationError(f"{self.bs_id}: negative throughput")
        if not np.any(kbps > 0):
            raise TraceValidationError(f"{self.bs_id}: no sample with positive throughput")
        times = times - times[0]
        last_gap = times[-1] - times[-2] if times.size > 1 else 1.0
        period = float(times[-1] + last_gap)
        times.setflags(write=False)
        kbps.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "kbps", kbps)
        object.__setattr__(self, "period", period)
        object.__setattr__(self, "_cum", kernels.cumulative_bits(times, kbps, period))

    def __len__(self) -> int:
        return self.times.size

    def __eq__(self, other):
        if not isinstance(other, ThroughputTrace):
            return NotImplemented
        return (self.bs_id == other.bs_id and np.array_equal(self.times, other.times)
                and np.array_equal(self.kbps, other.kbps))

    @property
    def mean_kbps(self) -> float:
        return float(self._cum[-1] / 1000.0 / self.period)


def throughput_at(tr: ThroughputTrace, t: float) -> float:
    if t < 0:
        raise ValueError("t must be >= 0")
    u = math.fmod(t, tr.period)
    j = int(np.searchsorted(tr.times, u, side="right")) - 1
    return float(tr.kbps[j])


def download_time(tr: ThroughputTrace, start: float, bits: float) -> float:
    """Seconds needed to receive ``bits`` starting at ``start``, integrated exactly."""
    if not bits > 0:
        raise ValueError(f"bits must be positive, got {bits}")
    if start < 0:
        raise ValueError("start must be >= 0")
    return kernels.download_time(tr.times, tr.kbps, tr.period, start, bits, tr._cum)


def load_trace(path: str | Path, bs_id: str | None = None) -> ThroughputTrace:
    """Parse a ``time_s,kbps`` CSV. The header line is optional."""
    path = Path(path)
    times, rates = [], []
    with path.open(newline="", encoding="ascii") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if lineno == 1 and row[0].strip() == "time_s":
                continue
            if len(row) != 2:
                raise TraceValidationError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                times.append(float(row[0]))
                rates.append(float(row[1]))
            except ValueError as exc:
                raise TraceValidationError(f"{path}:{lineno}: {exc}") from exc
    if not times:
        raise TraceValidationError(f"{path}: trace is empty")
    try:
        return ThroughputTrace(bs_id or path.stem, np.array(times), np.array(rates))
    except TraceValidationError as exc:
        raise TraceValidationError(f"{path}: {exc}") from exc


def save_trace(tr: ThroughputTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time_s", "kbps"])
        for t, r in zip(tr.times, tr.kbps):
            w.writerow([repr(float(t)), repr(float(r))])


def load_trace_dir(directory: str | Path) -> list[tuple[str, ThroughputTrace, ThroughputTrace]]:
    """Pair ``mbs_<x>.csv`` with ``uav_<x>.csv``; returns ``(x, mbs, uav)`` sorted by ``x``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"trace directory not found: {directory}")
    mbs = {p.stem[4:]: p for p in directory.glob("mbs_*.csv")}
    uav = {p.stem[4:]: p for p in directory.glob("uav_*.csv")}
    unpaired = sorted(set(mbs) ^ set(uav))
    if unpaired:
        raise TraceValidationError(f"{directory}: unpaired traces for suffixes {unpaired}")
    if not mbs:
        raise TraceValidationError(f"{directory}: no mbs_*.csv / uav_*.csv pairs")
    return [(k, load_trace(mbs[k]), load_trace(uav[k])) for k in sorted(mbs)]


@dataclass(frozen=True)
class TraceProfile:
    """Two-state (GOOD/BAD) throughput process.

    Every ``dwell_s`` seconds the state flips with probability ``p_drop``.
    """

    mean_kbps: float
    low_kbps: float
    p_drop: float
    dwell_s: int = 1

    def __post_init__(self):
        if not (self.mean_kbps > self.low_kbps >= 0):
            raise TraceValidationError("profile requires mean_kbps > low_kbps >= 0")
        if not 0.0 <= self.p_drop <= 1.0:
            raise TraceValidationError("p_drop must be in [0, 1]")
        if int(self.dwell_s) != self.dwell_s or self.dwell_s < 1:
            raise TraceValidationError("dwell_s must be a positive integer")


def synth_trace(profile: TraceProfile, duration_s: int, seed: int, bs_id: str = "synth") -> ThroughputTrace:
    """Seeded GOOD/BAD Markov trace at 1 s granularity with +-10% jitter.

    The chain starts GOOD. Per second: at each dwell boundary one uniform
    decides the flip, then one uniform sets the jitter factor in [0.9, 1.1].
    """
    if duration_s < 1:
        raise TraceValidationError("duration_s must be >= 1")
    rng = XorShift64Star(seed)
    good = True
    dwell = int(profile.dwell_s)
    rates = np.empty(int(duration_s))
    for t in range(int(duration_s)):
        if t > 0 and t % dwell == 0 and rng.random() < profile.p_drop:
            good = not good
        base = profile.mean_kbps if good else profile.low_kbps
        rates[t] = base * rng.uniform(0.9, 1.1)
    return ThroughputTrace(bs_id, np.arange(int(duration_s), dtype=np.float64), rates)
