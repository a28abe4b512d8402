"""Analytic mm-Wave downlink model: path loss -> SNR -> Shannon rate.

Path loss is in dB with Gaussian (in dB) shadowing, and it divides the
received power. There is no interference term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import XorShift64Star
from .traces import ThroughputTrace


class ChannelDomainError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    beta1: float = 61.4
    beta2: float = 2.0
    shadow_sigma_db: float = 0.0
    tx_power_w: float = 1.0
    rb_bandwidth_hz: float = 100e6
    noise_psd_w_per_hz: float = 4e-21

    def __post_init__(self):
        for name in ("beta2", "tx_power_w", "rb_bandwidth_hz", "noise_psd_w_per_hz"):
            if not getattr(self, name) > 0:
                raise ChannelDomainError(f"{name} must be strictly positive")
        if not self.shadow_sigma_db >= 0:
            raise ChannelDomainError("shadow_sigma_db must be >= 0")
        if not math.isfinite(self.beta1):
            raise ChannelDomainError("beta1 must be finite")

    @property
    def noise_power_w(self) -> float:
        return self.rb_bandwidth_hz * self.noise_psd_w_per_hz


@dataclass(frozen=True)
class LinkGeometry:
    distance_m: float

    def __post_init__(self):
        if not self.distance_m >= 1.0:
            raise ChannelDomainError(f"distance_m must be >= 1 m, got {self.distance_m}")


def path_loss_db(g: LinkGeometry, p: ChannelParams, shadow_db: float = 0.0) -> float:
    if g.distance_m < 1.0:
        raise ChannelDomainError("distance below 1 m is outside the model domain")
    return p.beta1 + 10.0 * p.beta2 * math.log10(g.distance_m) + shadow_db


def sinr(p: ChannelParams, loss_db: float) -> float:
    if not math.isfinite(loss_db):
        raise ChannelDomainError("loss_db must be finite")
    return p.tx_power_w * 10.0 ** (-loss_db / 10.0) / p.noise_power_w


def link_rate_bps(p: ChannelParams, zeta: float) -> float:
    if zeta < 0:
        raise ChannelDomainError("SINR must be >= 0")
    return p.rb_bandwidth_hz * math.log2(1.0 + zeta)


def analytic_trace(g: LinkGeometry, p: ChannelParams, duration_s: int, seed: int,
                   bs_id: str = "analytic") -> ThroughputTrace:
    """One sample per second, fresh shadowing draw each second (one normal per sample)."""
    if duration_s < 1:
        raise ChannelDomainError("duration_s must be >= 1")
    rng = XorShift64Star(seed)
    rates = np.empty(int(duration_s))
    for t in range(int(duration_s)):
        xi = rng.normal(0.0, p.shadow_sigma_db) if p.shadow_sigma_db > 0 else 0.0
        rates[t] = link_rate_bps(p, sinr(p, path_loss_db(g, p, xi))) / 1000.0
    return ThroughputTrace(bs_id, np.arange(int(duration_s), dtype=np.float64), rates)


def shadowing_samples(p: ChannelParams, n: int, seed: int) -> np.ndarray:
    """The shadowing realisations ``analytic_trace`` would draw for the same seed."""
    rng = XorShift64Star(seed)
    return np.array([rng.normal(0.0, p.shadow_sigma_db) for _ in range(n)])
