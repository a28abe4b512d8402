"""Hot numeric kernels with two interchangeable implementations.

Each kernel exists as a scalar loop (``*_loop``), compiled by numba when it is
available, and as a vectorised numpy version (``*_numpy``). The public names
(``download_time``, ``gae``, ``mlp_forward``) point at the loop versions when
numba is active and at the numpy versions otherwise, see :mod:`._accel`.
Both paths must agree to rounding; ``tests/test_kernels.py`` checks that.
"""

from __future__ import annotations

import numpy as np

from ._accel import HAS_NUMBA, njit

# ---------------------------------------------------------------- throughput


def _download_time_loop(times, kbps, period, start, bits):
    n = times.shape[0]
    u = start % period
    j = 0
    while j + 1 < n and times[j + 1] <= u:
        j += 1
    remaining = bits
    elapsed = 0.0
    # finish the current period
    while j < n:
        end = times[j + 1] if j + 1 < n else period
        rate = kbps[j] * 1000.0
        cap = rate * (end - u)
        if rate > 0.0 and cap >= remaining:
            return elapsed + remaining / rate
        remaining -= cap
        elapsed += end - u
        u = end
        j += 1
    # skip whole periods, leaving a strictly positive remainder
    per_period = 0.0
    for k in range(n):
        end = times[k + 1] if k + 1 < n else period
        per_period += kbps[k] * 1000.0 * (end - times[k])
    cycles = np.ceil(remaining / per_period) - 1.0
    if cycles > 0.0:
        remaining -= cycles * per_period
        elapsed += cycles * period
    u = 0.0
    j = 0
    while True:
        end = times[j + 1] if j + 1 < n else period
        rate = kbps[j] * 1000.0
        cap = rate * (end - u)
        if rate > 0.0 and cap >= remaining:
            return elapsed + remaining / rate
        remaining -= cap
        elapsed += end - u
        u = end
        j += 1
        if j == n:
            j = 0
            u = 0.0


def cumulative_bits(times: np.ndarray, kbps: np.ndarray, period: float) -> np.ndarray:
    """Bits delivered from time 0 up to each sample time, plus the period total."""
    widths = np.diff(np.append(times, period))
    return np.concatenate(([0.0], np.cumsum(kbps * 1000.0 * widths)))


def download_time_numpy(times, kbps, period, start, bits, cum=None):
    if cum is None:
        cum = cumulative_bits(times, kbps, period)
    rates = kbps * 1000.0
    total = cum[-1]
    u = start % period
    j = np.searchsorted(times, u, side="right") - 1
    target = cum[j] + rates[j] * (u - times[j]) + bits
    cycles = np.ceil(target / total) - 1.0
    rem = target - cycles * total
    k = int(np.searchsorted(cum, rem, side="left"))
    k = min(max(k, 1), times.shape[0])
    v = times[k - 1] + (rem - cum[k - 1]) / rates[k - 1]
    return float(cycles * period + v - u)


# ---------------------------------------------------------------- advantages


def _gae_loop(rewards, values, next_values, dones, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv


def gae_numpy(rewards, values, next_values, dones, gamma, lam):
    """Same recursion as ``_gae_loop`` expressed as a discounted reverse scan.

    Episode boundaries reset the running sum, so the scan is done per segment
    of the trajectory between ``done`` flags.
    """
    nonterminal = 1.0 - dones
    deltas = rewards + gamma * next_values * nonterminal - values
    n = rewards.shape[0]
    adv = np.empty(n)
    ends = np.flatnonzero(dones > 0.5)
    bounds = np.concatenate(([0], ends + 1, [n]))
    decay = gamma * lam
    if decay == 0.0:
        return deltas
    # short enough blocks that decay**block stays far above underflow
    block = int(min(128, max(1, 250 // max(1e-12, -np.log10(decay)))))
    for a, b in zip(bounds[:-1], bounds[1:]):
        carry = 0.0
        for hi in range(b, a, -block):
            lo = max(a, hi - block)
            seg = deltas[lo:hi][::-1]
            powers = decay ** np.arange(1, hi - lo + 1)
            acc = np.cumsum(seg / powers) * powers + carry * powers
            adv[lo:hi] = acc[::-1]
            carry = adv[lo]
    return adv


# ---------------------------------------------------------------- networks


def _mlp_forward_loop(params, sizes, x):
    """Single-sample forward pass; tanh on hidden layers, linear output."""
    h = x.copy()
    offset = 0
    nl = sizes.shape[0] - 1
    for layer in range(nl):
        fan_in = sizes[layer]
        fan_out = sizes[layer + 1]
        out = np.empty(fan_out)
        bias_at = offset + fan_in * fan_out
        for o in range(fan_out):
            acc = params[bias_at + o]
            for i in range(fan_in):
                acc += h[i] * params[offset + i * fan_out + o]
            out[o] = np.tanh(acc) if layer < nl - 1 else acc
        offset = bias_at + fan_out
        h = out
    return h


def mlp_forward_numpy(params, sizes, x):
    h = np.asarray(x, dtype=np.float64)
    offset = 0
    nl = len(sizes) - 1
    for layer in range(nl):
        fan_in, fan_out = int(sizes[layer]), int(sizes[layer + 1])
        w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = params[offset:offset + fan_out]
        offset += fan_out
        h = h @ w + b
        if layer < nl - 1:
            h = np.tanh(h)
    return h


download_time_loop = njit(_download_time_loop)
gae_loop = njit(_gae_loop)
mlp_forward_loop = njit(_mlp_forward_loop)

if HAS_NUMBA:
    BACKEND = "numba"

    def download_time(times, kbps, period, start, bits, cum=None):
        return float(download_time_loop(times, kbps, float(period), float(start), float(bits)))

    def gae(rewards, values, next_values, dones, gamma, lam):
        return gae_loop(rewards, values, next_values, dones, float(gamma), float(lam))

    def mlp_forward(params, sizes, x):
        return mlp_forward_loop(params, sizes, np.ascontiguousarray(x, dtype=np.float64))
else:
    BACKEND = "numpy"
    download_time = download_time_numpy
    gae = gae_numpy
    mlp_forward = mlp_forward_numpy
