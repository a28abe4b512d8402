"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both implementations are importable in one process, so the comparison does
not need the LAYERSTREAM_NO_NUMBA switch. Without numba installed the
"compiled" column just runs the plain-Python loops.
"""

import argparse
import timeit

import numpy as np

from layerstream import kernels
from layerstream.env import StreamingEnv
from layerstream.manifest import synth_manifest
from layerstream.traces import TraceProfile, synth_trace


def cases():
    rng = np.random.default_rng(0)
    tr = synth_trace(TraceProfile(8000, 300, 0.3, 3), 600, seed=1)
    times, kbps, period, cum = tr.times, tr.kbps, tr.period, tr._cum
    starts = rng.uniform(0, 600, 200)
    bits = rng.uniform(5e5, 6e6, 200)

    def dt_loop():
        for s, b in zip(starts, bits):
            kernels.download_time_loop(times, kbps, period, s, b)

    def dt_numpy():
        for s, b in zip(starts, bits):
            kernels.download_time_numpy(times, kbps, period, s, b, cum)

    n = 4096
    r, v, nv = rng.normal(size=n), rng.normal(size=n), rng.normal(size=n)
    d = (rng.random(n) < 0.02).astype(np.float64)

    sizes = np.array([16, 64, 64, 2], dtype=np.int64)
    params = rng.normal(size=sum(int(a) * int(b) + int(b) for a, b in zip(sizes[:-1], sizes[1:]))) * 0.1
    xs = rng.normal(size=(200, 16))

    def mlp_loop():
        for x in xs:
            kernels.mlp_forward_loop(params, sizes, x)

    def mlp_numpy():
        for x in xs:
            kernels.mlp_forward_numpy(params, sizes, x)

    return [
        ("download_time x200", dt_loop, dt_numpy),
        ("gae n=4096", lambda: kernels.gae_loop(r, v, nv, d, 0.95, 0.95),
         lambda: kernels.gae_numpy(r, v, nv, d, 0.95, 0.95)),
        ("mlp_forward 16-64-64-2 x200", mlp_loop, mlp_numpy),
    ]


def env_steps_per_second(n_episodes=20):
    m = synth_manifest(36, seed=1)
    prof = TraceProfile(10000, 300, 0.3, 6)
    env = StreamingEnv(m, (synth_trace(prof, 120, 1, "mbs"), synth_trace(prof, 120, 2, "uav")))
    rng = np.random.default_rng(0)
    steps = 0
    t0 = timeit.default_timer()
    for ep in range(n_episodes):
        env.reset(ep)
        while not env.step(int(rng.random() < 0.4)).done:
            steps += 1
    return steps / (timeit.default_timer() - t0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"backend in use: {kernels.BACKEND}")
    print(f"{'kernel':32s} {'compiled ms':>12s} {'numpy ms':>10s} {'speedup':>8s}")
    for name, fast, slow in cases():
        fast()  # compile outside the timed region
        slow()
        tf = min(timeit.repeat(fast, number=1, repeat=args.repeat)) * 1e3
        ts = min(timeit.repeat(slow, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:32s} {tf:12.3f} {ts:10.3f} {ts / tf:7.1f}x")
    print(f"environment: {env_steps_per_second():.0f} steps/s")


if __name__ == "__main__":
    main()
