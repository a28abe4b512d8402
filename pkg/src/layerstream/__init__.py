"""Layered (base + enhancement) video download scheduling over two base stations.

Core pieces: a dual-buffer streaming simulator, throughput traces, a PPO agent
with Lagrangian reward weights, baseline schedulers, and QoE metrics.
"""

from .env import EnvConfig, EnvState, StreamingEnv
from .kernels import BACKEND
from .lagrange import RewardWeights
from .manifest import VideoManifest, load_manifest, synth_manifest
from .ppo import TrainConfig, Trainer
from .traces import ThroughputTrace, TraceProfile, load_trace, synth_trace

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "EnvConfig", "EnvState", "RewardWeights", "StreamingEnv", "ThroughputTrace", "TraceProfile",
    "TrainConfig", "Trainer", "VideoManifest", "load_manifest", "load_trace", "synth_manifest", "synth_trace",
]
