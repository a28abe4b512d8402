"""Command-line entry point: ``layerstream {train,eval,compare,synth-traces,gradcheck}``.

Configuration is one JSON file. Precedence, lowest to highest: built-in
defaults, then the ``--config`` file, then command-line flags. Each run writes
its merged configuration to ``<out>/<run_id>/effective_config.json``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

from .baselines import ThresholdPolicy
from .channel import ChannelDomainError, ChannelParams, LinkGeometry, analytic_trace
from .env import EnvConfig, EnvConfigError, StreamingEnv
from .evaluate import POLICY_NAMES, EpisodeLog, make_actor, run_episode, write_episode_csv
from .gradcheck import TOLERANCE, run_all
from .lagrange import RewardWeights
from .manifest import ManifestFormatError, ManifestValidationError, VideoManifest, load_manifest
from .metrics import build_report, compare_report, comparison_rows
from .neural import DimensionError, Network, load_network, save_network
from .ppo import METRIC_COLUMNS, TrainConfig, Trainer
from .rng import XorShift64Star
from .traces import ThroughputTrace, TraceProfile, TraceValidationError, load_trace_dir, save_trace, synth_trace

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


CONFIG_ERRORS = (ConfigError, ManifestFormatError, ManifestValidationError, TraceValidationError,
                 EnvConfigError, ChannelDomainError, DimensionError)


@dataclass(frozen=True)
class AnalyticChannel:
    """Traces generated from the link model instead of read from disk."""

    params: ChannelParams = field(default_factory=ChannelParams)
    mbs_distance_m: float = 300.0
    uav_distance_m: float = 80.0
    duration_s: int = 300
    count: int = 4


@dataclass(frozen=True)
class RunConfig:
    manifests: tuple[str, ...] = ()
    traces: str | None = None
    channel: AnalyticChannel | None = None
    env: EnvConfig = field(default_factory=EnvConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    weights: RewardWeights = field(default_factory=RewardWeights)
    threshold_s: float = 10.0
    out: str = "out"
    run_id: str = "run"
    seed: int = 0

    @property
    def run_dir(self) -> Path:
        return Path(self.out) / self.run_id


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    data = dict(data)
    data.pop("synth", None)  # read by synth-traces only
    base = RunConfig()
    kw = {}
    if "manifests" in data:
        m = data.pop("manifests")
        kw["manifests"] = (m,) if isinstance(m, str) else tuple(m)
    if "channel" in data:
        ch = data.pop("channel")
        if ch is not None:
            ch = dict(ch)
            params = _build(ChannelParams, ch.pop("params", {}), "channel.params")
            kw["channel"] = _build(AnalyticChannel, {**ch, "params": params}, "channel")
    for key, cls in (("env", EnvConfig), ("train", TrainConfig), ("weights", RewardWeights)):
        if key in data:
            kw[key] = _build(cls, data.pop(key), key)
    scalars = {"traces", "threshold_s", "out", "run_id", "seed"}
    unknown = sorted(set(data) - scalars)
    if unknown:
        raise ConfigError(f"unknown config keys {unknown}")
    kw.update(data)
    return replace(base, **kw)


def config_to_dict(cfg: RunConfig) -> dict:
    d = asdict(cfg)
    d["manifests"] = list(cfg.manifests)
    d["train"]["hidden"] = list(cfg.train.hidden)
    return d


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return config_from_dict(data)


def apply_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        kw["out"] = args.out
    if getattr(args, "run_id", None) is not None:
        kw["run_id"] = args.run_id
    if getattr(args, "manifest", None):
        kw["manifests"] = tuple(args.manifest)
    if getattr(args, "traces", None) is not None:
        kw["traces"] = args.traces
        kw["channel"] = None
    cfg = replace(cfg, **kw)
    train_kw = {"seed": cfg.seed}
    if getattr(args, "workers", None) is not None:
        train_kw["workers"] = args.workers
    if getattr(args, "updates", None) is not None:
        train_kw["num_updates"] = args.updates
    try:
        return replace(cfg, train=replace(cfg.train, **train_kw))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def validate_config(cfg: RunConfig) -> None:
    if not cfg.manifests:
        raise ConfigError("no manifest given (config 'manifests' or --manifest)")
    for m in cfg.manifests:
        if not Path(m).is_file():
            raise ConfigError(f"manifest not found: {m}")
    if (cfg.traces is None) == (cfg.channel is None):
        raise ConfigError("exactly one throughput source is required: 'traces' directory or 'channel' block")
    if cfg.traces is not None and not Path(cfg.traces).is_dir():
        raise ConfigError(f"trace directory not found: {cfg.traces}")
    if cfg.channel is not None and cfg.channel.count < 1:
        raise ConfigError("channel.count must be >= 1")
    ThresholdPolicy(cfg.threshold_s, cfg.env.buffer_capacity_s)


# ------------------------------------------------------------------ data


def load_trace_pairs(cfg: RunConfig) -> list[tuple[str, ThroughputTrace, ThroughputTrace]]:
    if cfg.traces is not None:
        return load_trace_dir(cfg.traces)
    ch = cfg.channel
    rng = XorShift64Star(cfg.seed)
    pairs = []
    for k in range(ch.count):
        mbs = analytic_trace(LinkGeometry(ch.mbs_distance_m), ch.params, ch.duration_s, rng.next_u64(), "mbs")
        uav = analytic_trace(LinkGeometry(ch.uav_distance_m), ch.params, ch.duration_s, rng.next_u64(), "uav")
        pairs.append((f"analytic_{k:03d}", mbs, uav))
    return pairs


def load_cases(cfg: RunConfig) -> list[tuple[VideoManifest, str, ThroughputTrace, ThroughputTrace]]:
    manifests = [load_manifest(m, num_layers=cfg.env.num_layers) for m in cfg.manifests]
    pairs = load_trace_pairs(cfg)
    return [(m, tid, mbs, uav) for m in manifests for tid, mbs, uav in pairs]


# --------------------------------------------------------------- outputs


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _prepare_run_dir(cfg: RunConfig) -> Path:
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    write_json(run_dir / "effective_config.json", config_to_dict(cfg))
    return run_dir


# -------------------------------------------------------------- commands


def cmd_train(cfg: RunConfig, log=print) -> Path:
    """Train a policy; writes policy.json, value.json and train_metrics.csv."""
    validate_config(cfg)
    cases = load_cases(cfg)
    run_dir = _prepare_run_dir(cfg)
    trainer = Trainer([(m, a, b) for m, _, a, b in cases], cfg.env, cfg.train, cfg.weights,
                      tags=[f"{m.video_id}/{tid}" for m, tid, _, _ in cases])
    every = max(1, cfg.train.num_updates // 10)

    def progress(row):
        if row["update_idx"] % every == 0 or row["update_idx"] == cfg.train.num_updates - 1:
            log(f"update {row['update_idx']}: reward {row['mean_reward']:.4f} eta {row['eta']:.4f} "
                f"mu {row['mu']:.4f} entropy {row['entropy']:.4f}")

    trainer.train(callback=progress)
    meta = {"env": asdict(cfg.env), "weights": asdict(trainer.weights)}
    save_network(trainer.policy, run_dir / "policy.json", meta)
    save_network(trainer.value_net, run_dir / "value.json")
    write_csv(run_dir / "train_metrics.csv", METRIC_COLUMNS, trainer.history)
    return run_dir / "policy.json"


def load_policy(path: str | Path, env: EnvConfig) -> Network:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"policy file not found: {p}")
    try:
        net, extra = load_network(p)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"{p}: not a policy file ({exc})") from exc
    if net.spec.head != "policy":
        raise DimensionError(f"{p}: network head is {net.spec.head!r}, expected 'policy'")
    if net.spec.input_size != env.feature_len:
        raise DimensionError(f"{p}: policy expects {net.spec.input_size} features, "
                             f"environment produces {env.feature_len}")
    return net


def _run_policy(cfg: RunConfig, name: str, cases, policy: Network | None, label: str | None = None) -> list[EpisodeLog]:
    label = label or name
    threshold = ThresholdPolicy(cfg.threshold_s, cfg.env.buffer_capacity_s)
    episodes_dir = cfg.run_dir / "episodes"
    episodes_dir.mkdir(parents=True, exist_ok=True)
    logs = []
    for k, (m, tid, mbs, uav) in enumerate(cases):
        env = StreamingEnv(m, (mbs, uav), cfg.env)
        actor = make_actor(name, policy, seed=cfg.seed * 100003 + k, threshold=threshold)
        log = run_episode(env, actor, cfg.weights, seed=cfg.seed, trace_id=tid, policy=label)
        write_episode_csv(log, episodes_dir / f"{label}__{m.video_id}__{tid}.csv")
        logs.append(log)
    return logs


def _resolve_policy_file(cfg: RunConfig, path: str | None) -> Path:
    return Path(path) if path else cfg.run_dir / "policy.json"


def cmd_eval(cfg: RunConfig, policy_path: str | None = None, name: str = "ppo") -> Path:
    """Greedy evaluation of one scheduler over every (manifest, trace) case."""
    validate_config(cfg)
    if name not in POLICY_NAMES:
        raise ConfigError(f"unknown policy {name!r}; valid names: {', '.join(POLICY_NAMES)}")
    policy = load_policy(_resolve_policy_file(cfg, policy_path), cfg.env) if name == "ppo" else None
    cases = load_cases(cfg)
    run_dir = _prepare_run_dir(cfg)
    report = build_report(name, _run_policy(cfg, name, cases, policy))
    write_json(run_dir / "report.json", report.to_dict())
    return run_dir / "report.json"


def parse_policy_list(text: str | Sequence[str]) -> list[str]:
    names = [n.strip() for n in text.split(",")] if isinstance(text, str) else list(text)
    names = [n for n in names if n]
    bad = [n for n in names if n not in POLICY_NAMES]
    if bad:
        raise ConfigError(f"unknown policy {bad[0]!r}; valid names: {', '.join(POLICY_NAMES)}")
    if len(names) < 2:
        raise ConfigError("compare needs at least two policy names")
    return names


def cmd_compare(cfg: RunConfig, names: Sequence[str], policy_path: str | None = None) -> Path:
    """Run each named scheduler on the shared case set and tabulate the differences."""
    validate_config(cfg)
    names = parse_policy_list(names)
    policy = load_policy(_resolve_policy_file(cfg, policy_path), cfg.env) if "ppo" in names else None
    cases = load_cases(cfg)
    run_dir = _prepare_run_dir(cfg)
    runs = {}
    for name in names:
        label, n = name, 2
        while label in runs:
            label, n = f"{name}-{n}", n + 1
        runs[label] = build_report(label, _run_policy(cfg, name, cases, policy, label))
    report = compare_report(runs)
    report["reports"] = {label: r.to_dict() for label, r in runs.items()}
    write_json(run_dir / "comparison.json", report)
    rows = comparison_rows(report)
    write_csv(run_dir / "comparison.csv", list(rows[0]), rows)
    return run_dir / "comparison.json"


def cmd_synth(profile: TraceProfile, count: int, seed: int, out: str | Path, duration_s: int = 300) -> list[Path]:
    """Write ``count`` paired ``mbs_XXX.csv`` / ``uav_XXX.csv`` traces."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = XorShift64Star(seed)
    written = []
    for k in range(count):
        for bs in ("mbs", "uav"):
            path = out / f"{bs}_{k:03d}.csv"
            save_trace(synth_trace(profile, duration_s, rng.next_u64(), bs), path)
            written.append(path)
    return written


def cmd_gradcheck(seed: int = 0, count: int = 20, perturb: float = 0.0, log=print) -> bool:
    results = run_all(seed, count, perturb)
    ok = True
    for suite in sorted({r.suite for r in results}):
        rs = [r for r in results if r.suite == suite]
        worst = max(rs, key=lambda r: r.rel_error)
        passed = all(r.passed for r in rs)
        ok &= passed
        log(f"{suite}: {'PASS' if passed else 'FAIL'} cases={len(rs)} max_rel_error={worst.rel_error:.3e} "
            f"(seed {worst.seed}, tolerance {TOLERANCE:g})")
    return ok


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="layerstream", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def run_flags(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output root directory")
        p.add_argument("--run-id", help="subdirectory under --out")
        p.add_argument("--workers", type=int, help="parallel rollout workers")
        p.add_argument("--manifest", action="append", help="video manifest JSON (repeatable)")
        p.add_argument("--traces", help="directory of mbs_*.csv / uav_*.csv pairs")

    p = sub.add_parser("train", help="train a scheduling policy")
    run_flags(p)
    p.add_argument("--updates", type=int, help="number of policy updates")

    p = sub.add_parser("eval", help="evaluate a trained policy or a baseline")
    run_flags(p)
    p.add_argument("--policy", help="policy JSON (default <out>/<run_id>/policy.json)")
    p.add_argument("--scheduler", default="ppo", help=f"one of {', '.join(POLICY_NAMES)}")

    p = sub.add_parser("compare", help="compare schedulers on the same cases")
    run_flags(p)
    p.add_argument("--policies", required=True, help="comma-separated scheduler names")
    p.add_argument("--policy", help="policy JSON used for 'ppo'")

    p = sub.add_parser("synth-traces", help="generate bimodal throughput traces")
    p.add_argument("--config", help="JSON file; its 'synth' block supplies defaults")
    p.add_argument("--count", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--mean-kbps", type=float)
    p.add_argument("--low-kbps", type=float)
    p.add_argument("--p-drop", type=float)
    p.add_argument("--dwell-s", type=int)
    p.add_argument("--duration-s", type=int)

    p = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20, help="random configurations per suite")
    p.add_argument("--inject-error", type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


SYNTH_DEFAULTS = {"count": 20, "seed": 0, "out": "traces", "mean_kbps": 10000.0, "low_kbps": 300.0,
                  "p_drop": 0.3, "dwell_s": 6, "duration_s": 300}


def _synth_settings(args) -> dict:
    settings = dict(SYNTH_DEFAULTS)
    if args.config:
        p = Path(args.config)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        block = json.loads(p.read_text(encoding="utf-8")).get("synth", {})
        unknown = sorted(set(block) - set(settings))
        if unknown:
            raise ConfigError(f"synth: unknown keys {unknown}")
        settings.update(block)
    for key in settings:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            ok = cmd_gradcheck(args.seed, args.count, args.inject_error)
            return EXIT_OK if ok else EXIT_RUNTIME
        if args.command == "synth-traces":
            s = _synth_settings(args)
            profile = TraceProfile(s["mean_kbps"], s["low_kbps"], s["p_drop"], s["dwell_s"])
            paths = cmd_synth(profile, s["count"], s["seed"], s["out"], s["duration_s"])
            print(f"wrote {len(paths)} traces to {s['out']}")
            return EXIT_OK
        cfg = apply_flags(load_config(args.config), args)
        if args.command == "train":
            print(f"policy written to {cmd_train(cfg)}")
        elif args.command == "eval":
            print(f"report written to {cmd_eval(cfg, args.policy, args.scheduler)}")
        elif args.command == "compare":
            print(f"comparison written to {cmd_compare(cfg, args.policies, args.policy)}")
        return EXIT_OK
    except CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
