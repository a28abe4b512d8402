import json
import time

import pytest

from layerstream.cli import RunConfig, config_from_dict, config_to_dict, main
from layerstream.manifest import save_manifest, synth_manifest


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_manifest(synth_manifest(4, seed=1), tmp_path / "m4.json")
    assert main(["synth-traces", "--count", "2", "--out", "tr", "--duration-s", "60", "--seed", "3"]) == 0
    cfg = {"manifests": ["m4.json"], "traces": "tr", "env": {"kbps_scale": 10000},
           "train": {"num_updates": 50, "steps_per_rollout": 128, "minibatch_size": 32, "hidden": [16, 16]},
           "run_id": "toy"}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    return tmp_path


def test_synth_traces(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["synth-traces", "--count", "3", "--out", "a", "--seed", "7", "--duration-s", "20"]) == 0
    assert main(["synth-traces", "--count", "3", "--out", "b", "--seed", "7", "--duration-s", "20"]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len(files) == 6
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    assert main(["synth-traces", "--count", "0"]) == 2


def test_train_writes_artifacts_and_is_reproducible(workspace):
    t0 = time.perf_counter()
    assert main(["train", "--config", "cfg.json"]) == 0
    assert time.perf_counter() - t0 < 60
    run = workspace / "out" / "toy"
    first = (run / "policy.json").read_bytes()
    header = (run / "train_metrics.csv").read_text().splitlines()
    assert header[0].startswith("update_idx,") and len(header) == 51
    assert main(["train", "--config", "cfg.json"]) == 0
    assert (run / "policy.json").read_bytes() == first
    assert main(["train", "--config", "cfg.json", "--seed", "1"]) == 0
    assert (run / "policy.json").read_bytes() != first


def test_effective_config_round_trips(workspace):
    assert main(["train", "--config", "cfg.json", "--updates", "1", "--workers", "2"]) == 0
    echoed = json.loads((workspace / "out" / "toy" / "effective_config.json").read_text())
    cfg = config_from_dict(echoed)
    assert cfg.train.workers == 2 and cfg.train.num_updates == 1
    assert config_to_dict(cfg) == echoed


def test_missing_trace_dir(workspace, capsys):
    assert main(["train", "--config", "cfg.json", "--traces", "nowhere"]) == 2
    assert "nowhere" in capsys.readouterr().err


def test_unknown_config_key(workspace):
    (workspace / "bad.json").write_text(json.dumps({"manifests": ["m4.json"], "traces": "tr", "learning": 1}))
    assert main(["train", "--config", "bad.json"]) == 2


def test_eval_is_deterministic(workspace):
    assert main(["train", "--config", "cfg.json", "--updates", "2"]) == 0
    assert main(["eval", "--config", "cfg.json"]) == 0
    run = workspace / "out" / "toy"
    first = (run / "report.json").read_bytes()
    eps = sorted(p.name for p in (run / "episodes").iterdir())
    assert len(eps) == 2
    assert main(["eval", "--config", "cfg.json"]) == 0
    assert (run / "report.json").read_bytes() == first
    ps = [p for _, p in json.loads(first)["reward_cdf"]]
    assert ps == sorted(ps)


def test_eval_rejects_mismatched_policy(workspace):
    assert main(["train", "--config", "cfg.json", "--updates", "1"]) == 0
    cfg = json.loads((workspace / "cfg.json").read_text())
    cfg["env"]["history_len"] = 3
    (workspace / "cfg3.json").write_text(json.dumps(cfg))
    assert main(["eval", "--config", "cfg3.json", "--policy", "out/toy/policy.json"]) == 2


def test_eval_empty_trace_dir(workspace):
    (workspace / "empty").mkdir()
    assert main(["eval", "--config", "cfg.json", "--traces", "empty", "--scheduler", "threshold"]) == 2


def test_compare(workspace):
    assert main(["train", "--config", "cfg.json", "--updates", "1"]) == 0
    assert main(["compare", "--config", "cfg.json", "--policies", "ppo,threshold"]) == 0
    rows = (workspace / "out" / "toy" / "comparison.csv").read_text().splitlines()[1:]
    assert len(rows) == 2 and {r.split(",")[1] for r in rows} == {"ppo", "threshold"}
    assert main(["compare", "--config", "cfg.json", "--policies", "threshold,threshold"]) == 0
    rep = json.loads((workspace / "out" / "toy" / "comparison.json").read_text())
    assert all(v == 0 for v in rep["deltas"][0]["overall"].values())


def test_compare_unknown_name(workspace, capsys):
    assert main(["compare", "--config", "cfg.json", "--policies", "nope"]) == 2
    err = capsys.readouterr().err
    assert "threshold" in err and "bl-only" in err


def test_analytic_mode(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    save_manifest(synth_manifest(4, seed=1), tmp_path / "m.json")
    cfg = {"manifests": ["m.json"], "channel": {"params": {"shadow_sigma_db": 3.0}, "count": 2, "duration_s": 30},
           "run_id": "an"}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["eval", "--config", "c.json", "--scheduler", "bl-only"]) == 0
    both = dict(cfg, traces="somewhere")
    (tmp_path / "both.json").write_text(json.dumps(both))
    assert main(["eval", "--config", "both.json", "--scheduler", "bl-only"]) == 2


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--count", "3"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 3 and "max_rel_error" in out
    assert main(["gradcheck", "--count", "2", "--inject-error", "0.01"]) == 1


def test_defaults():
    assert RunConfig().train.lr == 0.001 and RunConfig().env.buffer_capacity_s == 36.0
