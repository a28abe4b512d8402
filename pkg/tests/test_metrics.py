import pytest

from layerstream.evaluate import EpisodeLog, StepRecord, read_episode_csv, write_episode_csv
from layerstream.metrics import (
    IncompleteEpisodeError, build_report, cdf_points, compare_report, count_edges, episode_metrics, pairwise_delta,
)


def rec(step, action, seg, psnr, stall=0.0, q_el=0.0, done=False, reward=0.0):
    return StepRecord(step, float(step), action, seg, 0.5, 1.0, q_el, stall, psnr / 60.0, stall, 0, reward, False,
                      0.0, done)


def log(records, video="v", trace="t"):
    return EpisodeLog(video, trace, "p", records)


def test_constant_bl_quality():
    m = episode_metrics(log([rec(k, 0, k, 32.0, done=k == 3) for k in range(4)]))
    assert m.mean_psnr_db == pytest.approx(32.0, rel=1e-12)
    assert m.episode_len_steps == 4


def test_el_overrides_bl_and_stalls_sum():
    rs = [rec(0, 0, 0, 32.0, stall=0.3), rec(1, 0, 1, 30.0, stall=0.0), rec(2, 1, 1, 44.0, stall=1.2, q_el=0.5),
          rec(3, 0, 2, 31.0, done=True)]
    m = episode_metrics(log(rs))
    assert m.total_stall_s == pytest.approx(1.5, rel=1e-12)
    assert m.mean_psnr_db == pytest.approx((32 + 44 + 31) / 3, rel=1e-12)
    assert m.quality_variation_count == 2


def test_edges():
    assert count_edges([0, 1, 1, 0, 2]) == 3
    assert count_edges([0, 0]) == 0
    assert count_edges([]) == 0


def test_incomplete_log():
    with pytest.raises(IncompleteEpisodeError):
        episode_metrics(log([rec(0, 0, 0, 32.0)]))


def test_cdf():
    assert cdf_points([3, 1, 2]) == [(1, 1 / 3), (2, 2 / 3), (3, 1.0)]
    assert cdf_points([7.5]) == [(7.5, 1.0)]
    assert cdf_points([2, 2]) == [(2, 0.5), (2, 1.0)]
    with pytest.raises(ValueError):
        cdf_points([])


def test_pairwise_delta():
    a = {"mean_psnr_db": 34.0, "total_stall_s": 0.2, "quality_variation_count": 3.0, "total_reward": 5.0}
    b = {"mean_psnr_db": 32.0, "total_stall_s": 1.0, "quality_variation_count": 6.0, "total_reward": 4.0}
    d = pairwise_delta(a, b)
    assert d["psnr_db_delta"] == pytest.approx(2.0)
    assert d["stall_reduction_pct"] == pytest.approx(80.0)
    assert d["variation_reduction_pct"] == pytest.approx(50.0)
    same = pairwise_delta(a, a)
    assert all(v == 0 for v in same.values())


def _report(name, scale=1.0, traces=("t1", "t2")):
    logs = [log([rec(0, 0, 0, 30.0 * scale, stall=0.5), rec(1, 0, 1, 33.0, done=True, reward=scale)], "v", t)
            for t in traces]
    return build_report(name, logs)


def test_compare_report():
    r = compare_report({"a": _report("a"), "b": _report("b", 1.1)})
    assert r["runs"] == ["a", "b"]
    assert set(r["per_video"]["v"]) == {"a", "b"}
    ident = compare_report({"a": _report("a"), "b": _report("b")})
    assert all(v == 0 for v in ident["deltas"][0]["overall"].values())
    with pytest.raises(ValueError, match="different"):
        compare_report({"a": _report("a"), "b": _report("b", traces=("t1",))})


def test_report_cdf_non_decreasing():
    rep = _report("a").to_dict()
    xs = [x for x, _ in rep["reward_cdf"]]
    ps = [p for _, p in rep["reward_cdf"]]
    assert xs == sorted(xs) and ps == sorted(ps) and ps[-1] == 1.0


def test_episode_csv_roundtrip(tmp_path):
    lg = log([rec(0, 0, 0, 31.123456789, stall=0.1 + 0.2), rec(1, 1, 0, 44.0, q_el=0.25, done=True)])
    write_episode_csv(lg, tmp_path / "e.csv")
    back = read_episode_csv(tmp_path / "e.csv", "v", "t", "p")
    assert back.records == lg.records
