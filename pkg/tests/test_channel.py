import numpy as np
import pytest

from layerstream.channel import (
    ChannelDomainError, ChannelParams, LinkGeometry, analytic_trace, link_rate_bps, path_loss_db, shadowing_samples,
    sinr,
)

P = ChannelParams()


@pytest.mark.parametrize("d,xi,expected", [(1.0, 0.0, 61.4), (100.0, 0.0, 101.4), (10.0, 3.6, 85.0)])
def test_path_loss(d, xi, expected):
    assert path_loss_db(LinkGeometry(d), P, xi) == pytest.approx(expected, abs=1e-12)


def test_short_distance_rejected():
    with pytest.raises(ChannelDomainError):
        LinkGeometry(0.5)


def test_sinr_examples():
    p = ChannelParams(tx_power_w=1.0, rb_bandwidth_hz=1e8, noise_psd_w_per_hz=1e-20)
    assert p.noise_power_w == pytest.approx(1e-12)
    assert sinr(p, 100.0) == pytest.approx(100.0, rel=1e-12)
    assert sinr(p, 120.0) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ChannelDomainError):
        ChannelParams(tx_power_w=0.0)


def test_link_rate():
    p = ChannelParams(rb_bandwidth_hz=1e6)
    assert link_rate_bps(p, 1.0) == pytest.approx(1e6)
    assert link_rate_bps(p, 3.0) == pytest.approx(2e6)
    assert link_rate_bps(p, 0.0) == 0.0
    with pytest.raises(ChannelDomainError):
        link_rate_bps(p, -0.1)


def test_analytic_trace_deterministic_rate():
    g = LinkGeometry(120.0)
    tr = analytic_trace(g, P, 20, seed=5)
    expected = link_rate_bps(P, sinr(P, path_loss_db(g, P))) / 1000
    assert np.allclose(tr.kbps, expected, rtol=0, atol=0)


def test_analytic_trace_shadowing():
    p = ChannelParams(shadow_sigma_db=4.0)
    g = LinkGeometry(120.0)
    assert analytic_trace(g, p, 50, seed=2) == analytic_trace(g, p, 50, seed=2)
    xi = shadowing_samples(p, 10_000, seed=3)
    assert abs(xi.mean()) < 0.15
    assert xi.std() == pytest.approx(4.0, rel=0.05)
