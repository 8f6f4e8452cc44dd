import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from meshchan.airtime import (AirtimeConfig, SaturationParams, airtime, attempt_rate,
                              collision_prob, contention_overhead, damped_fixed_point,
                              saturation, solve_fixed_point, throughput)


def test_spot_value_54mbps():
    c = airtime(AirtimeConfig(), 54e6, 0.0)
    # 1.25 ms + 8224 b / 54 Mb/s, by hand
    assert abs(c - (1.25e-3 + 8224 / 54e6)) < 1e-15
    assert abs(c - 1.4023e-3) <= 1e-6


def test_airtime_frame_errors_and_unusable():
    cfg = AirtimeConfig()
    assert airtime(cfg, 6e6, 0.5) == pytest.approx(2 * airtime(cfg, 6e6, 0.0))
    assert airtime(cfg, None, 0.0) == math.inf
    assert airtime(cfg, 54e6, 1.0) == math.inf


def test_attempt_rate_closed_form():
    p = SaturationParams()
    g = 0.3
    num = (1 - g ** (p.K + 1)) / (1 - g)
    den = p.b0 * (1 - (2 * g) ** (p.K + 1)) / (1 - 2 * g)
    assert attempt_rate(g, p) == pytest.approx(num / den, rel=1e-12)


@pytest.mark.parametrize("n", [2, 5, 10, 30, 100])
def test_fixed_point_matches_brentq(n):
    p = SaturationParams(n=n)
    g, _ = solve_fixed_point(p)
    ref = brentq(lambda x: x - collision_prob(attempt_rate(x, p), n), 0.0, 1.0, xtol=1e-15)
    assert abs(g - ref) < 1e-10


def test_single_station_has_no_collisions():
    g, b = solve_fixed_point(SaturationParams(n=1))
    assert g == 0.0
    assert b == pytest.approx(1 / 16)


def test_throughput_single_station_by_hand():
    p = SaturationParams(n=1)
    beta = 1 / 16
    tx = 12000 / 54e6 / 20e-6
    want = beta * 12000 / (1 + beta * (tx + 52)) / 20e-6
    assert throughput(p, beta) == pytest.approx(want, rel=1e-12)


def test_overhead_slot_bounds():
    vals = [saturation(SaturationParams(n=n)).overhead for n in range(2, 51)]
    assert 58 <= min(vals) and max(vals) <= 67
    assert contention_overhead(5) == pytest.approx(vals[3] * 20e-6)


def test_invalid_params():
    with pytest.raises(ValueError):
        SaturationParams(n=0)
    with pytest.raises(ValueError):
        SaturationParams(n=2, rates=(54e6,))
    with pytest.raises(ValueError):
        AirtimeConfig(overhead=0)


rates = st.sampled_from((6e6, 9e6, 12e6, 18e6, 24e6, 36e6, 48e6, 54e6))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 50), data=st.data())
def test_rho_is_packet_over_cell_throughput(n, data):
    rs = tuple(data.draw(st.lists(rates, min_size=n, max_size=n)))
    p = SaturationParams(n=n, rates=rs)
    s = saturation(p)
    assert abs(s.delay - p.packet_bits / s.throughput) / s.delay <= 1e-9


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 100))
def test_solvers_agree(n):
    p = SaturationParams(n=n)
    g1, _ = solve_fixed_point(p)
    g2, _ = damped_fixed_point(p)
    assert abs(g1 - g2) <= 1e-8
    assert 0 <= g1 < 1
    assert abs(g1 - collision_prob(attempt_rate(g1, p), n)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(r1=rates, r2=rates, e=st.floats(0, 0.9))
def test_airtime_monotone(r1, r2, e):
    cfg = AirtimeConfig()
    lo, hi = sorted((r1, r2))
    assert airtime(cfg, hi, e) <= airtime(cfg, lo, e)
    assert airtime(cfg, lo, e) >= airtime(cfg, lo, 0.0)
