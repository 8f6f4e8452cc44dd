import math

import pytest

from meshchan.airtime import SaturationParams, contention_overhead, saturation
from meshchan.config import ScenarioConfig
from meshchan.network import CostModel
from meshchan.phy import state_from_powers
from meshchan.routing import compute_routes
from meshchan.simkit import Simulator, run_scenario, service_time
from meshchan.topology import build_from_positions
from meshchan.traffic import DemandModel, Flow


def pairs():
    # two 40 m links 30 m apart: one contention domain
    top = build_from_positions([(0, 0), (40, 0), (0, 30), (40, 30)], [], backhaul_range=45)
    return top, CostModel(top)


def simulate(top, model, flows, chans, horizon=6.0):
    routes = compute_routes(top, chans, flows, model)
    sim = Simulator(top, model, flows, chans, routes, horizon=horizon, warmup=1.0)
    return sim.run(), sim


def theta(n, rate):
    return saturation(SaturationParams(n=n, rates=(rate,) * n)).throughput


def test_service_time_formula():
    s = state_from_powers(0, 36, -50.0, 0.0, -95.0)
    want = (2 * contention_overhead(2) + 2 * 12000 / 54e6) / (1 - s.fer)
    assert service_time(s, 2, 12000) == pytest.approx(want)
    bad = state_from_powers(0, 36, -94.0, 0.0, -95.0)
    assert service_time(bad, 1, 12000) == math.inf


def test_single_station_matches_saturation():
    top, model = pairs()
    a, b = top.link_between(0, 1), top.link_between(2, 3)
    chans = {l.id: 36 for l in top.links}
    rep, _ = simulate(top, model, [Flow(0, 0, 1)], chans)
    rate = model.link_state(a, chans, {a}, 1).rate
    assert rep.throughput == pytest.approx(theta(1, rate), rel=0.05)


def test_two_contenders_share_saturation_throughput():
    top, model = pairs()
    chans = {l.id: 36 for l in top.links}
    rep, _ = simulate(top, model, [Flow(0, 0, 1), Flow(1, 2, 3)], chans)
    a = top.link_between(0, 1)
    rate = model.link_state(a, chans, {a}, 1).rate
    assert rep.throughput == pytest.approx(theta(2, rate), rel=0.10)
    f0, f1 = rep.per_flow[0], rep.per_flow[1]
    assert f0 == pytest.approx(f1, rel=0.05)


def test_orthogonal_channels_double():
    top, model = pairs()
    same = {l.id: 36 for l in top.links}
    split = dict(same)
    split[top.link_between(2, 3)] = 40
    flows = [Flow(0, 0, 1), Flow(1, 2, 3)]
    one, _ = simulate(top, model, flows[:1], same)
    two, _ = simulate(top, model, flows, split)
    assert two.throughput == pytest.approx(2 * one.throughput, rel=0.02)


def test_zero_flows():
    top, model = pairs()
    rep, _ = simulate(top, model, [], {l.id: 36 for l in top.links})
    assert rep.throughput == 0 and rep.delivered_packets == 0 and rep.conservation_ok


def test_cbr_delivers_offered_rate():
    top, model = pairs()
    fl = [Flow(0, 0, 1, DemandModel.CBR, packet_bits=12000, rate=1.2e6)]
    rep, _ = simulate(top, model, fl, {l.id: 36 for l in top.links}, horizon=11.0)
    assert rep.throughput == pytest.approx(1.2e6, rel=0.03)
    assert rep.dropped_packets == 0


def test_conservation_and_total(small_config):
    res = run_scenario(small_config, policy="random")
    rep = res.report
    assert rep.conservation_ok
    assert rep.throughput == pytest.approx(sum(rep.per_flow.values()))
    assert rep.delivered_bits + rep.dropped_bits <= rep.offered_bits


@pytest.mark.parametrize("policy", ["arachne", "tree"])
def test_deterministic(small_config, policy):
    a = run_scenario(small_config, policy=policy)
    b = run_scenario(small_config, policy=policy)
    assert a.report.rows() == b.report.rows()
    assert [vars(e) for e in a.protocol_log] == [vars(e) for e in b.protocol_log]


def test_arachne_window_opens_after_convergence(small_config):
    res = run_scenario(small_config, policy="arachne")
    rep = res.report
    assert rep.converged
    assert rep.measure_start > 0 and rep.measure_end == small_config.horizon + rep.measure_start \
        - small_config.warmup or rep.measure_start < rep.measure_end


def test_arachne_beats_single_on_default():
    cfg = ScenarioConfig(horizon=15.0, warmup=5.0).validate()
    from meshchan.policies import prepare
    sc = prepare(cfg)
    a = run_scenario(cfg, sc, policy="arachne").report.throughput
    s = run_scenario(cfg, sc, policy="single").report.throughput
    assert a > s
