import pytest
from hypothesis import given, settings, strategies as st

from meshchan.arachne import (XTC, Arachne, InvariantMonitor, Outcome, ProtocolConfig,
                              p1_access_select, p2a_build_priority_list, p2b_scan_channels,
                              p2c_assign_flows_to_radios, p2d_handshake, run_offline)
from meshchan.network import CostModel
from meshchan.policies import initial_random, make_engine, prepare
from meshchan.topology import build_from_positions
from meshchan.traffic import Flow


def test_priority_rank_value():
    (r,) = p2a_build_priority_list({0: (10.0, 5.0)})
    assert r.value == pytest.approx(8.0)


def test_priority_ties_by_id():
    ranks = p2a_build_priority_list({2: (8, 8), 1: (3, 3), 0: (8, 8)})
    assert [r.node for r in ranks] == [0, 2, 1]
    assert [r.node for r in p2a_build_priority_list({3: (0, 0), 1: (0, 0), 2: (0, 0)})] == [1, 2, 3]


def test_scan_sorted():
    assert [f for f, _ in p2b_scan_channels({1: 3.0, 2: 1.0, 3: 2.0})] == [2, 3, 1]


def test_p1_examples():
    costs = {1: 5.0, 6: 2.0, 11: 7.0}
    assert p1_access_select(1, (1, 6, 11), costs.get, threshold=10.0) == (1, False, {1: 5.0})
    f, scanned, seen = p1_access_select(1, (1, 6, 11), costs.get, threshold=1.0)
    assert (f, scanned, seen) == (6, True, costs)


def test_p1_hysteresis():
    costs = {1: 10.0, 6: 9.0, 11: 9.5}
    assert p1_access_select(1, (1, 6, 11), costs.get, 1.0, margin=0.2)[0] == 1
    assert p1_access_select(1, (1, 6, 11), costs.get, 1.0, margin=0.05)[0] == 6
    tie = {1: 4.0, 6: 4.0, 11: 4.0}
    assert p1_access_select(11, (1, 6, 11), tie.get, 1.0)[0] == 11


def test_p2c_examples():
    b = p2c_assign_flows_to_radios(0, [("a", 1.0), ("b", 2.0)], 3)
    assert b.radios == [["a"], ["b"], []] and not b.over_budget
    b = p2c_assign_flows_to_radios(0, [("x", 6), ("y", 3), ("z", 3)], 2)
    assert b.l_sh == 6 and b.radios == [["x"], ["y", "z"]] and not b.over_budget
    b = p2c_assign_flows_to_radios(0, [("x", 5), ("y", 5), ("z", 5)], 2)
    assert b.l_sh == 7.5 and b.over_budget and max(b.loads) == 10


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1e7), min_size=1, max_size=10), st.integers(1, 4))
def test_p2c_properties(loads, n_out):
    items = [(i, w) for i, w in enumerate(loads)]
    b = p2c_assign_flows_to_radios(0, items, n_out)
    placed = sorted(k for r in b.radios for k in r)
    assert placed == list(range(len(loads)))
    if not b.over_budget and len(loads) > n_out:
        assert max(b.loads) <= b.l_sh * (1 + 1e-9) + 1e-9
    assert b.spread <= max(loads) + 1e-6


CFG = ProtocolConfig()


def test_handshake_free_in_radio():
    locks = []
    res = p2d_handshake(0, 1, 7, 44, locks, 1, lambda f: 0.0, CFG)
    assert res.outcome is Outcome.SWITCHED and res.channel == 44 and locks == [44]


def test_handshake_xtc_picks_cheapest_advertised():
    locks = [40, 52]
    cost = {40: 4e-3, 52: 2e-3, 36: 0.0}
    res = p2d_handshake(0, 1, 7, 36, locks, 2, cost.get, CFG)
    assert res.outcome is Outcome.CONSTRAINED and res.channel == 52
    assert isinstance(res.messages[1], XTC) and res.advertised == (40, 52)


def test_handshake_timeout():
    res = p2d_handshake(0, 1, 7, 36, [], 1, lambda f: 0.0, CFG, silenced=True)
    assert res.outcome is Outcome.TIMED_OUT and res.channel is None
    assert len(res.messages) == CFG.retries + 1
    assert res.elapsed == pytest.approx(CFG.timeout * (CFG.retries + 1))


def test_xtc_nonempty():
    with pytest.raises(ValueError):
        XTC(0, 1, 2, ())


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(w1=0.7, w2=0.4)
    with pytest.raises(ValueError):
        ProtocolConfig(dwell=0)


def test_single_ap_converges_immediately():
    top = build_from_positions([(0, 0)], [(10, 0), (0, 12)], backhaul_range=100)
    model = CostModel(top)
    eng = Arachne(top, model, [Flow(0, 1, 2)], assignment=initial_random(top, 1))
    run = run_offline(eng)
    assert run.converged and run.iterations == 1
    assert run.state.changes == 0


def _line_engine(silenced=(), monitor=None):
    top = build_from_positions([(i * 150.0, 0.0) for i in range(5)], [], backhaul_range=200)
    model = CostModel(top)
    start = {l.id: top.backhaul_channels[0] for l in top.links}
    flows = [Flow(0, 0, 4), Flow(1, 4, 0)]
    return Arachne(top, model, flows, assignment=start, silenced=silenced, monitor=monitor)


def test_line_improves_and_keeps_invariants():
    mon = InvariantMonitor()
    eng = _line_engine(monitor=mon)
    before = eng.objective()
    run = run_offline(eng)
    assert run.converged and not mon.violations
    assert eng.objective() < before
    assert mon.handshakes > 0


def test_silenced_receivers_leave_channels():
    top_ids = range(5)
    eng = _line_engine(silenced=set(top_ids))
    start = dict(eng.assignment)
    run = run_offline(eng)
    assert run.assignment.channels == start
    assert any(e.action == "handshake_timed_out" for e in run.state.log)


def test_engine_deterministic(small_config):
    a = run_offline(make_engine(prepare(small_config)))
    b = run_offline(make_engine(prepare(small_config)))
    assert a.assignment.channels == b.assignment.channels
    assert [p.node for p in a.state.priority] == [p.node for p in b.state.priority]
    assert a.state.objective_trace == b.state.objective_trace


@pytest.mark.parametrize("seed", range(3))
def test_offline_invariants(small_config, seed):
    cfg = small_config.with_overrides(seed=seed + 10)
    mon = InvariantMonitor()
    run = run_offline(make_engine(prepare(cfg), monitor=mon))
    assert mon.violations == []
    assert run.iterations <= cfg.max_iterations
