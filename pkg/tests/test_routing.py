import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from meshchan.network import CostModel
from meshchan.routing import active_links, backhaul_hops, compute_routes, route_cost
from meshchan.topology import build_from_positions
from meshchan.traffic import Flow


def _random_top(seed):
    rng = np.random.default_rng(seed)
    while True:
        pos = [tuple(p) for p in rng.uniform(0, 600, size=(int(rng.integers(3, 9)), 2))]
        try:
            return build_from_positions(pos, [], backhaul_range=280.0)
        except ValueError:
            continue


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_matches_networkx(seed):
    top = _random_top(seed)
    model = CostModel(top)
    g = nx.Graph()
    for l in top.backhaul_links:
        g.add_edge(l.a, l.b, weight=model.isolated_cost(l.id))
    flows = [Flow(i, a, b) for i, (a, b) in enumerate(
        (a, b) for a in top.aps for b in top.aps if a != b)]
    routes = compute_routes(top, {}, flows, model)
    for fl in flows:
        r = routes[fl.id]
        want = nx.dijkstra_path_length(g, fl.src, fl.dst)
        assert r.cost == pytest.approx(want, rel=1e-12)
        assert r.nodes[0] == fl.src and r.nodes[-1] == fl.dst
        for (u, v), l in zip(zip(r.nodes, r.nodes[1:]), r.links):
            assert set(top.links[l].endpoints()) == {u, v}


def test_client_route_and_cost():
    top = build_from_positions([(0, 0), (200, 0), (400, 0)], [(10, 0), (390, 0)],
                               backhaul_range=250)
    model = CostModel(top)
    r = compute_routes(top, {}, [Flow(0, 3, 4)], model)[0]
    assert r.nodes == (3, 0, 1, 2, 4)
    assert len(list(backhaul_hops(top, r))) == 2
    assert r.cost == pytest.approx(route_cost(top, r, model, {}, None))
    assert active_links({0: r}) == set(r.links)


def test_coupled_weights_avoid_busy_channel():
    # square: two equal 2-hop paths from 0 to 3; putting 0-1 on a jammed channel
    top = build_from_positions([(0, 0), (200, 0), (0, 200), (200, 200)], [],
                               backhaul_range=210)
    top.external_dbm = {40: -60.0}
    model = CostModel(top)
    asg = {l.id: 36 for l in top.backhaul_links}
    asg[top.link_between(0, 1)] = 40
    r = compute_routes(top, asg, [Flow(0, 0, 3)], model, active=set())[0]
    assert r.nodes == (0, 2, 3)


def test_unroutable_is_none():
    top = build_from_positions([(0, 0), (200, 0)], [], backhaul_range=250)
    top.external_dbm = {36: -40.0}
    model = CostModel(top)
    asg = {0: 36}
    assert compute_routes(top, asg, [Flow(0, 0, 1)], model, active=set())[0] is None
    assert math.isinf(model.link_cost(0, asg, set()))
