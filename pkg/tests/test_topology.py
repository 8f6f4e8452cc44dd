import itertools
import math

import pytest
from hypothesis import given, settings, strategies as st

from meshchan.config import ScenarioConfig
from meshchan.topology import (ConfigError, Direction, build_from_positions, build_topology,
                               grid_positions)


def test_deterministic_in_seed():
    cfg = ScenarioConfig(placement="random", n_aps=6, n_clients=12, arena_w=500, arena_h=500,
                         seed=4).validate()
    a, b = build_topology(cfg), build_topology(cfg)
    assert [(n.x, n.y) for n in a.nodes] == [(n.x, n.y) for n in b.nodes]
    assert a.links == b.links


def test_single_ap():
    top = build_from_positions([(50.0, 50.0)], [(60.0, 50.0), (40.0, 55.0)], backhaul_range=100)
    assert top.aps == [0] and not top.backhaul_links
    assert len(top.access_links) == 2
    assert top.clients_of(0) == [1, 2]


def test_ids_and_radios():
    cfg = ScenarioConfig(n_aps=4, n_clients=6, ap_spacing=200, arena_w=600, arena_h=600,
                         radios=3).validate()
    top = build_topology(cfg)
    assert top.aps == [0, 1, 2, 3] and top.clients == list(range(4, 10))
    for ap in top.aps:
        node = top.nodes[ap]
        ctl = node.radios_of(Direction.CONTROL)
        assert len(ctl) == 1 and ctl[0].current_channel == top.control_channel
        assert len(node.radios_of(Direction.OUT)) == 2 and len(node.radios_of(Direction.IN)) == 1
        assert bool(node.radios_of(Direction.ACCESS)) == bool(top.access_links_of(ap))
    for c in top.clients:
        assert len(top.nodes[c].radios) == 1


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 500), st.floats(0, 500)), min_size=2, max_size=8),
       st.floats(100, 400))
def test_backhaul_links_are_pairs_in_range(pos, rng_m):
    pairs = [(i, j) for i, j in itertools.combinations(range(len(pos)), 2)
             if math.dist(pos[i], pos[j]) <= rng_m]
    try:
        top = build_from_positions(pos, [], backhaul_range=rng_m)
    except ConfigError:
        return
    assert sorted((l.a, l.b) for l in top.backhaul_links) == pairs


def test_disconnected_rejected():
    with pytest.raises(ConfigError):
        build_from_positions([(0, 0), (1000, 0)], [], backhaul_range=100)


def test_bad_channel_count():
    with pytest.raises(ConfigError):
        build_from_positions([(0, 0), (50, 0)], [], backhaul_range=100, n_channels=5)


def test_grid_centred():
    pts = grid_positions(4, 100, (1000, 1000))
    assert pts == [(450, 450), (550, 450), (450, 550), (550, 550)]


def test_apply_assignment_time_shares():
    top = build_from_positions([(0, 0), (100, 0), (200, 0), (100, 100)], [], backhaul_range=150)
    hub = 1
    chans = {l: top.backhaul_channels[i] for i, l in enumerate(top.backhaul_links_of(hub))}
    for l in top.backhaul_links:
        chans.setdefault(l.id, top.backhaul_channels[0])
    top.apply_assignment(chans)
    data = [r.current_channel for r in top.nodes[hub].radios
            if r.direction in (Direction.IN, Direction.OUT)]
    assert len(set(data)) == 2
