"""Scenario assembly and the channel policies selectable from the command line."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import baselines
from .arachne import Arachne, InvariantMonitor, ProtocolConfig, p1_access_select
from .network import ChannelAssignment, CostModel, access_channel_map
from .optimal import AllocationProblem, Mode, solve_branch_and_bound
from .routing import active_links, backhaul_hops, compute_routes
from .topology import build_topology
from .traffic import load_trace_ingest, saturated_flows, trace_flows, voip_flows

log = logging.getLogger(__name__)


@dataclass
class Scenario:
    config: object
    topology: object
    model: CostModel
    flows: list


def build_flows(config, topology) -> list:
    rng = np.random.default_rng([config.seed, 1])
    if config.traffic == "none":
        return []
    if config.traffic == "voip":
        return voip_flows(topology, rng, config.voip_sessions)
    if config.traffic == "trace":
        series = load_trace_ingest(config.trace_path, set(topology.aps))
        if not series:
            log.warning("empty trace %s, falling back to saturated traffic", config.trace_path)
            return saturated_flows(topology, rng, config.packet_bits)
        return trace_flows(topology, series, rng, config.packet_bits)
    return saturated_flows(topology, rng, config.packet_bits)


def prepare(config, topology=None, flows=None) -> Scenario:
    top = topology or build_topology(config)
    model = CostModel(top)
    fl = build_flows(config, top) if flows is None else flows
    return Scenario(config, top, model, fl)


def protocol_config(config) -> ProtocolConfig:
    return ProtocolConfig(w1=config.w1, w2=config.w2, threshold=config.threshold or None,
                          dwell=config.dwell, timeout=config.timeout, retries=config.retries,
                          max_iterations=config.max_iterations, latency=config.latency,
                          p1_margin=config.p1_margin)


def initial_random(topology, seed) -> dict:
    """Random start for every data radio (the protocol's initial condition)."""
    rng = np.random.default_rng([int(seed), 5])
    bh = topology.backhaul_channels
    chans = {l.id: bh[int(rng.integers(len(bh)))] for l in topology.backhaul_links}
    acc = topology.access_channels
    per_ap = {ap: acc[int(rng.integers(len(acc)))] for ap in topology.aps}
    chans.update(access_channel_map(topology, per_ap))
    return chans


def static_routes(sc: Scenario, channels: dict) -> dict:
    """Min-airtime routes for a fixed assignment: isolated pass, then one load-aware pass."""
    first = compute_routes(sc.topology, channels, sc.flows, sc.model, active=None)
    return compute_routes(sc.topology, channels, sc.flows, sc.model, active=active_links(first))


def converge_access(sc: Scenario, channels: dict, active, threshold: float, rounds: int = 10,
                    margin: float | None = None):
    """Repeat the access-level selection at every AP (id order) until nothing moves."""
    top = sc.topology
    margin = sc.config.p1_margin if margin is None else margin
    chans = dict(channels)
    for rnd in range(rounds):
        moved = False
        # same rule as the protocol: plain best response first, hysteresis after
        m = margin if rnd else 0.0
        for ap in top.aps:
            acc = top.access_links_of(ap)
            if not acc:
                continue
            live = [l for l in acc if l in active] or acc
            act = set(active) | set(live)

            def measure(f):
                tmp = dict(chans)
                for l in acc:
                    tmp[l] = f
                return sum(sc.model.link_cost(l, tmp, act) for l in live) / len(live)

            cur = chans[acc[0]]
            f, _, _ = p1_access_select(cur, top.access_channels, measure, threshold, margin=m)
            if f != cur:
                moved = True
                for l in acc:
                    chans[l] = f
        if not moved:
            break
    return chans


def optimal_problem(sc: Scenario, routes: dict, channels: dict) -> AllocationProblem:
    top = sc.topology
    paths = []
    for fid in sorted(routes):
        r = routes[fid]
        if r is None:
            continue
        p = tuple(l for _, _, l in backhaul_hops(top, r))
        if p and p not in paths:
            paths.append(p)
    context = {l: channels[l] for l in active_links(routes) if not top.links[l].is_backhaul}
    return AllocationProblem(paths, tuple(top.backhaul_channels), Mode.COUPLED,
                             model=sc.model, context=context)


def assign_optimal(sc: Scenario, node_limit: int = 200_000):
    """Exact min-max backhaul assignment on isolated-cost routes; access from converged P1."""
    top = sc.topology
    routes = compute_routes(top, {}, sc.flows, sc.model, active=None)
    act = active_links(routes)
    start = initial_random(top, sc.config.seed)
    threshold = sc.config.threshold or 3 * sc.model.idle_top_rate_cost()
    chans = converge_access(sc, start, act, threshold)
    prob = optimal_problem(sc, routes, chans)
    if prob.links:
        sol = solve_branch_and_bound(prob, node_limit)
        chans.update(sol.channels)
        objective = sol.objective
        nodes = sol.meta.get("nodes", 0)
    else:
        objective, nodes = 0.0, 0
    for l in top.backhaul_links:
        chans.setdefault(l.id, top.backhaul_channels[0])
        if l.id not in prob.links:
            chans[l.id] = top.backhaul_channels[0]
    return ChannelAssignment(chans, objective, meta={"policy": "optimal", "nodes": nodes}), routes


def static_assignment(policy: str, sc: Scenario):
    """(ChannelAssignment, routes) for a non-adaptive policy."""
    top = sc.topology
    cfg = sc.config
    if policy == "single":
        asg = baselines.assign_single_channel(top)
    elif policy == "random":
        asg = baselines.assign_random(top, cfg.seed)
    elif policy == "interference":
        asg = baselines.assign_interference_only(top, sc.model.geo)
    elif policy == "load-aware":
        iso = compute_routes(top, {}, sc.flows, sc.model, active=None)
        loads = baselines.offered_link_loads(top, iso, sc.flows)
        asg = baselines.assign_interference_only(top, sc.model.geo, loads)
    elif policy == "tree":
        asg = baselines.assign_tree_based(top)
    elif policy == "optimal":
        return assign_optimal(sc, cfg.node_limit)
    else:
        raise ValueError(f"not a static policy: {policy}")
    if policy in ("single", "tree"):
        # access level left to the P1 procedure, starting from its default channel
        first = static_routes(sc, asg.channels)
        threshold = cfg.threshold or 3 * sc.model.idle_top_rate_cost()
        asg.channels.update(converge_access(sc, asg.channels, active_links(first), threshold))
    return asg, static_routes(sc, asg.channels)


def make_engine(sc: Scenario, monitor: InvariantMonitor | None = None, silenced=()) -> Arachne:
    start = initial_random(sc.topology, sc.config.seed)
    return Arachne(sc.topology, sc.model, sc.flows, protocol_config(sc.config), start,
                   monitor=monitor, silenced=silenced)
