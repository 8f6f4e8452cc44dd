"""Minimum-airtime routes, recomputed once per protocol iteration.

A centralised shortest-path search replaces on-demand route discovery; only
the route a discovery protocol would converge to matters here.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass


@dataclass(frozen=True)
class Route:
    flow: int
    nodes: tuple          # full node sequence, client to client
    links: tuple
    cost: float


def _weights(topology, model, assignment, active):
    """Backhaul link weights: coupled cost if ``active`` is given, else isolated."""
    if active is None:
        return {l.id: model.isolated_cost(l.id) for l in topology.backhaul_links}
    return {l.id: model.link_cost(l.id, assignment, active) for l in topology.backhaul_links}


def shortest_path(topology, src_ap: int, dst_ap: int, weight: dict):
    """(cost, node tuple) minimising cost, ties to the lexicographically smaller path."""
    if src_ap == dst_ap:
        return 0.0, (src_ap,)
    best = {}
    heap = [(0.0, (src_ap,))]
    while heap:
        c, path = heapq.heappop(heap)
        u = path[-1]
        if u in best:
            continue
        best[u] = (c, path)
        if u == dst_ap:
            return c, path
        for l in topology.backhaul_links_of(u):
            v = topology.links[l].other(u)
            w = weight[l]
            if v in best or w == float("inf"):
                continue
            heapq.heappush(heap, (c + w, path + (v,)))
    return None


def _access_cost(topology, model, assignment, active, link):
    if assignment is None or link not in assignment:
        return model.isolated_cost(link)
    return model.link_cost(link, assignment, active if active is not None else ())


def compute_routes(topology, assignment, flows, model, active=None) -> dict:
    """flow id -> Route (or None when unroutable).

    Backhaul weights use coupled costs with ``active`` as the set of busy links
    (normally the previous routes); with ``active=None`` isolated costs are used.
    """
    weight = _weights(topology, model, assignment, active)
    routes = {}
    cache = {}
    for fl in flows:
        s_ap = topology.serving_ap.get(fl.src, fl.src)
        d_ap = topology.serving_ap.get(fl.dst, fl.dst)
        key = (s_ap, d_ap)
        if key not in cache:
            cache[key] = shortest_path(topology, s_ap, d_ap, weight)
        res = cache[key]
        if res is None:
            routes[fl.id] = None
            continue
        bcost, bnodes = res
        nodes = list(bnodes)
        links = [topology.link_between(u, v) for u, v in zip(bnodes, bnodes[1:])]
        cost = bcost
        if fl.src != s_ap:
            l = topology.link_between(fl.src, s_ap)
            nodes.insert(0, fl.src)
            links.insert(0, l)
            cost = _access_cost(topology, model, assignment, active, l) + cost
        if fl.dst != d_ap:
            l = topology.link_between(d_ap, fl.dst)
            nodes.append(fl.dst)
            links.append(l)
            cost = cost + _access_cost(topology, model, assignment, active, l)
        if cost == float("inf"):
            routes[fl.id] = None      # an access hop cannot be decoded
            continue
        routes[fl.id] = Route(fl.id, tuple(nodes), tuple(links), cost)
    return routes


def route_cost(topology, route: Route, model, assignment, active) -> float:
    """Recompute a route's cost under the weighting compute_routes used."""
    w = _weights(topology, model, assignment, active)
    cost = 0.0
    for l in route.links:
        if topology.links[l].is_backhaul:
            cost += w[l]
        else:
            cost += _access_cost(topology, model, assignment, active, l)
    return cost


def active_links(routes) -> set:
    out = set()
    for r in routes.values():
        if r is not None:
            out.update(r.links)
    return out


def backhaul_hops(topology, route: Route):
    """(transmitter, receiver, link) for each backhaul hop of a route."""
    for (u, v), l in zip(zip(route.nodes, route.nodes[1:]), route.links):
        if topology.links[l].is_backhaul:
            yield u, v, l


def routes_through(routes, node: int, loads: dict | None = None, topology=None) -> list:
    """[(flow, load)] for flows whose route has ``node`` transmit on a backhaul hop."""
    out = []
    for fid in sorted(routes):
        r = routes[fid]
        if r is None:
            continue
        for i, u in enumerate(r.nodes[:-1]):
            if u != node:
                continue
            if topology is not None and not topology.links[r.links[i]].is_backhaul:
                continue
            out.append((fid, (loads or {}).get(fid, 0.0)))
            break
    return out
