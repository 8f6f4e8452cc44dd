"""Comparison policies. Each returns a complete link -> channel ChannelAssignment.

Each link is a single channel shared by both endpoint radios, so sender and
receiver are co-channel by construction and no connectivity repair is needed.
"""
from __future__ import annotations

import math
from collections import deque

import numpy as np

from .network import ChannelAssignment, access_channel_map
from .phy import Band, Geometry


def _access_all(topology, ch: int) -> dict:
    return access_channel_map(topology, {ap: ch for ap in topology.aps})


def assign_single_channel(topology) -> ChannelAssignment:
    if not topology.backhaul_channels:
        raise ValueError("no backhaul channel")
    f = topology.backhaul_channels[0]
    chans = {l.id: f for l in topology.backhaul_links}
    chans.update(_access_all(topology, topology.access_channels[0]))
    return ChannelAssignment(chans, meta={"policy": "single"})


def assign_random(topology, seed) -> ChannelAssignment:
    rng = np.random.default_rng([int(seed), 11])
    bh = topology.backhaul_channels
    chans = {l.id: bh[int(rng.integers(len(bh)))] for l in topology.backhaul_links}
    acc = topology.access_channels
    per_ap = {ap: acc[int(rng.integers(len(acc)))] for ap in topology.aps}
    chans.update(access_channel_map(topology, per_ap))
    return ChannelAssignment(chans, meta={"policy": "random"})


def _greedy_min_power(items, channels, heard, background=None):
    """items in order; heard(item, other) -> mW; picks min aggregate power, lowest index on ties."""
    background = background or {}
    chosen = {}
    for it in items:
        best, best_p = None, math.inf
        for f in channels:
            p = background.get(f, 0.0) + sum(heard(it, o) for o, g in chosen.items() if g == f)
            if p < best_p:
                best, best_p = f, p
        chosen[it] = best
    return chosen


def assign_interference_only(topology, geometry=None, link_loads=None) -> ChannelAssignment:
    """Greedy: each link takes the channel with the least received co-channel power.

    Links go in id order, so how much traffic a link carries is ignored.  With
    ``link_loads`` (link -> bits/s) the heaviest links choose first instead,
    which is the load-aware variant of the same rule.  Power below the noise
    floor is treated as unheard.
    """
    geo = geometry or Geometry(topology)
    floor = geo.noise_mw

    def heard_links(l, m):
        lk = topology.links[l]
        return sum(v for v in (geo.injected(m, lk.a), geo.injected(m, lk.b)) if v >= floor)

    bh = [l.id for l in topology.backhaul_links]
    if link_loads is not None:
        bh.sort(key=lambda l: (-link_loads.get(l, 0.0), l))
    chans = _greedy_min_power(bh, topology.backhaul_channels, heard_links,
                              {f: 2 * v for f, v in geo.external_mw.items()})

    pw = geo.power_mw[Band.ACCESS]

    def heard_aps(a, b):
        v = pw[b, a]
        return v if v >= floor else 0.0

    aps = [a for a in topology.aps if topology.access_links_of(a)]
    per_ap = _greedy_min_power(aps, topology.access_channels, heard_aps)
    chans.update(access_channel_map(topology, per_ap))
    name = "interference" if link_loads is None else "load-aware"
    return ChannelAssignment(chans, meta={"policy": name})


def offered_link_loads(topology, routes, flows) -> dict:
    """Backhaul link -> offered bits/s of the flows routed over it (inf if saturated)."""
    demand = {f.id: f.demand_at(0.0) for f in flows}
    out = {}
    for fid, r in routes.items():
        if r is None:
            continue
        for l in r.links:
            if topology.links[l].is_backhaul:
                out[l] = out.get(l, 0.0) + demand.get(fid, 0.0)
    return out


def default_gateway(topology) -> int:
    cx, cy = topology.arena[0] / 2, topology.arena[1] / 2
    return min(topology.aps, key=lambda a: (math.hypot(topology.nodes[a].x - cx,
                                                       topology.nodes[a].y - cy), a))


def bfs_tree(topology, root: int) -> list:
    """Tree edges (link ids) in BFS discovery order; neighbours visited by id."""
    seen = {root}
    q = deque([root])
    edges = []
    while q:
        u = q.popleft()
        for v in topology.ap_neighbors(u):
            if v not in seen:
                seen.add(v)
                q.append(v)
                edges.append(topology.link_between(u, v))
    if len(seen) != len(topology.aps):
        raise ValueError("backhaul graph is disconnected")
    return edges


def assign_tree_based(topology, gateway: int | None = None) -> ChannelAssignment:
    """Spanning tree from the gateway; edges coloured top-down with the least-used
    channel among adjacent tree edges, then among tree edges two hops away."""
    gw = default_gateway(topology) if gateway is None else gateway
    tree = bfs_tree(topology, gw)
    links = topology.links
    chans = {}
    chan_idx = {f: i for i, f in enumerate(topology.backhaul_channels)}

    def tree_edges_at(n):
        return [l for l in topology.backhaul_links_of(n) if l in chans]

    for e in tree:
        a, b = links[e].a, links[e].b
        adj = set(tree_edges_at(a)) | set(tree_edges_at(b))
        far = set()
        for m in adj:
            for n in links[m].endpoints():
                far.update(tree_edges_at(n))
        far -= adj
        use1 = {f: 0 for f in topology.backhaul_channels}
        use2 = dict(use1)
        for m in adj:
            use1[chans[m]] += 1
        for m in far:
            use2[chans[m]] += 1
        chans[e] = min(topology.backhaul_channels, key=lambda f: (use1[f], use2[f], chan_idx[f]))

    in_tree = set(tree)
    for lk in topology.backhaul_links:
        if lk.id in in_tree:
            continue
        near = sorted(set(tree_edges_at(lk.a)) | set(tree_edges_at(lk.b)))
        near = [m for m in near if m in in_tree]
        chans[lk.id] = chans[near[0]] if near else topology.backhaul_channels[0]
    chans.update(_access_all(topology, topology.access_channels[0]))
    return ChannelAssignment(chans, meta={"policy": "tree", "gateway": gw, "tree": tree})
