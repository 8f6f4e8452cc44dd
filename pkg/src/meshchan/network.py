"""Link costs under a full channel assignment.

A link's coupled cost is its bidirectional airtime (SINR-degraded by
co-channel links outside carrier-sense range) scaled by

* the number of active co-channel links sharing its contention domain, and
* the radio pressure at its endpoints: an AP whose active backhaul links span
  more channels than it has backhaul radios has to time-share them.

Every term only grows when another link becomes active, so evaluating a
partial assignment with only its assigned links active gives a lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .airtime import AirtimeConfig, airtime
from .phy import Geometry, state_from_powers


@dataclass
class ChannelAssignment:
    channels: dict                          # link id -> channel
    objective: float | None = None
    fractional: dict | None = None          # link id -> {channel: weight}
    meta: dict = field(default_factory=dict)

    def __getitem__(self, link):
        return self.channels[link]

    def as_rows(self) -> list:
        return sorted(self.channels.items())


def access_channel_map(topology, per_ap: dict) -> dict:
    """Expand AP -> access channel into link -> channel for every access link."""
    out = {}
    for ap, ch in per_ap.items():
        for l in topology.access_links_of(ap):
            out[l] = ch
    return out


class CostModel:
    def __init__(self, topology, cfg: AirtimeConfig | None = None):
        self.topology = topology
        self.cfg = cfg or AirtimeConfig()
        self.geo = Geometry(topology)
        self._base: dict = {}
        self._iso: dict = {}

    # -- raw airtime -------------------------------------------------------
    def direction_states(self, link: int, channel: int, interferers: tuple):
        return self.geo.direction_states(link, channel, interferers)

    def base_cost(self, link: int, channel: int, interferers: tuple = ()) -> float:
        key = (link, channel, interferers)
        v = self._base.get(key)
        if v is None:
            up, down = self.geo.direction_states(link, channel, interferers)
            v = airtime(self.cfg, up.rate, up.fer) + airtime(self.cfg, down.rate, down.fer)
            self._base[key] = v
        return v

    def isolated_cost(self, link: int) -> float:
        v = self._iso.get(link)
        if v is None:
            v = self.base_cost(link, 0, ())
            self._iso[link] = v
        return v

    def interferers(self, link: int, channel: int, assignment: dict, active) -> tuple:
        near = self.geo.contends[link]
        band = self.topology.links[link].band
        links = self.topology.links
        return tuple(sorted(m for m in active if m != link and assignment.get(m) == channel
                            and m not in near and links[m].band is band))

    def contenders(self, link: int, channel: int, assignment: dict, active) -> int:
        n = 1
        for m in self.geo.contends[link]:
            if m != link and m in active and assignment.get(m) == channel:
                n += 1
        return n

    def radio_factor(self, link: int, channel: int, assignment: dict, active) -> float:
        lk = self.topology.links[link]
        if not lk.is_backhaul:
            return 1.0
        top = self.topology
        s = 1.0
        for x in (lk.a, lk.b):
            chans = {channel}
            for m in top.backhaul_links_of(x):
                if m != link and m in active and m in assignment:
                    chans.add(assignment[m])
            s = max(s, len(chans) / top.backhaul_radios)
        return s

    # -- coupled ------------------------------------------------------------
    def link_cost(self, link: int, assignment: dict, active, channel: int | None = None) -> float:
        """Coupled cost of ``link`` (optionally as if moved to ``channel``)."""
        f = assignment[link] if channel is None else channel
        base = self.base_cost(link, f, self.interferers(link, f, assignment, active))
        if math.isinf(base):
            return base
        return (base * self.contenders(link, f, assignment, active)
                * self.radio_factor(link, f, assignment, active))

    def path_cost(self, links, assignment: dict, active) -> float:
        return sum(self.link_cost(l, assignment, active) for l in links)

    def objective(self, paths, assignment: dict, active) -> float:
        """Largest path cost (min-max objective) over ``paths``."""
        cache = {}
        worst = 0.0
        for p in paths:
            tot = 0.0
            for l in p:
                c = cache.get(l)
                if c is None:
                    c = cache[l] = self.link_cost(l, assignment, active)
                tot += c
            worst = max(worst, tot)
        return worst

    def idle_top_rate_cost(self) -> float:
        return 2 * airtime(self.cfg, 54e6, 0.0)

    def link_state(self, link: int, assignment: dict, active, rx: int):
        """LinkChannelState seen at ``rx`` under the current assignment."""
        f = assignment[link]
        inter = self.interferers(link, f, assignment, active)
        i_mw = self.geo.interference_mw(inter, rx) + self.geo.external_mw.get(f, 0.0)
        return state_from_powers(link, f, self.geo.signal_dbm(link, rx), i_mw, self.geo.noise_dbm)
