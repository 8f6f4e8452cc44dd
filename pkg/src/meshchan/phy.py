"""Log-distance propagation, SINR and the rate/frame-error abstraction.

Produces the per-(link, channel) rate and frame-error rate that the airtime
metric consumes.  Interference is summed in mW; dBm only at the edges.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

RATES = (6e6, 9e6, 12e6, 18e6, 24e6, 36e6, 48e6, 54e6)
SINR_THRESHOLDS = (6.0, 8.0, 10.0, 13.0, 16.0, 19.0, 22.0, 25.0)
FER_FLOOR = 0.01
FER_CEIL = 0.95


class Band(Enum):
    ACCESS = "access24"
    BACKHAUL = "backhaul5"


@dataclass(frozen=True)
class PropagationModel:
    access_exponent: float = 2.2
    backhaul_exponent: float = 2.0
    access_ref_loss: float = 40.0     # dB at 1 m, 2.4 GHz
    backhaul_ref_loss: float = 46.4   # dB at 1 m, 5 GHz
    noise_dbm: float = -95.0
    cs_threshold_dbm: float = -82.0

    def __post_init__(self):
        if min(self.access_exponent, self.backhaul_exponent) < 2.0:
            raise ValueError("path-loss exponent must be >= 2")

    def exponent(self, band: Band) -> float:
        return self.access_exponent if band is Band.ACCESS else self.backhaul_exponent

    def ref_loss(self, band: Band) -> float:
        return self.access_ref_loss if band is Band.ACCESS else self.backhaul_ref_loss

    def path_loss(self, distance: float, band: Band) -> float:
        if distance <= 0:
            raise ValueError("coincident transmitter and receiver")
        return self.ref_loss(band) + 10.0 * self.exponent(band) * math.log10(distance)


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw) if mw > 0 else -math.inf


def received_power(tx, rx, band: Band, model: PropagationModel = PropagationModel()) -> float:
    """Received power in dBm at node ``rx`` from node ``tx`` (objects with x, y, tx_power)."""
    d = math.hypot(tx.x - rx.x, tx.y - rx.y)
    return tx.tx_power - model.path_loss(d, band)


def sinr_db(signal_dbm: float, interferers_dbm=(), noise_dbm: float = -95.0) -> float:
    denom = dbm_to_mw(noise_dbm) + sum(dbm_to_mw(i) for i in interferers_dbm)
    return 10.0 * math.log10(dbm_to_mw(signal_dbm) / denom)


def rate_for_sinr(sinr: float) -> float | None:
    """Highest table rate whose threshold is met, or None when unusable."""
    best = None
    for rate, thr in zip(RATES, SINR_THRESHOLDS):
        if sinr >= thr:
            best = rate
    return best


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _raw_fer(sinr: float, threshold: float) -> float:
    e = 1.0 - _sigmoid((sinr - threshold + 3.0) / 1.5)
    return min(max(e, FER_FLOOR), FER_CEIL)


# Value the raw curve reaches at the top of each rate band; the envelope below
# never rises above these once a band has been passed.
_BAND_END_FER = tuple(_raw_fer(hi, lo) for lo, hi in zip(SINR_THRESHOLDS, SINR_THRESHOLDS[1:]))


def frame_error(sinr: float) -> float:
    """Frame-error rate at the rate chosen for ``sinr``.

    The per-rate sigmoid restarts at every rate step, so on its own it would
    drop when SINR falls across a threshold.  The returned value is its running
    minimum over lower SINR, which keeps it non-increasing in SINR.
    """
    if sinr < SINR_THRESHOLDS[0]:
        return FER_CEIL
    k = max(i for i, t in enumerate(SINR_THRESHOLDS) if sinr >= t)
    e = _raw_fer(sinr, SINR_THRESHOLDS[k])
    if k:
        e = min(e, min(_BAND_END_FER[:k]))
    return e


@dataclass(frozen=True)
class LinkChannelState:
    link: int
    channel: int
    rate: float | None     # bits/s; None marks an unusable link
    fer: float
    sinr: float            # dB
    interference: float    # mW

    @property
    def usable(self) -> bool:
        return self.rate is not None


def state_from_powers(link: int, channel: int, signal_dbm: float, interference_mw: float,
                      noise_dbm: float) -> LinkChannelState:
    sinr = 10.0 * math.log10(dbm_to_mw(signal_dbm) / (dbm_to_mw(noise_dbm) + interference_mw))
    rate = rate_for_sinr(sinr)
    fer = frame_error(sinr) if rate is not None else FER_CEIL
    return LinkChannelState(link, channel, rate, fer, sinr, interference_mw)


class Geometry:
    """Pairwise received powers and contention relations for one topology.

    Two links contend when any endpoint of one is inside the carrier-sense
    range of any endpoint of the other (both ends of a link transmit).
    Co-channel links outside that range count as interference instead.
    """

    def __init__(self, topology):
        self.topology = topology
        model = topology.propagation
        nodes = topology.nodes
        xy = np.array([[n.x, n.y] for n in nodes], dtype=float)
        power = np.array([n.tx_power for n in nodes], dtype=float)
        d = np.hypot(xy[:, None, 0] - xy[None, :, 0], xy[:, None, 1] - xy[None, :, 1])
        self.distance = d
        self.power_dbm = {}
        self.power_mw = {}
        with np.errstate(divide="ignore"):
            for band in Band:
                pl = model.ref_loss(band) + 10.0 * model.exponent(band) * np.log10(d)
                dbm = power[:, None] - pl
                np.fill_diagonal(dbm, np.inf)
                self.power_dbm[band] = dbm
                self.power_mw[band] = 10.0 ** (dbm / 10.0)
        self.noise_dbm = model.noise_dbm
        self.noise_mw = dbm_to_mw(model.noise_dbm)
        self.external_mw = {f: dbm_to_mw(v) for f, v in getattr(topology, "external_dbm", {}).items()}
        self.cs_dbm = model.cs_threshold_dbm

        links = topology.links
        self.contends: list[frozenset] = []
        for l in links:
            hear = self.power_dbm[l.band]
            near = set()
            for m in links:
                if m.band is not l.band:
                    continue
                if any(hear[x, y] >= self.cs_dbm for x in (l.a, l.b) for y in (m.a, m.b)):
                    near.add(m.id)
            self.contends.append(frozenset(near))
        # interference a link m injects at each endpoint y: strongest of its two ends
        self._inj: dict = {}

    def hears(self, x: int, y: int, band: Band) -> bool:
        return x != y and self.power_dbm[band][x, y] >= self.cs_dbm

    def injected(self, m: int, y: int) -> float:
        key = (m, y)
        v = self._inj.get(key)
        if v is None:
            link = self.topology.links[m]
            pw = self.power_mw[link.band]
            v = max(pw[link.a, y], pw[link.b, y])
            self._inj[key] = v
        return v

    def interference_mw(self, interferers, rx: int) -> float:
        """Aggregate interference at ``rx``.

        Links sharing an AP always contend with each other, so at most one of
        them is on the air: each group (keyed by its lowest-id endpoint, an AP)
        contributes its loudest member. Max per group, summed over groups,
        stays monotone in the interferer set.
        """
        groups = {}
        links = self.topology.links
        for m in interferers:
            v = self.injected(m, rx)
            k = min(links[m].a, links[m].b)
            if v > groups.get(k, 0.0):
                groups[k] = v
        return sum(groups[k] for k in sorted(groups))

    def signal_dbm(self, link_id: int, rx: int) -> float:
        link = self.topology.links[link_id]
        tx = link.b if rx == link.a else link.a
        return float(self.power_dbm[link.band][tx, rx])

    def direction_states(self, link_id: int, channel: int, interferers) -> tuple:
        """(a->b, b->a) states with ``interferers`` (link ids) active co-channel."""
        link = self.topology.links[link_id]
        out = []
        for rx in (link.b, link.a):
            i_mw = self.interference_mw(interferers, rx) + self.external_mw.get(channel, 0.0)
            out.append(state_from_powers(link_id, channel, self.signal_dbm(link_id, rx), i_mw,
                                         self.noise_dbm))
        return tuple(out)


def link_channel_state(topology, assignment, link_id: int, channel: int, active=None,
                       rx: int | None = None, geometry: Geometry | None = None) -> LinkChannelState:
    """State of ``link_id`` on ``channel`` given everyone else's channels.

    ``assignment`` maps link id -> channel.  ``active`` limits which other
    links transmit (default: every assigned link).  Co-channel links within
    carrier-sense range contend rather than interfere, so only the remaining
    co-channel links enter the SINR.  ``rx`` picks the receiving endpoint
    (default: the link's ``b`` end).
    """
    geo = geometry or Geometry(topology)
    link = topology.links[link_id]
    if rx is None:
        rx = link.b
    pool = assignment.keys() if active is None else active
    near = geo.contends[link_id]
    interferers = sorted(m for m in pool
                         if m != link_id and assignment.get(m) == channel and m not in near)
    i_mw = geo.interference_mw(interferers, rx) + geo.external_mw.get(channel, 0.0)
    return state_from_powers(link_id, channel, geo.signal_dbm(link_id, rx), i_mw, geo.noise_dbm)
