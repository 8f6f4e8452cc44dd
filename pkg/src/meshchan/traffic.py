"""Flow demands, load measurement and the near-future load estimate."""
from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass, field
from enum import Enum

log = logging.getLogger(__name__)

TRACE_INTERVAL = 180.0
TRACE_HEADER = ("interval_start_s", "ap_id", "demand_bps")
VOIP_RATE = 64_000.0
VOIP_PACKET_BITS = 1280          # 160-byte payload
VOIP_PERIOD = 0.02


class TraceError(ValueError):
    pass


class DemandModel(Enum):
    SATURATED = "saturated"
    CBR = "cbr"
    TRACE = "trace"


@dataclass
class Flow:
    id: int
    src: int
    dst: int
    model: DemandModel = DemandModel.SATURATED
    packet_bits: int = 12000
    rate: float = 0.0                       # bits/s for CBR
    series: tuple = ()                      # ((start_s, bps), ...) for TRACE

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("flow endpoints must differ")
        if self.model is DemandModel.CBR and self.rate <= 0:
            raise ValueError("CBR rate must be positive")

    def demand_at(self, t: float) -> float:
        if self.model is DemandModel.CBR:
            return self.rate
        if self.model is DemandModel.TRACE:
            return demand_at(self.series, t)
        return float("inf")


@dataclass
class LoadSample:
    key: int                 # node or link id
    start: float
    duration: float
    offered: float           # bits
    served: float            # bits

    def __post_init__(self):
        if self.served > self.offered + 1e-9:
            raise ValueError("served bits exceed offered bits")


@dataclass
class LoadEstimate:
    current: float
    estimate: float


def current_load(samples, window: float, now: float | None = None) -> float:
    """Served bits over the trailing ``window`` seconds, per second."""
    if window <= 0:
        raise ValueError("window must be positive")
    samples = list(samples)
    if not samples:
        return 0.0
    end = now if now is not None else max(s.start + s.duration for s in samples)
    lo = end - window
    bits = 0.0
    for s in samples:
        a, b = max(s.start, lo), min(s.start + s.duration, end)
        if b > a and s.duration > 0:
            bits += s.served * (b - a) / s.duration
    return bits / window


def estimate_load(history, alpha: float = 0.3) -> float:
    """EWMA over per-interval averages, oldest first."""
    history = list(history)
    if not history:
        raise ValueError("need at least one interval")
    est = float(history[0])
    for x in history[1:]:
        est = alpha * x + (1 - alpha) * est
    return est


def demand_at(series, t: float) -> float:
    if not series:
        return 0.0
    starts = [s for s, _ in series]
    i = bisect.bisect_right(starts, t) - 1
    if i < 0:
        return 0.0
    start, bps = series[i]
    return bps if t < start + TRACE_INTERVAL else 0.0


def load_trace_ingest(path, ap_ids=None) -> dict:
    """Per-AP demand series {ap: ((start, bps), ...)} from a trace CSV."""
    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header is None:
            return {}
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceError(f"line 1: expected header {','.join(TRACE_HEADER)}")
        prev = None
        for lineno, row in enumerate(rows, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceError(f"line {lineno}: expected 3 fields, got {len(row)}")
            try:
                start, ap, bps = float(row[0]), row[1].strip(), float(row[2])
            except ValueError:
                raise TraceError(f"line {lineno}: non-numeric field") from None
            if start < 0 or bps < 0 or start % TRACE_INTERVAL:
                raise TraceError(f"line {lineno}: bad interval start or demand")
            ap_id = _ap_id(ap)
            if ap_id is None or (ap_ids is not None and ap_id not in ap_ids):
                raise TraceError(f"line {lineno}: unknown AP {ap!r}")
            key = (start, ap_id)
            if prev is not None and key <= prev:
                raise TraceError(f"line {lineno}: rows must be sorted by time then ap_id")
            prev = key
            out.setdefault(ap_id, []).append((start, bps))
    return {k: tuple(v) for k, v in out.items()}


def _ap_id(text: str):
    t = text[2:] if text.lower().startswith("ap") else text
    return int(t) if t.isdigit() else None


def saturated_flows(topology, rng, packet_bits: int = 12000) -> list:
    clients = list(topology.clients)
    order = rng.permutation(len(clients))
    flows = []
    for i in range(0, len(order) - 1, 2):
        src, dst = clients[order[i]], clients[order[i + 1]]
        flows.append(Flow(len(flows), src, dst, DemandModel.SATURATED, packet_bits))
    return flows


def voip_flows(topology, rng, sessions: int) -> list:
    clients = list(topology.clients)
    if len(clients) < 2 and sessions:
        raise ValueError("VoIP needs at least two clients")
    flows = []
    for _ in range(sessions):
        a, b = rng.choice(len(clients), size=2, replace=False)
        for s, d in ((clients[a], clients[b]), (clients[b], clients[a])):
            flows.append(Flow(len(flows), s, d, DemandModel.CBR, VOIP_PACKET_BITS, VOIP_RATE))
    return flows


def trace_flows(topology, series: dict, rng, packet_bits: int = 12000) -> list:
    """One flow per client towards a random other client, AP demand split evenly."""
    clients = list(topology.clients)
    flows = []
    if len(clients) < 2:
        return flows
    for ap in topology.aps:
        mine = topology.clients_of(ap)
        ap_series = series.get(ap, ())
        if not mine:
            continue
        share = tuple((s, bps / len(mine)) for s, bps in ap_series)
        for c in mine:
            others = [x for x in clients if x != c]
            dst = others[int(rng.integers(len(others)))]
            flows.append(Flow(len(flows), c, dst, DemandModel.TRACE, packet_bits, series=share))
    return flows


@dataclass
class LoadTracker:
    """Per-key served-bit counters, snapshotted once per measurement window."""
    window: float = 1.0
    counters: dict = field(default_factory=dict)
    last: dict = field(default_factory=dict)
    rates: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)

    def add(self, key, bits: float):
        self.counters[key] = self.counters.get(key, 0.0) + bits

    def roll(self):
        self.rates = {k: (v - self.last.get(k, 0.0)) / self.window
                      for k, v in self.counters.items()}
        self.last = dict(self.counters)

    def rate(self, key) -> float:
        return self.rates.get(key, 0.0)

    def record_interval(self, key, value: float):
        self.history.setdefault(key, []).append(value)

    def estimate(self, key, alpha: float = 0.3) -> float:
        h = self.history.get(key)
        return estimate_load(h, alpha) if h else 0.0
