"""Discrete-event packet simulator with a mean-value MAC.

Each radio owns a FIFO queue.  A head-of-line packet is served for a
deterministic time derived from the saturation model: with n busy
co-channel radios in one contention domain, every one of them gets
n * rho(n) / (1 - e) per packet, so the domain as a whole delivers at the
model's aggregate throughput.  Frame errors are folded into that time;
packets whose every retry would fail are dropped through a deterministic
accumulator of e^(K+1).
"""
from __future__ import annotations

import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field

from .airtime import SaturationParams, contention_overhead
from .routing import active_links
from .traffic import VOIP_PERIOD, DemandModel, LoadTracker, TRACE_INTERVAL

log = logging.getLogger(__name__)

K_RETRIES = SaturationParams().K
COMPLETE, ARRIVAL, PROTO, ROLL = 0, 1, 2, 3


def service_time(state, n: int, packet_bits: float, contender_rates=None) -> float:
    """Per-packet service time for one of ``n`` busy co-channel contenders.

    ``state`` carries ``rate`` and ``fer``; ``contender_rates`` lists the
    rates of all n contenders (default: n copies of this link's rate).
    """
    if state.rate is None or state.fer >= 1:
        return math.inf
    rates = contender_rates if contender_rates is not None else [state.rate] * n
    if len(rates) != n:
        raise ValueError("need one rate per contender")
    tx = sum(packet_bits / r for r in rates)
    return (n * contention_overhead(n) + tx) / (1.0 - state.fer)


@dataclass
class MetricsReport:
    policy: str = ""
    seed: int = 0
    throughput: float = 0.0                # bits/s over the measurement window
    per_flow: dict = field(default_factory=dict)
    delay: float = 0.0                     # mean end-to-end, s
    delivered_bits: float = 0.0
    delivered_packets: int = 0
    dropped_bits: float = 0.0
    dropped_packets: int = 0
    drops_by_cause: dict = field(default_factory=dict)
    offered_bits: float = 0.0
    iterations: int = 0
    converged: bool = True
    objective_trace: list = field(default_factory=list)
    measure_start: float = 0.0
    measure_end: float = 0.0
    unroutable: int = 0
    conservation_ok: bool = True

    def rows(self) -> list:
        out = [("policy", self.policy), ("seed", self.seed),
               ("throughput_bps", f"{self.throughput:.6f}"),
               ("delay_s", f"{self.delay:.9f}"),
               ("delivered_bits", f"{self.delivered_bits:.0f}"),
               ("delivered_packets", self.delivered_packets),
               ("dropped_bits", f"{self.dropped_bits:.0f}"),
               ("dropped_packets", self.dropped_packets)]
        for cause in ("overflow", "channel", "unusable"):
            out.append((f"dropped_{cause}_packets", self.drops_by_cause.get(cause, 0)))
        out += [("offered_bits", f"{self.offered_bits:.0f}"),
                ("iterations", self.iterations), ("converged", int(self.converged)),
                ("unroutable_flows", self.unroutable),
                ("measure_start_s", f"{self.measure_start:.6f}"),
                ("measure_end_s", f"{self.measure_end:.6f}")]
        for i, v in enumerate(self.objective_trace):
            out.append((f"objective_iter_{i + 1}_s", f"{v:.9f}"))
        for fid in sorted(self.per_flow):
            out.append((f"flow_{fid}_throughput_bps", f"{self.per_flow[fid]:.6f}"))
        return out

    def summary(self) -> str:
        return (f"{self.policy}: {self.throughput / 1e6:.3f} Mb/s, delay {self.delay * 1e3:.2f} ms, "
                f"dropped {self.dropped_packets} pkts, iterations {self.iterations}")


class _Packet:
    __slots__ = ("flow", "born", "bits", "hop", "route", "seq")

    def __init__(self, flow, born, bits, route, seq):
        self.flow = flow
        self.born = born
        self.bits = bits
        self.hop = 0
        self.route = route
        self.seq = seq


class _Radio:
    __slots__ = ("key", "queue", "busy", "link", "channel", "txtime")

    def __init__(self, key):
        self.key = key
        self.queue = deque()
        self.busy = False
        self.link = -1
        self.channel = None
        self.txtime = 0.0


class Simulator:
    def __init__(self, topology, model, flows, channels: dict, routes: dict, *,
                 horizon: float, warmup: float, queue_capacity: int = 100, engine=None,
                 measure_after_convergence: bool = True, window: float = 1.0,
                 phase_rng=None, policy: str = "", seed: int = 0):
        self.top = topology
        self.model = model
        self.flows = {f.id: f for f in flows}
        self.channels = dict(channels)
        self.routes = dict(routes)
        self.horizon = horizon
        self.warmup = warmup
        self.cap = queue_capacity
        self.engine = engine
        self.after_conv = measure_after_convergence and engine is not None
        self.window = window
        self.policy = policy
        self.seed = seed
        self.t = 0.0
        self._heap = []
        self._seq = 0
        self._pseq = 0
        self.radios = {}
        self.busy = {}                  # channel -> set of busy radios
        self.rank = {}                  # AP -> {channel: radio index}
        self.state_cache = {}
        self.err_acc = {}
        self.tracker = LoadTracker(window)
        self.contends = model.geo.contends
        self.nb = topology.backhaul_radios
        self.measure_start = warmup
        self.measure_end = horizon
        if self.after_conv:
            # opened when the protocol stops (converged or out of iterations)
            self.measure_start = self.measure_end = math.inf
        self.t_converged = None if engine is not None else 0.0
        self.phase_rng = phase_rng
        # accounting
        self.offered_bits = 0.0
        self.delivered_total = 0.0
        self.dropped_total = 0.0
        self.win_bits = {}
        self.win_delay = 0.0
        self.win_pkts = 0
        self.win_drop_bits = 0.0
        self.win_drop_pkts = 0
        self.win_causes = {}
        self._refresh_static()

    # -- bookkeeping ----------------------------------------------------------------------
    def _push(self, t, kind, data):
        self._seq += 1
        heapq.heappush(self._heap, (t, self._seq, kind, data))

    def _refresh_static(self):
        self.active = frozenset(active_links(self.routes))
        self.state_cache = {}
        old = self.rank
        self.rank = {}
        for ap in self.top.aps:
            chans = sorted({self.channels[l] for l in self.top.backhaul_links_of(ap)
                            if l in self.active})
            self.rank[ap] = {f: i % self.nb for i, f in enumerate(chans)}
        return old

    def _radio(self, node, link):
        lk = self.top.links[link]
        if not lk.is_backhaul:
            key = (node, 0)
        else:
            idx = self.rank[node].get(self.channels[link])
            if idx is None:    # link not in the active set at commit time
                idx = len(self.rank[node]) % self.nb
            key = (node, 1 + idx)
        r = self.radios.get(key)
        if r is None:
            r = self.radios[key] = _Radio(key)
        return r

    def _state(self, link, tx):
        key = (link, tx)
        v = self.state_cache.get(key)
        if v is None:
            rx = self.top.links[link].other(tx)
            s = self.model.link_state(link, self.channels, self.active | {link}, rx)
            v = self.state_cache[key] = (s.rate, s.fer)
        return v

    def _in_window(self):
        return self.measure_start <= self.t <= self.measure_end

    def _drop(self, pkt, cause):
        self.dropped_total += pkt.bits
        if self._in_window():
            self.win_drop_bits += pkt.bits
            self.win_drop_pkts += 1
            self.win_causes[cause] = self.win_causes.get(cause, 0) + 1

    # -- traffic ---------------------------------------------------------------------------
    def _new_packet(self, fl):
        r = self.routes.get(fl.id)
        if r is None:
            return
        self._pseq += 1
        pkt = _Packet(fl.id, self.t, fl.packet_bits, r, self._pseq)
        self.offered_bits += pkt.bits
        self._enqueue(pkt)

    def _enqueue(self, pkt):
        node = pkt.route.nodes[pkt.hop]
        radio = self._radio(node, pkt.route.links[pkt.hop])
        if len(radio.queue) >= self.cap:
            self._drop(pkt, "overflow")
            return
        radio.queue.append(pkt)
        if not radio.busy:
            self._start(radio)

    def _start(self, radio):
        if radio.busy:
            return
        while radio.queue:
            pkt = radio.queue[0]
            link = pkt.route.links[pkt.hop]
            tx = pkt.route.nodes[pkt.hop]
            rate, fer = self._state(link, tx)
            if rate is None:
                radio.queue.popleft()
                self._drop(pkt, "unusable")
                if pkt.hop == 0 and self.flows[pkt.flow].model is DemandModel.SATURATED:
                    self._push(self.t + 0.01, ARRIVAL, self.flows[pkt.flow])
                continue
            f = self.channels[link]
            mine = pkt.bits / rate
            n = 1
            tx_sum = mine
            near = self.contends[link]
            group = self.busy.get(f)
            if group:
                for other in group:
                    if other.link in near:
                        n += 1
                        tx_sum += other.txtime
            dt = (n * contention_overhead(n) + tx_sum) / (1.0 - fer)
            radio.busy = True
            radio.link = link
            radio.channel = f
            radio.txtime = mine
            self.busy.setdefault(f, set()).add(radio)
            self._push(self.t + dt, COMPLETE, radio)
            return
        radio.busy = False

    def _complete(self, radio):
        self.busy[radio.channel].discard(radio)
        radio.busy = False
        pkt = radio.queue.popleft()
        link = pkt.route.links[pkt.hop]
        tx = pkt.route.nodes[pkt.hop]
        lk = self.top.links[link]
        if lk.is_backhaul:
            self.tracker.add(("link", tx, link), pkt.bits)
            self.tracker.add(("node", tx), pkt.bits)
        else:
            ap = lk.b
            self.tracker.add(("node", ap), pkt.bits)
        _, fer = self._state(link, tx)
        key = (link, tx)
        first = pkt.hop == 0
        acc = self.err_acc.get(key, 0.0) + fer ** (K_RETRIES + 1)
        if acc >= 1.0:
            self.err_acc[key] = acc - 1.0
            self._drop(pkt, "channel")
        else:
            self.err_acc[key] = acc
            if pkt.hop + 1 == len(pkt.route.links):
                self._deliver(pkt)
            else:
                pkt.hop += 1
                self._enqueue(pkt)
        fl = self.flows[pkt.flow]
        if first and fl.model is DemandModel.SATURATED:
            # the source keeps exactly one packet backlogged
            self._new_packet(fl)
        self._start(radio)

    def _deliver(self, pkt):
        self.delivered_total += pkt.bits
        if self._in_window():
            self.win_bits[pkt.flow] = self.win_bits.get(pkt.flow, 0.0) + pkt.bits
            self.win_pkts += 1
            self.win_delay += self.t - pkt.born

    def _arrival(self, fl):
        rate = fl.demand_at(self.t)
        if rate > 0:
            self._new_packet(fl)
            self._push(self.t + fl.packet_bits / rate, ARRIVAL, fl)
        else:
            nxt = (math.floor(self.t / TRACE_INTERVAL) + 1) * TRACE_INTERVAL
            if fl.series and nxt <= fl.series[-1][0]:
                self._push(nxt, ARRIVAL, fl)

    # -- protocol ---------------------------------------------------------------------------
    def _loads(self):
        tr = self.tracker
        loads = {a: tr.rate(("node", a)) for a in self.top.aps}
        link_loads = {}
        for key, v in tr.rates.items():
            if key[0] == "link":
                link_loads[(key[1], key[2])] = v
        return loads, link_loads

    def _proto(self, step):
        eng = self.engine
        kind = step[0]
        if kind == "begin":
            eng.now = self.t
            order = eng.begin_iteration(*self._loads())
            self._push(self.t + eng.cfg.latency, PROTO, ("token", order[0]) if order
                       else ("end",))
        elif kind == "token":
            node = step[1]
            eng.now = self.t
            res = eng.take_turn(node)
            self._push(self.t + res.duration, PROTO, ("commit", node))
        elif kind == "commit":
            node = step[1]
            eng.release(node)
            self._apply(eng.assignment, self.routes)
            nxt = eng.next_holder()
            if nxt is None:
                self._push(self.t, PROTO, ("end",))
            else:
                self._push(self.t + eng.cfg.latency, PROTO, ("token", nxt))
        elif kind == "end":
            done = eng.end_iteration()
            self._apply(eng.assignment, eng.routes)
            if done or eng.state.iteration >= eng.cfg.max_iterations:
                self.t_converged = self.t
                if self.after_conv:
                    span = self.horizon - self.warmup
                    self.measure_start = max(self.warmup, self.t)
                    self.measure_end = self.measure_start + span
            else:
                self._push(self.t, PROTO, ("begin",))

    def _apply(self, channels, routes):
        changed_links = {l for l, f in channels.items() if self.channels.get(l) != f}
        if not changed_links and routes is self.routes:
            return
        self.channels = dict(channels)
        self.routes = dict(routes)
        old_rank = self._refresh_static()
        for ap in self.top.aps:
            if old_rank.get(ap) == self.rank.get(ap):
                continue
            # re-bucket queued (not in service) packets onto the new radio layout
            held = []
            for i in range(1, self.nb + 1):
                r = self.radios.get((ap, i))
                if r is None:
                    continue
                keep = [r.queue.popleft()] if r.busy else []
                held.extend(r.queue)
                r.queue.clear()
                r.queue.extend(keep)
            for pkt in sorted(held, key=lambda p: p.seq):
                self._enqueue(pkt)

    # -- main loop --------------------------------------------------------------------------
    def run(self) -> MetricsReport:
        rng = self.phase_rng
        for fid in sorted(self.flows):
            fl = self.flows[fid]
            if self.routes.get(fid) is None:
                continue
            if fl.model is DemandModel.SATURATED:
                self._push(0.0, ARRIVAL, fl)
            else:
                phase = float(rng.uniform(0, VOIP_PERIOD)) if rng is not None else 0.0
                self._push(phase, ARRIVAL, fl)
        self._push(self.window, ROLL, None)
        if self.engine is not None:
            self._push(self.window, PROTO, ("begin",))
        while self._heap:
            t, _, kind, data = self._heap[0]
            if t > self.measure_end:
                break
            heapq.heappop(self._heap)
            self.t = t
            if kind == COMPLETE:
                self._complete(data)
            elif kind == ARRIVAL:
                if data.model is DemandModel.SATURATED:
                    self._new_packet(data)
                else:
                    self._arrival(data)
            elif kind == ROLL:
                self.tracker.roll()
                self._push(self.t + self.window, ROLL, None)
            else:
                self._proto(data)
        self.t = self.measure_end
        return self._report()

    def in_flight_bits(self) -> float:
        return sum(p.bits for r in self.radios.values() for p in r.queue)

    def _report(self) -> MetricsReport:
        span = self.measure_end - self.measure_start
        per_flow = {fid: self.win_bits.get(fid, 0.0) / span for fid in sorted(self.flows)}
        rep = MetricsReport(policy=self.policy, seed=self.seed)
        rep.per_flow = per_flow
        rep.throughput = sum(per_flow.values())
        rep.delivered_bits = sum(self.win_bits.values())
        rep.delivered_packets = self.win_pkts
        rep.delay = self.win_delay / self.win_pkts if self.win_pkts else 0.0
        rep.dropped_bits = self.win_drop_bits
        rep.dropped_packets = self.win_drop_pkts
        rep.drops_by_cause = dict(self.win_causes)
        rep.offered_bits = self.offered_bits
        rep.measure_start, rep.measure_end = self.measure_start, self.measure_end
        rep.unroutable = sum(1 for fid in self.flows if self.routes.get(fid) is None)
        if self.engine is not None:
            st = self.engine.state
            rep.iterations = st.iteration
            rep.converged = st.converged
            rep.objective_trace = list(st.objective_trace)
        balance = self.offered_bits - self.delivered_total - self.dropped_total \
            - self.in_flight_bits()
        rep.conservation_ok = abs(balance) < 1e-6
        return rep


@dataclass
class RunResult:
    report: MetricsReport
    assignment: dict
    routes: dict
    protocol_log: list
    engine: object = None


def run_scenario(config, scenario=None, monitor=None, policy: str | None = None) -> RunResult:
    """Simulate one (config, policy) pair; bit-identical for identical inputs."""
    import numpy as np

    from .policies import make_engine, prepare, static_assignment

    sc = scenario or prepare(config)
    pol = policy or config.policy
    engine = None
    if pol == "arachne":
        engine = make_engine(sc, monitor=monitor)
        channels, routes = engine.assignment, engine.routes
    else:
        asg, routes = static_assignment(pol, sc)
        channels = asg.channels
    sim = Simulator(sc.topology, sc.model, sc.flows, channels, routes,
                    horizon=config.horizon, warmup=config.warmup,
                    queue_capacity=config.queue_capacity, engine=engine,
                    measure_after_convergence=config.measure_after_convergence,
                    window=config.window, phase_rng=np.random.default_rng([config.seed, 2]),
                    policy=pol, seed=config.seed)
    rep = sim.run()
    if not rep.conservation_ok:
        log.error("bit conservation violated in %s run", pol)
    plog = engine.state.log if engine is not None else []
    return RunResult(rep, dict(sim.channels), dict(sim.routes), plog, engine)
