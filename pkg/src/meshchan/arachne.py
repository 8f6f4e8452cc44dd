"""End-to-end channel selection protocol.

Access level (P1): an AP whose average client airtime cost exceeds a threshold
dwells on every access channel and moves its cell to the cheapest one.

Backhaul (P2): APs take turns in priority order (a good-to-go token walks the
list).  The token holder splits its outgoing links over its OUT radios, scans
all backhaul channels for each radio's cumulative cost, and negotiates the
switch with each next hop (RTC, answered by CTC or by XTC listing the IN
channels the receiver already committed to this round).  Rounds repeat with
fresh routes until one produces no backhaul channel change.

The engine is timing-agnostic: ``take_turn`` applies a node's decisions and
returns how long they take.  ``run_offline`` drives it without traffic;
``simkit`` drives it on the simulated clock.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .network import ChannelAssignment
from .routing import active_links, backhaul_hops, compute_routes
from .traffic import DemandModel, estimate_load

EPS = 1e-12


@dataclass
class ProtocolConfig:
    w1: float = 0.6
    w2: float = 0.4
    threshold: float | None = None   # s; None -> 3x idle cost at top rate
    dwell: float = 0.1               # s per scanned channel
    timeout: float = 0.01            # RTC retransmission timer
    retries: int = 3
    max_iterations: int = 20
    control_channel: int = 165
    latency: float = 0.002           # control-channel delivery
    alpha: float = 0.3               # EWMA weight for the load estimate
    p1_margin: float = 0.2           # relative gain needed for an access switch

    def __post_init__(self):
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ValueError("w1 + w2 must be 1")
        if self.dwell <= 0 or self.timeout <= 0:
            raise ValueError("dwell and timeout must be positive")
        if not 0.0 <= self.p1_margin < 1.0:
            raise ValueError("p1_margin must lie in [0, 1)")
        if self.retries < 0 or self.max_iterations < 1:
            raise ValueError("retries >= 0 and max_iterations >= 1 required")


@dataclass(frozen=True)
class PriorityRank:
    node: int
    value: float


# control messages ------------------------------------------------------------
@dataclass(frozen=True)
class LABA:
    ap: int
    clients: tuple
    rank: float


@dataclass(frozen=True)
class RTC:
    sender: int
    receiver: int
    link: int
    channel: int


@dataclass(frozen=True)
class CTC:
    sender: int
    receiver: int
    link: int


@dataclass(frozen=True)
class XTC:
    sender: int
    receiver: int
    link: int
    channels: tuple

    def __post_init__(self):
        if not self.channels:
            raise ValueError("XTC must list at least one channel")


@dataclass(frozen=True)
class GoodToGo:
    sender: int
    next: int | None


class Outcome(Enum):
    SWITCHED = "switched"
    CONSTRAINED = "constrained"
    TIMED_OUT = "timed_out"


@dataclass(frozen=True)
class HandshakeResult:
    outcome: Outcome
    channel: int | None
    elapsed: float
    messages: tuple
    advertised: tuple = ()


@dataclass
class InterfaceBudget:
    node: int
    n_out: int
    l_sh: float
    radios: list          # per OUT radio: list of item keys
    loads: list           # per OUT radio: summed load
    over_budget: bool = False

    @property
    def spread(self) -> float:
        return max(self.loads) - min(self.loads) if self.loads else 0.0


@dataclass
class LogEntry:
    iteration: int
    time: float
    node: int
    action: str
    target: str
    channel_before: str
    channel_after: str
    cost_before: float
    cost_after: float


@dataclass
class ProtocolState:
    iteration: int = 0
    priority: list = field(default_factory=list)
    position: int = -1
    token: int | None = None
    in_locks: dict = field(default_factory=dict)     # node -> IN channels taken this round
    changes: int = 0                                 # all channel changes this round
    backhaul_changes: int = 0                        # P2 only; decides convergence
    converged: bool = False
    history: dict = field(default_factory=dict)      # node -> per-round L_crnt
    estimates: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)        # node -> L_crnt
    link_loads: dict = field(default_factory=dict)   # (node, link) -> bits/s sent
    objective_trace: list = field(default_factory=list)
    iteration_changes: list = field(default_factory=list)
    log: list = field(default_factory=list)
    messages: int = 0


# step functions ----------------------------------------------------------------
def p1_access_select(current: int, channels, measure, threshold: float,
                     current_cost: float | None = None, margin: float = 0.0):
    """(channel, scanned, costs).  ``measure(f)`` is the average client cost on f.

    After a scan the cell only moves when the best channel undercuts the
    current one by more than ``margin`` (relative); plain best response can
    cycle between neighbouring cells.
    """
    cur = measure(current) if current_cost is None else current_cost
    if math.isnan(cur) or cur <= threshold:
        return current, False, {current: cur}
    costs = {f: measure(f) for f in channels}
    best = min(channels, key=lambda f: (costs[f], f))
    if current in costs and not costs[best] < costs[current] * (1.0 - margin):
        best = current
    return best, True, costs


def p2a_build_priority_list(loads: dict, w1: float = 0.6, w2: float = 0.4) -> list:
    """``loads``: node -> (L_crnt, L_est).  Descending rank, ties by node id."""
    ranks = [PriorityRank(n, w1 * cur + w2 * est) for n, (cur, est) in loads.items()]
    return sorted(ranks, key=lambda r: (-r.value, r.node))


def p2b_scan_channels(costs: dict) -> list:
    return sorted(costs.items(), key=lambda kv: (kv[1], kv[0]))


def p2c_assign_flows_to_radios(node: int, items, n_out: int,
                               l_crnt: float | None = None) -> InterfaceBudget:
    """Pack (key, load) items onto OUT radios.

    Up to ``n_out`` items get a radio each.  Beyond that, first-fit decreasing
    under the cap L_sh = L_crnt / n_out; an item that fits nowhere goes to the
    least-loaded radio and the budget is flagged.
    """
    if n_out < 1:
        raise ValueError("need at least one OUT radio")
    items = sorted(items, key=lambda kv: kv[0])
    total = sum(w for _, w in items)
    l_sh = (total if l_crnt is None else l_crnt) / n_out
    radios = [[] for _ in range(n_out)]
    loads = [0.0] * n_out
    if len(items) <= n_out:
        for i, (k, w) in enumerate(items):
            radios[i].append(k)
            loads[i] += w
        return InterfaceBudget(node, n_out, l_sh, radios, loads, False)
    flagged = False
    tol = 1e-9 * max(l_sh, 1.0)
    for k, w in sorted(items, key=lambda kv: (-kv[1], kv[0])):
        slot = next((i for i in range(n_out) if loads[i] + w <= l_sh + tol), None)
        if slot is None:
            slot = min(range(n_out), key=lambda i: (loads[i], i))
            flagged = True
        radios[slot].append(k)
        loads[slot] += w
    return InterfaceBudget(node, n_out, l_sh, radios, loads, flagged)


def p2d_handshake(sender: int, receiver: int, link: int, proposed: int, locks: list,
                  n_in: int, cost_of, cfg: ProtocolConfig,
                  silenced: bool = False) -> HandshakeResult:
    """RTC/CTC/XTC exchange.  ``locks`` (receiver's IN channels this round) is updated."""
    rtc = RTC(sender, receiver, link, proposed)
    if silenced:
        msgs = (rtc,) * (cfg.retries + 1)
        return HandshakeResult(Outcome.TIMED_OUT, None, cfg.timeout * (cfg.retries + 1), msgs)
    if proposed in locks or len(locks) < n_in:
        if proposed not in locks:
            locks.append(proposed)
        return HandshakeResult(Outcome.SWITCHED, proposed, 2 * cfg.latency,
                               (rtc, CTC(receiver, sender, link)))
    xtc = XTC(receiver, sender, link, tuple(locks))
    pick = min(xtc.channels, key=lambda f: (cost_of(f), f))
    return HandshakeResult(Outcome.CONSTRAINED, pick, 2 * cfg.latency, (rtc, xtc), xtc.channels)


# invariant monitor ------------------------------------------------------------------
@dataclass
class InvariantMonitor:
    violations: list = field(default_factory=list)
    holder: int | None = None
    expected: list = field(default_factory=list)
    order: list = field(default_factory=list)
    handshakes: int = 0
    checks: int = 0

    def _fail(self, kind, detail):
        self.violations.append((kind, detail))

    def iteration_started(self, priority):
        self.expected = [p.node for p in priority]
        self.order = []

    def acquire(self, node):
        if self.holder is not None:
            self._fail("token", f"{node} scanned while {self.holder} held the token")
        self.holder = node
        self.order.append(node)

    def release(self, node):
        if self.holder != node:
            self._fail("token", f"{node} released a token held by {self.holder}")
        self.holder = None

    def iteration_ended(self):
        if self.order != self.expected:
            self._fail("token", f"scan order {self.order} != priority {self.expected}")

    def handshake(self, result: HandshakeResult, engine):
        self.handshakes += 1
        if result.outcome is Outcome.CONSTRAINED and result.channel not in result.advertised:
            self._fail("xtc", f"picked {result.channel} outside {result.advertised}")
        self.connectivity(engine)

    def connectivity(self, engine):
        self.checks += 1
        top = engine.topology
        asg = engine.assignment
        for l in engine.routed_backhaul():
            f = asg.get(l)
            if f not in top.backhaul_channels:
                self._fail("connectivity", f"link {l} on {f}")
        top.apply_assignment(asg)
        for ap in top.aps:
            for r in top.nodes[ap].radios:
                if r.direction.value == "control" and r.current_channel != top.control_channel:
                    self._fail("connectivity", f"control radio of {ap} moved")

    def local(self, node, before, after):
        if after > before + EPS * max(1.0, abs(before)):
            self._fail("local", f"node {node}: {before} -> {after}")

    def objective(self, node, before, after):
        if after > before + EPS * max(1.0, abs(before)):
            self._fail("objective", f"node {node}: {before} -> {after}")


# engine ---------------------------------------------------------------------------------
@dataclass
class TurnResult:
    node: int
    duration: float
    changed: int


def _below(a: float, b: float) -> bool:
    """a strictly below b by more than rounding; anything finite beats inf."""
    if b == math.inf:
        return a < math.inf
    return a < b - EPS * max(1.0, b)


def _not_above(a: float, b: float) -> bool:
    return b == math.inf or a <= b + EPS * max(1.0, b)


class Arachne:
    def __init__(self, topology, model, flows, cfg: ProtocolConfig | None = None,
                 assignment: dict | None = None, routes: dict | None = None,
                 silenced=(), monitor: InvariantMonitor | None = None):
        self.topology = topology
        self.model = model
        self.flows = list(flows)
        self.cfg = cfg or ProtocolConfig()
        self.assignment = dict(assignment or {})
        missing = [l.id for l in topology.links if l.id not in self.assignment]
        if missing:
            raise ValueError(f"initial assignment misses links {missing[:5]}")
        self.routes = routes if routes is not None else self._route(None)
        self.silenced = set(silenced)
        self.monitor = monitor
        self.state = ProtocolState()
        self.threshold = self.cfg.threshold or 3 * model.idle_top_rate_cost()
        self.n_out = math.ceil(topology.backhaul_radios / 2)
        self.n_in = topology.backhaul_radios - self.n_out
        self.now = 0.0
        self._refresh_routes_cache()

    def _route(self, active):
        """Min-airtime routes; a flow with no usable path keeps its isolated-cost route
        so the links that broke it stay on their owners' scan lists."""
        routes = compute_routes(self.topology, self.assignment, self.flows, self.model, active)
        if any(r is None for r in routes.values()):
            iso = compute_routes(self.topology, {}, self.flows, self.model, None)
            for fid, r in routes.items():
                if r is None:
                    routes[fid] = iso.get(fid)
        return routes

    # -- views ----------------------------------------------------------------------------
    def _refresh_routes_cache(self):
        self.active = frozenset(active_links(self.routes))
        self._bh_paths = []
        self._hops = {}     # (tx, link) -> list of flows
        for fid, r in sorted(self.routes.items()):
            if r is None:
                continue
            path = []
            for u, v, l in backhaul_hops(self.topology, r):
                path.append(l)
                self._hops.setdefault((u, l), []).append(fid)
            self._bh_paths.append(tuple(path))

    def routed_backhaul(self) -> list:
        return sorted(l for l in self.active if self.topology.links[l].is_backhaul)

    def objective(self, assignment: dict | None = None) -> float:
        """Worst backhaul path cost over current routes."""
        asg = self.assignment if assignment is None else assignment
        return self.model.objective(self._bh_paths, asg, self.active)

    def _link_cost(self, l, asg=None, channel=None):
        return self.model.link_cost(l, self.assignment if asg is None else asg, self.active, channel)

    def owners(self) -> dict:
        """Routed backhaul link -> transmitting endpoint that controls its channel."""
        rank = {p.node: i for i, p in enumerate(self.state.priority)}
        loads = self.state.link_loads
        out = {}
        for l in self.routed_backhaul():
            lk = self.topology.links[l]
            users = [x for x in lk.endpoints() if (x, l) in self._hops]
            if len(users) == 1:
                out[l] = users[0]
                continue
            la, lb = loads.get((lk.a, l), 0.0), loads.get((lk.b, l), 0.0)
            if la != lb:
                out[l] = lk.a if la > lb else lk.b
            else:
                out[l] = min(lk.endpoints(), key=lambda x: (rank.get(x, math.inf), x))
        return out

    # -- rounds ---------------------------------------------------------------------------
    def begin_iteration(self, loads: dict | None = None, link_loads: dict | None = None) -> list:
        """Start a round.  ``loads``: AP -> L_crnt; ``link_loads``: (AP, link) -> bits/s."""
        st = self.state
        if loads is None or link_loads is None:
            loads, link_loads = nominal_loads(self)
        st.iteration += 1
        st.changes = 0
        st.backhaul_changes = 0
        st.loads = {a: loads.get(a, 0.0) for a in self.topology.aps}
        st.link_loads = dict(link_loads)
        for a in self.topology.aps:
            st.history.setdefault(a, []).append(st.loads[a])
            st.estimates[a] = estimate_load(st.history[a], self.cfg.alpha)
        st.priority = p2a_build_priority_list(
            {a: (st.loads[a], st.estimates[a]) for a in self.topology.aps},
            self.cfg.w1, self.cfg.w2)
        laba = [LABA(p.node, tuple(self.topology.clients_of(p.node)), p.value)
                for p in st.priority]
        st.messages += len(laba)
        st.in_locks = {a: [] for a in self.topology.aps}
        st.position = -1
        st.objective_trace.append(self.objective())
        if self.monitor:
            self.monitor.iteration_started(st.priority)
        return [p.node for p in st.priority]

    def next_holder(self) -> int | None:
        st = self.state
        if st.position + 1 >= len(st.priority):
            return None
        return st.priority[st.position + 1].node

    def take_turn(self, node: int) -> TurnResult:
        st = self.state
        st.position += 1
        if st.priority[st.position].node != node:
            raise RuntimeError(f"token out of order: {node}")
        st.token = node
        if self.monitor:
            self.monitor.acquire(node)
        before = st.changes
        dur = self._p1(node)
        dur += self._p2(node)
        st.messages += 1   # good-to-go
        return TurnResult(node, dur, st.changes - before)

    def release(self, node: int):
        self.state.token = None
        if self.monitor:
            self.monitor.release(node)

    def end_iteration(self) -> bool:
        st = self.state
        if self.monitor:
            self.monitor.iteration_ended()
        st.iteration_changes.append(st.changes)
        self.routes = self._route(self.active)
        self._refresh_routes_cache()
        # P1 keeps running on its own channel set; the loop is over P2's choices
        st.converged = st.backhaul_changes == 0
        return st.converged

    # -- access level ---------------------------------------------------------------------
    def _p1(self, ap: int) -> float:
        acc = self.topology.access_links_of(ap)
        if not acc:
            return 0.0
        live = [l for l in acc if l in self.active] or acc
        active = self.active | set(live)
        current = self.assignment[acc[0]]

        def measure(f):
            tmp = dict(self.assignment)
            for l in acc:
                tmp[l] = f
            return sum(self.model.link_cost(l, tmp, active) for l in live) / len(live)

        cur_cost = measure(current)
        f, scanned, costs = p1_access_select(current, self.topology.access_channels, measure,
                                             self.threshold, cur_cost,
                                             self.cfg.p1_margin if self.state.iteration > 1 else 0.0)
        dur = len(self.topology.access_channels) * self.cfg.dwell if scanned else 0.0
        if f != current:
            for l in acc:
                self.assignment[l] = f
            self.state.changes += 1
            action = "p1_switch"
        else:
            action = "p1_scan_stay" if scanned else "p1_keep"
        self._log(ap, action, "access", current, f, cur_cost, costs.get(f, cur_cost))
        return dur

    # -- backhaul -------------------------------------------------------------------------
    def _p2(self, node: int) -> float:
        st = self.state
        owners = self.owners()
        mine = [l for l, o in owners.items() if o == node]
        if not mine:
            self._log(node, "pass", "-", "", "", 0.0, 0.0)
            return 0.0
        items = [(l, st.link_loads.get((node, l), 0.0)) for l in mine]
        budget = p2c_assign_flows_to_radios(node, items, self.n_out)
        if budget.over_budget:
            self._log(node, "budget_exceeded", "out", "", "", budget.l_sh, max(budget.loads))
        dur = len(self.topology.backhaul_channels) * self.cfg.dwell
        for group in budget.radios:
            if group:
                dur += self._p2_radio(node, sorted(group))
        return dur

    def _p2_radio(self, node: int, group: list) -> float:
        st = self.state
        top = self.topology
        snapshot = {l: self.assignment[l] for l in group}
        locks_snapshot = {k: list(v) for k, v in st.in_locks.items()}
        cost_before = sum(self._link_cost(l) for l in group)
        obj_before = self.objective()

        costs = {}
        for f in top.backhaul_channels:
            tmp = dict(self.assignment)
            for l in group:
                tmp[l] = f
            costs[f] = sum(self.model.link_cost(l, tmp, self.active) for l in group)
        ranked = p2b_scan_channels(costs)
        best_f, best_c = ranked[0]
        tag = "radio:" + "/".join(str(l) for l in group)
        before_txt = "/".join(str(snapshot[l]) for l in group)
        if not _below(best_c, cost_before):
            self._log(node, "p2_keep", tag, before_txt, before_txt, cost_before, cost_before)
            if self.monitor:
                self.monitor.local(node, cost_before, cost_before)
                self.monitor.objective(node, obj_before, obj_before)
            return 0.0

        dur = 0.0
        for l in group:
            peer = top.links[l].other(node)
            locks = st.in_locks.setdefault(peer, [])

            def cost_of(f, l=l):
                return self._link_cost(l, channel=f)

            res = p2d_handshake(node, peer, l, best_f, locks, self.n_in, cost_of, self.cfg,
                                silenced=peer in self.silenced)
            st.messages += len(res.messages)
            dur += res.elapsed
            if res.outcome is not Outcome.TIMED_OUT:
                self.assignment[l] = res.channel
            self._log(node, "handshake_" + res.outcome.value, f"link:{l}->{top.name(peer)}",
                      snapshot[l], self.assignment[l], 0.0, 0.0)
            if self.monitor:
                self.monitor.handshake(res, self)

        cost_after = sum(self._link_cost(l) for l in group)
        obj_after = self.objective()
        after_txt = "/".join(str(self.assignment[l]) for l in group)
        ok = _below(cost_after, cost_before) and _not_above(obj_after, obj_before)
        if ok:
            moved = sum(1 for l in group if self.assignment[l] != snapshot[l])
            st.changes += moved
            st.backhaul_changes += moved
            self._log(node, "p2_switch", tag, before_txt, after_txt, cost_before, cost_after)
        else:
            self.assignment.update(snapshot)
            st.in_locks = locks_snapshot
            self._log(node, "p2_revert", tag, before_txt, before_txt, cost_before, cost_before)
            cost_after, obj_after = cost_before, obj_before
            if self.monitor:
                self.monitor.connectivity(self)
        if self.monitor:
            self.monitor.local(node, cost_before, cost_after)
            self.monitor.objective(node, obj_before, obj_after)
        return dur

    def _log(self, node, action, target, before, after, cb, ca):
        self.state.log.append(LogEntry(self.state.iteration, self.now, node, action, target,
                                       str(before), str(after), cb, ca))

    def result(self) -> ChannelAssignment:
        st = self.state
        return ChannelAssignment(dict(self.assignment), self.objective(),
                                 meta={"iterations": st.iteration, "converged": st.converged})


def nominal_loads(engine: Arachne):
    """Demand-based loads when nothing has been measured.

    A saturated flow is credited with one packet per bottleneck airtime on its
    route; CBR and trace flows with their (mean) offered rate.
    """
    top, model = engine.topology, engine.model
    flow_load = {}
    for fl in engine.flows:
        r = engine.routes.get(fl.id)
        if r is None:
            continue
        if fl.model is DemandModel.CBR:
            flow_load[fl.id] = fl.rate
        elif fl.model is DemandModel.TRACE:
            flow_load[fl.id] = (sum(b for _, b in fl.series) / len(fl.series)) if fl.series else 0.0
        else:
            worst = max((model.link_cost(l, engine.assignment, engine.active) for l in r.links),
                        default=0.0)
            flow_load[fl.id] = fl.packet_bits / worst if worst > 0 and worst != math.inf else 0.0
    loads = {a: 0.0 for a in top.aps}
    link_loads = {}
    for fid, r in engine.routes.items():
        if r is None or fid not in flow_load:
            continue
        w = flow_load[fid]
        for (u, v), l in zip(zip(r.nodes, r.nodes[1:]), r.links):
            if top.links[l].is_backhaul:
                link_loads[(u, l)] = link_loads.get((u, l), 0.0) + w
                loads[u] += w
            else:
                ap = v if top.nodes[v].is_ap else u
                loads[ap] += w
    return loads, link_loads


@dataclass
class OfflineRun:
    assignment: ChannelAssignment
    iterations: int
    converged: bool
    elapsed: float
    state: ProtocolState


def run_offline(engine: Arachne, loads_fn=None) -> OfflineRun:
    """Drive rounds to convergence without traffic; time advances by turn durations."""
    cfg = engine.cfg
    t = 0.0
    converged = False
    for _ in range(cfg.max_iterations):
        loads, link_loads = loads_fn(engine) if loads_fn else nominal_loads(engine)
        engine.now = t
        order = engine.begin_iteration(loads, link_loads)
        t += cfg.latency
        for node in order:
            engine.now = t
            res = engine.take_turn(node)
            t += res.duration
            engine.release(node)
            t += cfg.latency
        converged = engine.end_iteration()
        if converged:
            break
    return OfflineRun(engine.result(), engine.state.iteration, converged, t, engine.state)
