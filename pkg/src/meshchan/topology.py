"""Static mesh world: nodes, radios, links and channel sets."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .phy import Band, PropagationModel, SINR_THRESHOLDS

ACCESS_CHANNELS = (1, 6, 11)
BACKHAUL_CHANNELS_12 = (36, 40, 44, 48, 52, 56, 60, 64, 149, 153, 157, 161)
CONTROL_CHANNEL = 165


class ConfigError(ValueError):
    pass


class NodeKind(Enum):
    AP = "ap"
    CLIENT = "client"


class Direction(Enum):
    IN = "in"
    OUT = "out"
    CONTROL = "control"
    ACCESS = "access"


@dataclass(frozen=True)
class Channel:
    id: int
    band: Band


@dataclass
class RadioInterface:
    id: int
    band: Band
    direction: Direction
    current_channel: int | None = None


@dataclass
class MeshNode:
    id: int
    kind: NodeKind
    x: float
    y: float
    tx_power: float = 20.0
    radios: list = field(default_factory=list)
    label: str | None = None

    @property
    def is_ap(self) -> bool:
        return self.kind is NodeKind.AP

    def radios_of(self, direction: Direction) -> list:
        return [r for r in self.radios if r.direction is direction]


@dataclass(frozen=True)
class Link:
    id: int
    a: int          # client for access links, lower AP id for backhaul
    b: int
    band: Band

    @property
    def is_backhaul(self) -> bool:
        return self.band is Band.BACKHAUL

    def other(self, n: int) -> int:
        return self.b if n == self.a else self.a

    def endpoints(self) -> tuple:
        return (self.a, self.b)


@dataclass
class MeshTopology:
    nodes: list
    links: list
    access_channels: tuple = ACCESS_CHANNELS
    backhaul_channels: tuple = BACKHAUL_CHANNELS_12
    control_channel: int = CONTROL_CHANNEL
    arena: tuple = (1000.0, 1000.0)
    propagation: PropagationModel = field(default_factory=PropagationModel)
    backhaul_radios: int = 2
    # channel -> dBm of non-mesh interference heard everywhere (empty by default)
    external_dbm: dict = field(default_factory=dict)

    def __post_init__(self):
        self.aps = [n.id for n in self.nodes if n.is_ap]
        self.clients = [n.id for n in self.nodes if not n.is_ap]
        self.serving_ap = {}
        self._access = {a: [] for a in self.aps}
        self._backhaul = {a: [] for a in self.aps}
        self._pair = {}
        for l in self.links:
            if l.is_backhaul:
                self._backhaul[l.a].append(l.id)
                self._backhaul[l.b].append(l.id)
            else:
                self.serving_ap[l.a] = l.b
                self._access[l.b].append(l.id)
            self._pair[(l.a, l.b)] = l.id
            self._pair[(l.b, l.a)] = l.id
        self._by_label = {n.label: n.id for n in self.nodes if n.label is not None}

    @property
    def channels(self) -> list:
        return ([Channel(c, Band.ACCESS) for c in self.access_channels]
                + [Channel(c, Band.BACKHAUL) for c in self.backhaul_channels])

    @property
    def backhaul_links(self) -> list:
        return [l for l in self.links if l.is_backhaul]

    @property
    def access_links(self) -> list:
        return [l for l in self.links if not l.is_backhaul]

    def access_links_of(self, ap: int) -> list:
        return self._access[ap]

    def backhaul_links_of(self, ap: int) -> list:
        return self._backhaul[ap]

    def clients_of(self, ap: int) -> list:
        return [self.links[l].a for l in self._access[ap]]

    def link_between(self, u: int, v: int) -> int | None:
        return self._pair.get((u, v))

    def ap_neighbors(self, ap: int) -> list:
        return sorted(self.links[l].other(ap) for l in self._backhaul[ap])

    def node_by_label(self, label) -> int:
        return self._by_label[str(label)]

    def name(self, node: int) -> str:
        lab = self.nodes[node].label
        return lab if lab is not None else str(node)

    def channel_band(self, channel: int) -> Band:
        return Band.ACCESS if channel in self.access_channels else Band.BACKHAUL

    def apply_assignment(self, assignment: dict):
        """Tune data radios to match a link->channel map (control radios never move)."""
        for ap in self.aps:
            node = self.nodes[ap]
            acc = self._access[ap]
            for r in node.radios_of(Direction.ACCESS):
                r.current_channel = assignment.get(acc[0]) if acc else r.current_channel
            chans = sorted({assignment[l] for l in self._backhaul[ap] if l in assignment})
            data = node.radios_of(Direction.OUT) + node.radios_of(Direction.IN)
            # more channels than radios: radio i time-shares chans[i], chans[i+N], ...
            for i, r in enumerate(data):
                if chans:
                    r.current_channel = chans[i % len(chans)]
        for c in self.clients:
            ap = self.serving_ap[c]
            l = self._pair[(c, ap)]
            if l in assignment:
                self.nodes[c].radios[0].current_channel = assignment[l]


def ap_radios(n_backhaul: int, has_clients: bool, first_id: int, control_channel: int,
              access_channel: int, backhaul_channel: int) -> list:
    n_out = math.ceil(n_backhaul / 2)
    radios = []
    rid = first_id
    if has_clients:
        radios.append(RadioInterface(rid, Band.ACCESS, Direction.ACCESS, access_channel))
        rid += 1
    radios.append(RadioInterface(rid, Band.BACKHAUL, Direction.CONTROL, control_channel))
    rid += 1
    for i in range(n_backhaul):
        d = Direction.OUT if i < n_out else Direction.IN
        radios.append(RadioInterface(rid, Band.BACKHAUL, d, backhaul_channel))
        rid += 1
    return radios


def grid_positions(n: int, spacing: float, arena: tuple) -> list:
    cols = math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    x0 = (arena[0] - (cols - 1) * spacing) / 2
    y0 = (arena[1] - (rows - 1) * spacing) / 2
    return [(x0 + (i % cols) * spacing, y0 + (i // cols) * spacing) for i in range(n)]


def _connected(n: int, edges) -> bool:
    if n <= 1:
        return True
    adj = {i: [] for i in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    q = deque([0])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                q.append(v)
    return len(seen) == n


def _pairs_in_range(pos, rng_m):
    out = []
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            if math.dist(pos[i], pos[j]) <= rng_m + 1e-9:
                out.append((i, j))
    return out


def decode_floor_dbm(model: PropagationModel) -> float:
    # weakest signal that still reaches the lowest rate with no interference
    return model.noise_dbm + SINR_THRESHOLDS[0]


def build_from_positions(ap_pos, client_pos, *, backhaul_range: float, radios: int = 2,
                         n_channels: int = 12, arena=(1000.0, 1000.0), tx_power: float = 20.0,
                         propagation: PropagationModel | None = None, labels=None) -> MeshTopology:
    model = propagation or PropagationModel()
    if radios < 2:
        raise ConfigError("each AP needs at least one IN and one OUT backhaul radio")
    if n_channels not in (3, 12):
        raise ConfigError("backhaul channel count must be 3 or 12")
    if not ap_pos:
        raise ConfigError("need at least one AP")
    bh_channels = BACKHAUL_CHANNELS_12[:n_channels]
    edges = _pairs_in_range(ap_pos, backhaul_range)
    if not _connected(len(ap_pos), edges):
        raise ConfigError("AP control-channel graph is disconnected")

    floor = decode_floor_dbm(model)
    serving = []
    for ci, (cx, cy) in enumerate(client_pos):
        best, best_p = None, -math.inf
        for ai, (ax, ay) in enumerate(ap_pos):
            d = math.hypot(cx - ax, cy - ay)
            if d <= 0:
                raise ConfigError(f"client {ci} coincides with AP {ai}")
            p = tx_power - model.path_loss(d, Band.ACCESS)
            if p > best_p:
                best, best_p = ai, p
        if best_p < floor:
            raise ConfigError(f"client {ci} hears no AP (best {best_p:.1f} dBm)")
        serving.append(best)

    n_ap = len(ap_pos)
    nodes = []
    rid = 0
    for i, (x, y) in enumerate(ap_pos):
        has_clients = i in serving
        rs = ap_radios(radios, has_clients, rid, CONTROL_CHANNEL, ACCESS_CHANNELS[0], bh_channels[0])
        rid += len(rs)
        lab = str(labels[i]) if labels else None
        nodes.append(MeshNode(i, NodeKind.AP, float(x), float(y), tx_power, rs, lab))
    for ci, (x, y) in enumerate(client_pos):
        r = RadioInterface(rid, Band.ACCESS, Direction.ACCESS, ACCESS_CHANNELS[0])
        rid += 1
        nodes.append(MeshNode(n_ap + ci, NodeKind.CLIENT, float(x), float(y), tx_power, [r]))

    links = []
    for a, b in edges:
        links.append(Link(len(links), a, b, Band.BACKHAUL))
    for ci, ap in enumerate(serving):
        links.append(Link(len(links), n_ap + ci, ap, Band.ACCESS))
    return MeshTopology(nodes, links, ACCESS_CHANNELS, bh_channels, CONTROL_CHANNEL,
                        tuple(arena), model, radios)


def build_topology(config) -> MeshTopology:
    """Topology for a validated ScenarioConfig; deterministic in its seed."""
    rng = np.random.default_rng([config.seed, 0])
    arena = (config.arena_w, config.arena_h)
    model = config.propagation()
    if config.placement == "grid":
        ap_pos = grid_positions(config.n_aps, config.ap_spacing, arena)
    elif config.placement == "random":
        for _ in range(1000):
            ap_pos = [tuple(p) for p in rng.uniform((0, 0), arena, size=(config.n_aps, 2))]
            if _connected(config.n_aps, _pairs_in_range(ap_pos, config.backhaul_range)):
                break
        else:
            raise ConfigError("could not place APs with a connected backhaul")
    else:
        raise ConfigError(f"unknown placement {config.placement!r}")
    client_pos = []
    floor = decode_floor_dbm(model)
    tries = 0
    while len(client_pos) < config.n_clients:
        # uniform over the part of the arena some AP can serve
        p = tuple(rng.uniform((0, 0), arena))
        tries += 1
        if tries > 1000 * max(1, config.n_clients):
            raise ConfigError("arena is almost entirely outside AP coverage")
        best = max(config.tx_power - model.path_loss(max(math.dist(p, a), 1e-9), Band.ACCESS)
                   for a in ap_pos)
        if best >= floor:
            client_pos.append(p)
    return build_from_positions(ap_pos, client_pos, backhaul_range=config.backhaul_range,
                                radios=config.radios, n_channels=config.channels, arena=arena,
                                tx_power=config.tx_power, propagation=model)


def neighbors_on_channel(t: MeshTopology, n: int, f: int, tuned: dict | None = None) -> set:
    """Nodes with a radio on ``f`` heard at ``n`` above the carrier-sense level.

    ``tuned`` optionally overrides radio state as node -> set of channels.
    """
    band = t.channel_band(f)
    me = t.nodes[n]
    out = set()
    for node in t.nodes:
        if node.id == n:
            continue
        chans = tuned.get(node.id, set()) if tuned is not None else \
            {r.current_channel for r in node.radios}
        if f not in chans:
            continue
        d = math.hypot(node.x - me.x, node.y - me.y)
        if d <= 0:
            out.add(node.id)
            continue
        if node.tx_power - t.propagation.path_loss(d, band) >= t.propagation.cs_threshold_dbm:
            out.add(node.id)
    return out


def cs_range(model: PropagationModel, band: Band, tx_power: float = 20.0) -> float:
    return 10 ** ((tx_power - model.cs_threshold_dbm - model.ref_loss(band))
                  / (10 * model.exponent(band)))
