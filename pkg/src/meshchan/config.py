"""Scenario configuration: INI text with sections, validated before use."""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace

from .phy import PropagationModel
from .topology import ConfigError

POLICIES = ("arachne", "optimal", "single", "random", "interference", "tree")
TRAFFIC = ("saturated", "voip", "trace", "none")


def _f(section, default, **kw):
    return field(default=default, metadata={"section": section, **kw})


@dataclass
class ScenarioConfig:
    seed: int = _f("scenario", 1)
    horizon: float = _f("scenario", 40.0)        # simulated seconds
    warmup: float = _f("scenario", 10.0)
    policy: str = _f("scenario", "arachne")
    # adaptive runs: the metrics window opens once the protocol converges
    measure_after_convergence: bool = _f("scenario", True)

    arena_w: float = _f("topology", 1000.0)
    arena_h: float = _f("topology", 1000.0)
    n_aps: int = _f("topology", 10)
    placement: str = _f("topology", "grid")
    ap_spacing: float = _f("topology", 250.0)
    backhaul_range: float = _f("topology", 300.0)
    n_clients: int = _f("topology", 40)
    radios: int = _f("topology", 2)
    channels: int = _f("topology", 12)
    tx_power: float = _f("topology", 20.0)
    access_exponent: float = _f("topology", 2.2)
    backhaul_exponent: float = _f("topology", 2.0)

    traffic: str = _f("traffic", "saturated")
    packet_bits: int = _f("traffic", 12000)
    voip_sessions: int = _f("traffic", 10)
    trace_path: str = _f("traffic", "")
    queue_capacity: int = _f("traffic", 100)

    w1: float = _f("protocol", 0.6)
    w2: float = _f("protocol", 0.4)
    threshold: float = _f("protocol", 0.0)      # 0 -> 3x idle top-rate cost
    p1_margin: float = _f("protocol", 0.2)      # relative gain for an access switch
    dwell: float = _f("protocol", 0.1)
    timeout: float = _f("protocol", 0.01)
    retries: int = _f("protocol", 3)
    max_iterations: int = _f("protocol", 20)
    latency: float = _f("protocol", 0.002)
    window: float = _f("protocol", 1.0)

    solver_mode: str = _f("solver", "coupled")
    node_limit: int = _f("solver", 200000)
    enum_limit: int = _f("solver", 20000000)

    def validate(self) -> "ScenarioConfig":
        if self.n_aps < 1:
            raise ConfigError("n_aps must be >= 1")
        if self.n_clients < 0:
            raise ConfigError("n_clients must be >= 0")
        if self.arena_w <= 0 or self.arena_h <= 0:
            raise ConfigError("arena must be positive")
        if self.channels not in (3, 12):
            raise ConfigError("channels must be 3 or 12")
        if self.radios < 2:
            raise ConfigError("radios must be >= 2")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}")
        if self.traffic not in TRAFFIC:
            raise ConfigError(f"traffic must be one of {TRAFFIC}")
        if self.traffic == "trace" and not self.trace_path:
            raise ConfigError("trace traffic needs trace_path")
        if self.placement not in ("grid", "random"):
            raise ConfigError("placement must be grid or random")
        if self.horizon <= 0 or self.warmup < 0 or self.warmup >= self.horizon:
            raise ConfigError("need 0 <= warmup < horizon")
        if abs(self.w1 + self.w2 - 1.0) > 1e-9:
            raise ConfigError("w1 + w2 must equal 1")
        if not 0.0 <= self.p1_margin < 1.0:
            raise ConfigError("p1_margin must lie in [0, 1)")
        if self.dwell <= 0 or self.timeout <= 0 or self.window <= 0:
            raise ConfigError("dwell, timeout and window must be positive")
        if self.solver_mode not in ("coupled", "fixed"):
            raise ConfigError("solver_mode must be coupled or fixed")
        if self.packet_bits <= 0 or self.queue_capacity < 1:
            raise ConfigError("packet_bits and queue_capacity must be positive")
        if min(self.access_exponent, self.backhaul_exponent) < 2:
            raise ConfigError("path-loss exponents must be >= 2")
        return self

    def propagation(self) -> PropagationModel:
        return PropagationModel(access_exponent=self.access_exponent,
                                backhaul_exponent=self.backhaul_exponent)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw).validate()


def _convert(f, raw: str):
    t = f.type if isinstance(f.type, str) else f.type.__name__
    try:
        if t == "bool":
            v = raw.strip().lower()
            if v not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return v in ("true", "1", "yes")
        if t == "int":
            return int(raw)
        if t == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None
    return raw


def parse_config(text: str) -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    known = {f.name: f for f in fields(ScenarioConfig)}
    kw = {}
    for sec in cp.sections():
        for key, raw in cp.items(sec):
            f = known.get(key)
            if f is None or f.metadata["section"] != sec:
                raise ConfigError(f"unknown key [{sec}] {key}")
            kw[key] = _convert(f, raw)
    return ScenarioConfig(**kw).validate()


def load_config(path) -> ScenarioConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None


def serialize_config(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    for f in fields(cfg):
        sec = f.metadata["section"]
        if not cp.has_section(sec):
            cp.add_section(sec)
        v = getattr(cfg, f.name)
        cp.set(sec, f.name, repr(v) if isinstance(v, float) else str(v).lower()
               if isinstance(v, bool) else str(v))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
