"""Airtime cost of a link and the 802.11 DCF saturation model it approximates.

Time quantities inside the saturation model are kept in slots; everything
crossing the module boundary is in seconds or bits/s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

SLOT = 20e-6


@dataclass(frozen=True)
class AirtimeConfig:
    overhead: float = 1.25e-3      # channel access + protocol overhead, s
    test_frame_bits: int = 8224

    def __post_init__(self):
        if self.overhead <= 0 or self.test_frame_bits < 0:
            raise ValueError("overhead must be positive and test frame size non-negative")


@dataclass(frozen=True)
class SaturationParams:
    K: int = 7                     # retransmission stages (K+1 attempts)
    b0: float = 16.0               # mean backoff of the first attempt, slots
    slot: float = SLOT
    T0: float = 52.0               # success overhead, slots
    Tc: float = 17.0               # collision overhead, slots
    n: int = 1
    packet_bits: float = 12000.0
    rates: tuple = field(default_factory=tuple)  # bits/s per contender; empty -> 54 Mb/s

    def __post_init__(self):
        if self.K < 0 or self.b0 < 1 or self.n < 1:
            raise ValueError("need K >= 0, b0 >= 1, n >= 1")
        if self.rates and len(self.rates) != self.n:
            raise ValueError(f"expected {self.n} rates, got {len(self.rates)}")
        if any(r <= 0 for r in self.rates):
            raise ValueError("rates must be positive")

    def backoff(self, k: int) -> float:
        return self.b0 * 2 ** k

    def contender_rates(self) -> tuple:
        return self.rates or (54e6,) * self.n


@dataclass(frozen=True)
class SaturationSolution:
    gamma: float
    beta: float
    throughput: float   # bits/s, whole cell
    delay: float        # s per packet (rho)
    overhead: float     # slots


def attempt_rate(gamma: float, p: SaturationParams) -> float:
    num = 0.0
    den = 0.0
    g = 1.0
    for k in range(p.K + 1):
        num += g
        den += g * p.backoff(k)
        g *= gamma
    return num / den


def collision_prob(beta: float, n: int) -> float:
    return 1.0 - (1.0 - beta) ** (n - 1)


def solve_fixed_point(p: SaturationParams, max_iter: int = 64) -> tuple[float, float]:
    """Equilibrium (gamma, beta) by bisection on gamma - Gamma(G(gamma))."""
    if p.n == 1:
        return 0.0, attempt_rate(0.0, p)
    lo, hi = 0.0, 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid - collision_prob(attempt_rate(mid, p), p.n) > 0:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-16:
            break
    gamma = 0.5 * (lo + hi)
    return gamma, attempt_rate(gamma, p)


def damped_fixed_point(p: SaturationParams, damping: float = 0.3, tol: float = 1e-15,
                       max_iter: int = 200_000) -> tuple[float, float]:
    # independent cross-check for the bisection solver
    gamma = 0.5
    for _ in range(max_iter):
        nxt = (1 - damping) * gamma + damping * collision_prob(attempt_rate(gamma, p), p.n)
        if abs(nxt - gamma) < tol:
            gamma = nxt
            break
        gamma = nxt
    return gamma, attempt_rate(gamma, p)


def _success(p: SaturationParams, beta: float) -> float:
    return p.n * beta * (1.0 - beta) ** (p.n - 1)


def _check_beta(beta: float):
    if not 0.0 < beta < 1.0:
        raise ValueError(f"attempt rate must lie in (0, 1), got {beta}")


def throughput(p: SaturationParams, beta: float) -> float:
    """Total cell throughput in bits/s at attempt rate ``beta``."""
    _check_beta(beta)
    n = p.n
    q = (1.0 - beta) ** (n - 1)
    tx_slots = sum(p.packet_bits / c / p.slot for c in p.contender_rates())
    denom = (1.0 + beta * q * (tx_slots + n * p.T0)
             + (1.0 - (1.0 - beta) ** n - n * beta * q) * p.Tc)
    return n * beta * q * p.packet_bits / denom / p.slot


def _delay_slots(p: SaturationParams, beta: float) -> tuple[float, float]:
    _check_beta(beta)
    s = _success(p, beta)
    contention = 1.0 / s + (p.T0 - p.Tc) + (1.0 - (1.0 - beta) ** p.n) / s * p.Tc
    tx = sum(p.packet_bits / c / p.slot for c in p.contender_rates()) / p.n
    return contention, tx


def per_packet_delay(p: SaturationParams, beta: float) -> float:
    contention, tx = _delay_slots(p, beta)
    return (contention + tx) * p.slot


def overhead_slots(p: SaturationParams, beta: float) -> float:
    return _delay_slots(p, beta)[0]


def saturation(p: SaturationParams) -> SaturationSolution:
    gamma, beta = solve_fixed_point(p)
    return SaturationSolution(gamma, beta, throughput(p, beta), per_packet_delay(p, beta),
                              overhead_slots(p, beta))


@lru_cache(maxsize=None)
def contention_overhead(n: int, K: int = 7, b0: float = 16.0, T0: float = 52.0,
                        Tc: float = 17.0, slot: float = SLOT) -> float:
    """Contention + protocol overhead per packet for ``n`` saturated contenders, in seconds."""
    p = SaturationParams(K=K, b0=b0, T0=T0, Tc=Tc, slot=slot, n=n)
    _, beta = solve_fixed_point(p)
    return overhead_slots(p, beta) * slot


def airtime(cfg: AirtimeConfig, rate: float | None, fer: float) -> float:
    """Per-packet airtime at ``rate`` with frame-error rate ``fer``; ``inf`` if unusable."""
    if rate is None or rate <= 0 or fer >= 1.0:
        return math.inf
    return (cfg.overhead + cfg.test_frame_bits / rate) / (1.0 - fer)


def airtime_cost(cfg: AirtimeConfig, state) -> float:
    # state: anything carrying .rate and .fer (phy.LinkChannelState)
    return airtime(cfg, state.rate, state.fer)


def bidirectional_cost(up: float, down: float) -> float:
    return up + down
