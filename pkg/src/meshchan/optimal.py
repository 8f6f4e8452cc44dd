"""Exact min-max channel allocation: minimise the worst path's summed link cost.

Two cost modes:

* FIXED: a constant table C[l, f]; the objective separates per link.
* COUPLED: costs recomputed through the phy/airtime pipeline from the full
  discrete assignment (``network.CostModel``).

Exhaustive enumeration is the reference; best-first branch and bound returns
the identical (lexicographically first) optimum.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import linprog

from .network import ChannelAssignment


class SolverLimitError(RuntimeError):
    pass


class Mode(Enum):
    FIXED = "fixed"
    COUPLED = "coupled"


@dataclass
class AllocationProblem:
    paths: list                    # each a tuple of decision link ids
    channels: tuple
    mode: Mode = Mode.FIXED
    costs: dict | None = None      # (link, channel) -> seconds, FIXED mode
    model: object = None           # CostModel, COUPLED mode
    context: dict = field(default_factory=dict)   # non-decision links, fixed channel, active
    offsets: tuple | None = None   # constant added per path

    def __post_init__(self):
        if not self.channels:
            raise ValueError("need at least one channel")
        self.paths = [tuple(p) for p in self.paths]
        if self.offsets is None:
            self.offsets = (0.0,) * len(self.paths)
        if len(self.offsets) != len(self.paths):
            raise ValueError("one offset per path")
        if self.mode is Mode.FIXED and self.costs is None:
            raise ValueError("FIXED mode needs a cost table")
        if self.mode is Mode.COUPLED and self.model is None:
            raise ValueError("COUPLED mode needs a cost model")
        self.links = tuple(sorted({l for p in self.paths for l in p}))
        self.active = frozenset(self.links) | frozenset(self.context)

    @property
    def symmetric(self) -> bool:
        """Channel labels interchangeable (coupled costs see only co-channel structure)."""
        if self.mode is not Mode.COUPLED:
            return False
        top = self.model.topology
        if any(f in self.channels for f in getattr(top, "external_dbm", {})):
            return False
        bands = {top.links[l].band for l in self.links}
        return not any(top.links[l].band in bands for l in self.context)

    def size(self) -> int:
        return len(self.channels) ** len(self.links)


def _full(problem: AllocationProblem, channels: dict) -> dict:
    d = dict(problem.context)
    d.update(channels)
    return d


def objective(problem: AllocationProblem, assignment) -> float:
    """Worst path cost; ``assignment`` maps link -> channel or link -> {channel: weight}."""
    chans = assignment.channels if isinstance(assignment, ChannelAssignment) else assignment
    missing = [l for l in problem.links if l not in chans]
    if missing:
        raise ValueError(f"assignment incomplete, missing links {missing}")
    fractional = any(isinstance(v, dict) for v in chans.values())
    if problem.mode is Mode.COUPLED:
        if fractional:
            raise ValueError("fractional assignments have no coupled cost")
        return _coupled_objective(problem, _full(problem, chans))
    worst = -math.inf
    for p, off in zip(problem.paths, problem.offsets):
        tot = 0.0
        for l in p:
            a = chans[l]
            if isinstance(a, dict):
                tot += sum(w * problem.costs[(l, f)] for f, w in a.items())
            else:
                tot += problem.costs[(l, a)]
        worst = max(worst, tot + off)
    return worst


def _coupled_objective(problem, full: dict) -> float:
    m = problem.model
    cache = {}
    worst = -math.inf
    for p, off in zip(problem.paths, problem.offsets):
        tot = 0.0
        for l in p:
            c = cache.get(l)
            if c is None:
                c = cache[l] = m.link_cost(l, full, problem.active)
            tot += c
        worst = max(worst, tot + off)
    return worst


def _eval_indices(problem, idx) -> float:
    chans = {l: problem.channels[i] for l, i in zip(problem.links, idx)}
    if problem.mode is Mode.COUPLED:
        return _coupled_objective(problem, _full(problem, chans))
    return objective(problem, chans)


def _result(problem, idx, value, **meta) -> ChannelAssignment:
    chans = {l: problem.channels[i] for l, i in zip(problem.links, idx)}
    return ChannelAssignment(chans, value, meta=meta)


def solve_exhaustive(problem: AllocationProblem, limit: int = 20_000_000) -> ChannelAssignment:
    """Enumerate every assignment in lexicographic order; first strict minimum wins."""
    if problem.size() > limit:
        raise SolverLimitError(f"{problem.size()} assignments exceed the enumeration limit {limit}")
    best, best_idx = math.inf, None
    for idx in itertools.product(range(len(problem.channels)), repeat=len(problem.links)):
        v = _eval_indices(problem, idx)
        if v < best:
            best, best_idx = v, idx
    return _result(problem, best_idx, best, method="exhaustive", evaluated=problem.size())


class _Bounder:
    def __init__(self, problem: AllocationProblem):
        self.p = problem
        self.pos = {l: i for i, l in enumerate(problem.links)}
        if problem.mode is Mode.FIXED:
            self.floor = {l: min(problem.costs[(l, f)] for f in problem.channels)
                          for l in problem.links}

    def bound(self, prefix: tuple) -> float:
        p = self.p
        links = p.links
        if len(prefix) == len(links):
            return _eval_indices(p, prefix)
        d = len(prefix)
        assigned = {links[i]: p.channels[c] for i, c in enumerate(prefix)}
        if p.mode is Mode.FIXED:
            cost = {l: p.costs[(l, f)] for l, f in assigned.items()}
            for l in links[d:]:
                cost[l] = self.floor[l]
        else:
            m = p.model
            full = _full(p, assigned)
            act = frozenset(p.context) | frozenset(assigned)
            cost = {l: m.link_cost(l, full, act) for l in assigned}
            if p.symmetric:
                used = sorted(set(prefix))
                fresh = next((i for i in range(len(p.channels)) if i not in set(prefix)), None)
                options = [p.channels[i] for i in used + ([fresh] if fresh is not None else [])]
            else:
                options = list(p.channels)
            for l in links[d:]:
                act_l = act | {l}
                best = math.inf
                for f in options:
                    full[l] = f
                    best = min(best, m.link_cost(l, full, act_l))
                del full[l]
                cost[l] = best
        worst = -math.inf
        for path, off in zip(p.paths, p.offsets):
            worst = max(worst, sum(cost[l] for l in path) + off)
        return worst


def solve_branch_and_bound(problem: AllocationProblem, node_limit: int = 200_000,
                           incumbent: float = math.inf) -> ChannelAssignment:
    """Best-first search keyed on (bound, prefix); returns the lexicographically first optimum.

    With interchangeable channels only restricted-growth prefixes are expanded
    (each new channel index is at most one more than the largest used so far).
    """
    b = _Bounder(problem)
    n_links = len(problem.links)
    n_ch = len(problem.channels)
    sym = problem.symmetric
    heap = [(b.bound(()), ())]
    pops = 0
    while heap:
        bound, prefix = heapq.heappop(heap)
        pops += 1
        if pops > node_limit:
            raise SolverLimitError(f"branch and bound exceeded {node_limit} nodes")
        if len(prefix) == n_links:
            return _result(problem, prefix, bound, method="branch_and_bound", nodes=pops)
        top = min(n_ch, max(prefix, default=-1) + 2) if sym else n_ch
        for c in range(top):
            child = prefix + (c,)
            cb = b.bound(child)
            if cb > incumbent:
                continue
            if len(child) == n_links:
                incumbent = min(incumbent, cb)
            heapq.heappush(heap, (cb, child))
    raise SolverLimitError("no assignment within the incumbent bound")


def solve_exact(problem: AllocationProblem, enum_limit: int = 20_000_000,
                node_limit: int = 200_000) -> ChannelAssignment:
    if problem.mode is Mode.FIXED:
        # separable: per-link argmin (lowest channel index on ties)
        chans = {}
        for l in problem.links:
            chans[l] = min(problem.channels,
                           key=lambda f: (problem.costs[(l, f)], problem.channels.index(f)))
        return ChannelAssignment(chans, objective(problem, chans), meta={"method": "argmin"})
    if problem.size() <= min(enum_limit, 4096):
        return solve_exhaustive(problem, enum_limit)
    return solve_branch_and_bound(problem, node_limit)


def solve_fractional(problem: AllocationProblem) -> ChannelAssignment:
    """LP relaxation over a[l, f] in [0, 1] with sum_f a[l, f] = 1 (FIXED mode only)."""
    if problem.mode is not Mode.FIXED:
        raise ValueError("fractional solve needs FIXED costs")
    links, chans = problem.links, problem.channels
    nl, nf = len(links), len(chans)
    nv = nl * nf + 1
    col = {(l, f): i * nf + j for i, l in enumerate(links) for j, f in enumerate(chans)}
    c = np.zeros(nv)
    c[-1] = 1.0
    a_ub = np.zeros((len(problem.paths), nv))
    b_ub = np.zeros(len(problem.paths))
    for r, (p, off) in enumerate(zip(problem.paths, problem.offsets)):
        for l in p:
            for f in chans:
                a_ub[r, col[(l, f)]] += problem.costs[(l, f)]
        a_ub[r, -1] = -1.0
        b_ub[r] = -off
    a_eq = np.zeros((nl, nv))
    for i in range(nl):
        a_eq[i, i * nf:(i + 1) * nf] = 1.0
    bounds = [(0.0, 1.0)] * (nl * nf) + [(None, None)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=np.ones(nl), bounds=bounds,
                  method="highs")
    if not res.success:
        raise RuntimeError(f"LP failed: {res.message}")
    frac = {l: {f: float(res.x[col[(l, f)]]) for f in chans} for l in links}
    top = {l: max(chans, key=lambda f: (frac[l][f], -chans.index(f))) for l in links}
    return ChannelAssignment(top, float(res.x[-1]), fractional=frac, meta={"method": "lp"})
