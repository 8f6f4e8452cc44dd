"""Batch experiments behind the CLI subcommands.

Every function returns plain rows (lists of tuples) so the CLI can write
them as CSV and the report module can plot them.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .airtime import SaturationParams, saturation
from .network import CostModel
from .policies import Scenario, prepare
from .simkit import run_scenario
from .topology import build_from_positions
from .traffic import DemandModel, Flow, load_trace_ingest

log = logging.getLogger(__name__)

COMPARE_POLICIES = ("arachne", "tree", "random", "single")
SWEEP_CLIENTS = (40, 50, 60, 70)


def overhead_curve(ns=range(1, 51), params: SaturationParams | None = None) -> list:
    """Rows (n, contention + protocol overhead in slots) from the saturation model."""
    p = params or SaturationParams()
    return [(n, saturation(replace(p, n=n)).overhead) for n in ns]


def _run_one(args):
    cfg, policy = args
    res = run_scenario(cfg, policy=policy)
    return res.report


def _map(fn, jobs_list, jobs: int):
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, jobs_list))
    return [fn(j) for j in jobs_list]


def compare(config, policies=COMPARE_POLICIES, jobs: int = 1) -> list:
    """Same topology, traffic and seed under each policy -> [MetricsReport]."""
    sc = prepare(config)
    if jobs > 1:
        # workers rebuild the scenario from the config; it is deterministic
        return _map(_run_one, [(config, p) for p in policies], jobs)
    return [run_scenario(config, sc, policy=p).report for p in policies]


def compare_rows(reports) -> list:
    rows = []
    for rep in reports:
        for k, v in rep.rows():
            if k in ("policy", "seed"):
                continue
            rows.append((rep.policy, k, v))
    return rows


def sweep(config, clients=SWEEP_CLIENTS, policies=COMPARE_POLICIES, seeds=(1, 2, 3),
          jobs: int = 1) -> list:
    """Rows (clients, policy, seed, throughput_bps, delay_s, dropped_packets)."""
    work = []
    for nc in clients:
        for s in seeds:
            cfg = replace(config, n_clients=nc, seed=s).validate()
            for p in policies:
                work.append((cfg, p))
    reports = _map(_run_one, work, jobs)
    return [(cfg.n_clients, p, cfg.seed, rep.throughput, rep.delay, rep.dropped_packets)
            for (cfg, p), rep in zip(work, reports)]


def sweep_means(rows) -> dict:
    """(clients, policy) -> mean throughput over seeds."""
    acc = {}
    for nc, p, _, tput, _, _ in rows:
        acc.setdefault((nc, p), []).append(tput)
    return {k: sum(v) / len(v) for k, v in acc.items()}


@dataclass
class GapRow:
    seed: int
    arachne_objective: float
    optimal_objective: float
    arachne_throughput: float
    optimal_throughput: float
    iterations: int
    converged: bool

    @property
    def objective_ratio(self) -> float:
        return self.arachne_objective / self.optimal_objective if self.optimal_objective else 1.0

    @property
    def throughput_ratio(self) -> float:
        return self.arachne_throughput / self.optimal_throughput if self.optimal_throughput \
            else 1.0

    def row(self) -> tuple:
        return (self.seed, f"{self.arachne_objective:.9f}", f"{self.optimal_objective:.9f}",
                f"{self.objective_ratio:.6f}", f"{self.arachne_throughput:.6f}",
                f"{self.optimal_throughput:.6f}", f"{self.throughput_ratio:.6f}",
                self.iterations, int(self.converged))


GAP_HEADER = ("seed", "arachne_objective_s", "optimal_objective_s", "objective_ratio",
              "arachne_throughput_bps", "optimal_throughput_bps", "throughput_ratio",
              "iterations", "converged")


def _objective(sc: Scenario, res) -> float:
    from .routing import active_links, backhaul_hops
    paths = []
    for r in res.routes.values():
        if r is not None:
            p = tuple(l for _, _, l in backhaul_hops(sc.topology, r))
            if p:
                paths.append(p)
    return sc.model.objective(paths, res.assignment, active_links(res.routes)) if paths else 0.0


def _gap_one(cfg) -> GapRow:
    sc = prepare(cfg)
    a = run_scenario(cfg, sc, policy="arachne")
    o = run_scenario(cfg, sc, policy="optimal")
    return GapRow(cfg.seed, _objective(sc, a), _objective(sc, o), a.report.throughput,
                  o.report.throughput, a.report.iterations, a.report.converged)


def optimal_gap(config, seeds=range(1, 21), jobs: int = 1) -> list:
    cfgs = [replace(config, seed=s).validate() for s in seeds]
    return _map(_gap_one, cfgs, jobs)


# canned two-route topology ------------------------------------------------------
PAPER_LABELS = (16, 13, 15, 20, 19, 14)
PAPER_POSITIONS = ((-100.0, 80.0), (-100.0, -80.0), (0.0, 0.0), (100.0, 0.0),
                   (200.0, 80.0), (200.0, -80.0))
PAPER_RANGE = 150.0
PAPER_ROUTES = ((16, 19), (13, 14))       # both cross 15 -> 20
PAPER_DEMANDS = (2e6, 4e6, 8e6, 12e6, 16e6)
PAPER_RATIOS = (1.0, 0.5, 0.1)
PAPER_POLICIES = ("interference", "load-aware", "arachne")
# the testbed's channels are not equally clean; background dBm per channel rank
PAPER_BACKGROUND = (None, -85.0, -80.0)


def paper_topology(config):
    top = build_from_positions(list(PAPER_POSITIONS), [], backhaul_range=PAPER_RANGE,
                               radios=config.radios, n_channels=config.channels,
                               arena=(config.arena_w, config.arena_h),
                               tx_power=config.tx_power, propagation=config.propagation(),
                               labels=PAPER_LABELS)
    top.external_dbm = {f: v for f, v in zip(top.backhaul_channels, PAPER_BACKGROUND)
                        if v is not None}
    return top


def paper_flows(top, demand_a: float, demand_b: float, packet_bits: int) -> list:
    flows = []
    for fid, ((s, d), rate) in enumerate(zip(PAPER_ROUTES, (demand_a, demand_b))):
        if rate <= 0:
            continue
        flows.append(Flow(fid, top.node_by_label(s), top.node_by_label(d), DemandModel.CBR,
                          packet_bits, rate))
    return flows


def paper_scenario(config, demands=PAPER_DEMANDS, ratios=PAPER_RATIOS,
                   policies=PAPER_POLICIES) -> list:
    """Rows (demand_a_bps, demand_b_bps, policy, throughput_bps)."""
    cfg = replace(config, channels=3).validate()
    top = paper_topology(cfg)
    model = CostModel(top)
    rows = []
    for d in demands:
        for r in ratios:
            da, db = d * r, d
            flows = paper_flows(top, da, db, cfg.packet_bits)
            sc = Scenario(cfg, top, model, flows)
            for p in policies:
                rep = run_scenario(cfg, sc, policy=p).report
                rows.append((da, db, p, rep.throughput))
    return rows


def paper_gaps(rows, policy: str = "load-aware") -> dict:
    """(demand_b, ratio) -> (interference-only throughput, ``policy`` throughput)."""
    out = {}
    by = {}
    for da, db, p, t in rows:
        by.setdefault((da, db), {})[p] = t
    for (da, db), v in by.items():
        out[(db, round(da / db, 6))] = (v.get("interference", 0.0), v.get(policy, 0.0))
    return out


def trace_check(path, ap_ids=None) -> list:
    """Rows (ap, intervals, mean_bps, peak_bps) for a demand trace; raises TraceError."""
    series = load_trace_ingest(path, ap_ids)
    rows = []
    for ap in sorted(series):
        vals = [v for _, v in series[ap]]
        rows.append((ap, len(vals), sum(vals) / len(vals), max(vals)))
    return rows
