"""Command-line entry point: ``meshchan <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration or input error, 2 solver limit hit.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .config import POLICIES, ScenarioConfig, load_config, serialize_config
from .optimal import SolverLimitError
from .topology import ConfigError
from .traffic import TraceError

log = logging.getLogger("meshchan")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2

PROTOCOL_LOG_HEADER = ("iteration", "time_s", "node", "action", "target", "channel_before",
                       "channel_after", "cost_before_s", "cost_after_s")


def write_csv(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(v):
    return f"{v:.9g}" if isinstance(v, float) else v


def protocol_rows(entries) -> list:
    return [(e.iteration, f"{e.time:.6f}", e.node, e.action, e.target, e.channel_before,
             e.channel_after, f"{e.cost_before:.9g}", f"{e.cost_after:.9g}") for e in entries]


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig().validate()
    return cfg.with_overrides(seed=args.seed, policy=getattr(args, "policy", None),
                              channels=args.channels, radios=args.radios,
                              max_iterations=args.max_iterations)


def _out(args) -> Path:
    p = Path(args.out_dir)
    p.mkdir(parents=True, exist_ok=True)
    return p


# subcommands -------------------------------------------------------------------
def cmd_run(args) -> int:
    from .simkit import run_scenario

    cfg = _config(args)
    out = _out(args)
    res = run_scenario(cfg)
    write_csv(out / "metrics.csv", ("metric", "value"), res.report.rows())
    write_csv(out / "protocol_log.csv", PROTOCOL_LOG_HEADER, protocol_rows(res.protocol_log))
    write_csv(out / "assignment.csv", ("link", "channel"), sorted(res.assignment.items()))
    (out / "config.ini").write_text(serialize_config(cfg), encoding="utf-8")
    if not args.no_plots and res.report.objective_trace:
        from .report import plot_objective
        plot_objective(res.report.objective_trace, out)
    print(res.report.summary())
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = _out(args)
    policies = tuple(p.strip() for p in args.policies.split(",") if p.strip())
    bad = [p for p in policies if p not in POLICIES]
    if bad:
        raise ConfigError(f"unknown policies {bad}")
    if args.sweep:
        clients = tuple(int(c) for c in args.clients.split(","))
        seeds = tuple(cfg.seed + i for i in range(args.seeds))
        rows = ex.sweep(cfg, clients, policies, seeds, jobs=args.jobs)
        write_csv(out / "sweep.csv", ("clients", "policy", "seed", "throughput_bps", "delay_s",
                                      "dropped_packets"), [tuple(map(_fmt, r)) for r in rows])
        means = ex.sweep_means(rows)
        write_csv(out / "sweep_mean.csv", ("clients", "policy", "throughput_bps"),
                  [(nc, p, _fmt(v)) for (nc, p), v in sorted(means.items())])
        if not args.no_plots:
            from .report import plot_sweep
            plot_sweep(means, out)
        for (nc, p), v in sorted(means.items()):
            print(f"{nc:4d} {p:12s} {v / 1e6:8.3f} Mb/s")
        return EXIT_OK
    reports = ex.compare(cfg, policies, jobs=args.jobs)
    write_csv(out / "compare.csv", ("policy", "metric", "value"), ex.compare_rows(reports))
    if not args.no_plots:
        from .report import plot_compare
        plot_compare(reports, out)
    for rep in reports:
        print(rep.summary())
    return EXIT_OK


def cmd_optimal_gap(args) -> int:
    cfg = _config(args)
    out = _out(args)
    seeds = range(cfg.seed, cfg.seed + args.seeds)
    gaps = ex.optimal_gap(cfg, seeds, jobs=args.jobs)
    write_csv(out / "optimal_gap.csv", ex.GAP_HEADER, [g.row() for g in gaps])
    if not args.no_plots:
        from .report import plot_gap
        plot_gap(gaps, out)
    for g in gaps:
        print(f"seed {g.seed}: objective ratio {g.objective_ratio:.3f}, throughput ratio "
              f"{g.throughput_ratio:.3f}, iterations {g.iterations}")
    return EXIT_OK


def cmd_paper_scenario(args) -> int:
    cfg = _config(args)
    out = _out(args)
    rows = ex.paper_scenario(cfg)
    write_csv(out / "paper_scenario.csv",
              ("demand_a_bps", "demand_b_bps", "policy", "throughput_bps"),
              [tuple(map(_fmt, r)) for r in rows])
    if not args.no_plots:
        from .report import plot_paper
        plot_paper(rows, out)
    for da, db, p, t in rows:
        print(f"{da / 1e6:6.2f} {db / 1e6:6.2f} {p:12s} {t / 1e6:8.3f} Mb/s")
    return EXIT_OK


def cmd_trace_check(args) -> int:
    rows = ex.trace_check(args.trace)
    if args.out_dir:
        write_csv(_out(args) / "trace_summary.csv", ("ap", "intervals", "mean_bps", "peak_bps"),
                  [tuple(map(_fmt, r)) for r in rows])
    for ap, n, mean, peak in rows:
        print(f"ap {ap}: {n} intervals, mean {mean:.0f} b/s, peak {peak:.0f} b/s")
    print(f"ok: {len(rows)} APs")
    return EXIT_OK


def cmd_overhead(args) -> int:
    out = _out(args)
    rows = ex.overhead_curve(range(1, args.max_n + 1))
    write_csv(out / "overhead.csv", ("n", "overhead_slots"), [(n, f"{v:.9f}") for n, v in rows])
    if not args.no_plots:
        from .report import plot_overhead
        plot_overhead(rows, out)
    lo = min(v for n, v in rows if n >= 2)
    hi = max(v for n, v in rows if n >= 2)
    print(f"overhead for n in [2, {args.max_n}]: {lo:.2f} .. {hi:.2f} slots")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI scenario file (defaults when omitted)")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--channels", type=int, choices=(3, 12))
    common.add_argument("--radios", type=int, metavar="N", help="backhaul radios per AP")
    common.add_argument("--max-iterations", type=int)
    common.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for batches")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="meshchan", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", parents=[common], help="simulate one scenario")
    p.add_argument("--policy", choices=POLICIES)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="same scenario under several policies")
    p.add_argument("--policies", default=",".join(ex.COMPARE_POLICIES))
    p.add_argument("--sweep", action="store_true", help="sweep the client count")
    p.add_argument("--clients", default=",".join(map(str, ex.SWEEP_CLIENTS)))
    p.add_argument("--seeds", type=int, default=3, help="seeds per sweep point")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("optimal-gap", parents=[common], help="ARACHNE against the exact optimum")
    p.add_argument("--seeds", type=int, default=20)
    p.set_defaults(fn=cmd_optimal_gap)

    p = sub.add_parser("paper-scenario", parents=[common], help="canned two-route topology")
    p.set_defaults(fn=cmd_paper_scenario)

    p = sub.add_parser("trace-check", parents=[common], help="validate a demand trace CSV")
    p.add_argument("trace")
    p.set_defaults(fn=cmd_trace_check, out_dir=None)

    p = sub.add_parser("overhead", parents=[common], help="contention overhead curve")
    p.add_argument("--max-n", type=int, default=50)
    p.set_defaults(fn=cmd_overhead)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, TraceError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverLimitError as e:
        print(f"solver limit: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
