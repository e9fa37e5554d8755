"""Command line entry point: scenario validation, CCDF snapshots, the full
dynamics experiment and parameter sweeps.

Exit codes: 0 success, 2 configuration error, 3 numerical error (instability
or non-convergence).  Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from mobicell.analytic import InstabilityError, UndefinedChainError
from mobicell.config import ConfigError, bundled_scenario_path, load_scenario
from mobicell.pipeline import SWEEP_PARAMS, run_ccdf, run_dynamics, run_sweep

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _fail(code: int, kind: str, detail) -> int:
    print(json.dumps({"error": kind, "detail": detail}), file=sys.stderr)
    return code


def _load(args):
    path = args.config if args.config else bundled_scenario_path()
    cfg = load_scenario(path)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if args.samples is not None:
        cfg = replace(cfg, mc_samples=args.samples)
    if getattr(args, "replications", None) is not None:
        cfg = replace(cfg, replications=args.replications)
    if getattr(args, "duration", None) is not None:
        cfg = replace(cfg, duration_s=args.duration)
    return cfg


def cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"OK scenario={cfg.scenario_id} "
          f"(lambda_tot={cfg.traffic.lambda_tot}/s, K={cfg.K}, L={cfg.L}, "
          f"duration={cfg.duration_s}s, replications={cfg.replications})")
    return 0


def cmd_ccdf(args) -> int:
    cfg = _load(args)
    times = [float(x) for x in args.times.split(",")] if args.times else None
    distances = [float(x) for x in args.distances_m.split(",")] \
        if args.distances_m else (0.0, 60.0, 120.0)
    out = args.out or f"out/{cfg.scenario_id}-ccdf"
    res = run_ccdf(cfg, times=times, distances_m=distances, out_dir=out)
    print(f"wrote {out}/ccdf.csv and {out}/trajectory.csv "
          f"(snapshots at t={['%.0f' % t for t in res['times']]} s)")
    return 0


def cmd_dynamics(args) -> int:
    cfg = _load(args)
    out = args.out or f"out/{cfg.scenario_id}-dynamics"
    res = run_dynamics(cfg, out_dir=out)
    if not res.baseline_stable:
        print("warning: macro-only baseline is unstable (rho_bar >= 1); "
              "analytic baseline throughput is 0, empirical metrics remain valid",
              file=sys.stderr)
    near, far = res.window_masks()
    rr = res.replications[0]
    print(f"wrote {out}/metrics_sc.csv, metrics_macro_only.csv, "
          f"metrics_empirical.csv, summary.csv")
    print(f"baseline rho_bar={res.windows_mo.rho_bar[0]:.4f}; "
          f"rep0 near-window rho_bar={rr.windows_sc.rho_bar[near].mean():.4f}, "
          f"far-window rho_bar={rr.windows_sc.rho_bar[far].mean():.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [float(x) for x in args.values.split(",")]
    out = args.out or f"out/{cfg.scenario_id}-sweep"
    run_sweep(cfg, args.parameter, values, out_dir=out)
    print(f"wrote {out}/sweep_{args.parameter}.csv ({len(values)} values x "
          f"{cfg.replications} replications)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mobicell",
        description="Moving-small-cell offloading: CCDF snapshots, coupled "
                    "flow-level dynamics and parameter sweeps.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, replication_opts=False):
        sp.add_argument("--config", help="scenario file (default: bundled reference scenario)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--workers", type=int, help="parallel replication workers")
        sp.add_argument("--samples", type=int, help="Monte Carlo samples per snapshot")
        if replication_opts:
            sp.add_argument("--replications", type=int, help="override replication count")
            sp.add_argument("--duration", type=float, help="override horizon (s)")

    sp = sub.add_parser("validate", help="check a scenario file")
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("ccdf", help="throughput CCDFs at chosen times/distances")
    common(sp)
    sp.add_argument("--times", help="comma-separated snapshot times in s")
    sp.add_argument("--distances-m",
                    help="comma-separated cell-to-hotspot distances in m (default 0,60,120)")
    sp.set_defaults(func=cmd_ccdf)

    sp = sub.add_parser("dynamics", help="full load/throughput time-series experiment")
    common(sp, replication_opts=True)
    sp.set_defaults(func=cmd_dynamics)

    sp = sub.add_parser("sweep", help="repeat dynamics over one parameter")
    common(sp, replication_opts=True)
    sp.add_argument("parameter", help=f"one of {', '.join(SWEEP_PARAMS)}")
    sp.add_argument("values", help="comma-separated parameter values")
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return _fail(EXIT_CONFIG, "config", exc.errors)
    except FileNotFoundError as exc:
        return _fail(EXIT_CONFIG, "config", str(exc))
    except (InstabilityError, UndefinedChainError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except ValueError as exc:
        return _fail(EXIT_CONFIG, "invalid-argument", str(exc))


if __name__ == "__main__":
    sys.exit(main())
