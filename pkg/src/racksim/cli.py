"""Command-line front end.

Exit status is 0 on success, 1 when a run fails (I/O, trace or simulation
error) and 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ENV_CONFIG, ConfigError, RunConfig, load_config
from .experiment import (
    SWEEP_PAGE_POLICIES, SWEEP_POOL_POLICIES, build_trace, comparison_row, format_table,
    run_cell, sweep_cells, write_cell,
)
from .frontend import cache_filter, iter_refs
from .gmm import POLICIES
from .trace import TraceError, write_trace

EXIT_OK, EXIT_RUN, EXIT_CONFIG = 0, 1, 2


def _config_args(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", help=f"config file (default: ${ENV_CONFIG} or built-in defaults)")
    p.add_argument("--profile", choices=("rack", "desk"))
    p.add_argument("--pools", type=int)
    p.add_argument("--policy", dest="pool_policy", choices=POLICIES, help="pool-selection policy")
    p.add_argument("--page-policy", choices=SWEEP_PAGE_POLICIES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")


def _overrides(args) -> dict:
    ov = {}
    for key in ("profile", "pools", "pool_policy", "page_policy", "seed", "out"):
        v = getattr(args, key, None)
        if v is not None:
            ov[key] = v
    if getattr(args, "dump_completions", False):
        ov["dump_completions"] = True
    if getattr(args, "record_packets", False):
        ov["record_packets"] = True
    for item in args.sets:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip()] = v.strip()
    return ov


def _load(args) -> RunConfig:
    return load_config(args.config, _overrides(args))


def _cmd_run(args) -> int:
    cfg = _load(args)
    trace = build_trace(cfg)
    report = run_cell(cfg, trace)
    write_cell(cfg, report, cfg.out)
    print(format_table([comparison_row(f"{cfg.page_policy}__{cfg.pool_policy}", report)]))
    print(f"report written to {cfg.out}")
    return EXIT_OK


def _sweep_worker(item):
    name, cfg = item
    report = run_cell(cfg)
    write_cell(cfg, report, os.path.join(cfg.out, name))
    return name, comparison_row(name, report)


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    pool_policies = args.pool_policies.split(",") if args.pool_policies else SWEEP_POOL_POLICIES
    page_policies = args.page_policies.split(",") if args.page_policies else SWEEP_PAGE_POLICIES
    for p in pool_policies:
        if p not in POLICIES:
            raise ConfigError(f"--pool-policies: unknown policy {p!r}")
    for p in page_policies:
        if p not in SWEEP_PAGE_POLICIES:
            raise ConfigError(f"--page-policies: unknown policy {p!r}")
    cells = list(sweep_cells(cfg, page_policies, pool_policies))
    if args.jobs > 1:
        build_trace(cfg)  # fail fast on a missing trace before forking
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = [row for _, row in ex.map(_sweep_worker, cells)]
    else:
        trace = build_trace(cfg)
        rows = []
        for name, cell in cells:
            report = run_cell(cell, trace)
            write_cell(cell, report, os.path.join(cfg.out, name))
            rows.append(comparison_row(name, report))
    print(format_table(rows))
    return EXIT_OK


def _cmd_gen_trace(args) -> int:
    cfg = _load(args)
    if cfg.trace:
        raise ConfigError("trace: gen-trace synthesizes its own trace; unset the trace key")
    n = write_trace(args.output, build_trace(cfg))
    print(f"wrote {n} records to {args.output}")
    return EXIT_OK


def _cmd_filter_trace(args) -> int:
    cfg = _load(args)
    recs = cache_filter(iter_refs(args.refs), cfg.cache_config(), node_id=args.node)
    # per-thread clocks are independent; order globally for the trace format
    n = write_trace(args.output, sorted(recs, key=lambda r: (r.timestamp, r.thread_id)))
    print(f"wrote {n} LLC-miss records to {args.output}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args)
    sys.stdout.write(cfg.to_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="racksim", description="Rack-scale disaggregated memory simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("run", help="simulate one policy cell")
    _config_args(p)
    p.add_argument("--dump-completions", action="store_true", help="also write every completion")
    p.add_argument("--record-packets", action="store_true", help="also write per-packet timestamps")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run every page-policy x pool-policy cell")
    _config_args(p)
    p.add_argument("--pool-policies", help=f"comma list (default: {','.join(SWEEP_POOL_POLICIES)})")
    p.add_argument("--page-policies", help=f"comma list (default: {','.join(SWEEP_PAGE_POLICIES)})")
    p.add_argument("-j", "--jobs", type=int, default=1, help="cells to run in parallel")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("gen-trace", help="write the synthetic LLC-miss trace for a config")
    _config_args(p)
    p.add_argument("-o", "--output", required=True, help="trace file (.csv or .csv.gz)")
    p.set_defaults(fn=_cmd_gen_trace)

    p = sub.add_parser("filter-trace", help="turn raw thread,vaddr,kind references into LLC misses")
    _config_args(p)
    p.add_argument("refs", help="reference file")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--node", type=int, default=0)
    p.set_defaults(fn=_cmd_filter_trace)

    p = sub.add_parser("validate-config", help="check a config and print the effective values")
    _config_args(p)
    p.set_defaults(fn=_cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
