"""Trace assembly and experiment orchestration (single cells and sweeps)."""

from __future__ import annotations

import itertools
import os

from .addrmap import PAGE_POLICIES
from .config import RunConfig
from .engine import Simulation
from .gmm import ROUND_ROBIN, SMART_IDLE
from .metrics import MetricsReport
from .trace import generate_synthetic, iter_trace, merge_streams

SWEEP_PAGE_POLICIES = PAGE_POLICIES
SWEEP_POOL_POLICIES = (ROUND_ROBIN, SMART_IDLE)


def build_trace(cfg: RunConfig) -> list:
    """Load ``cfg.trace`` or synthesize one stream per node from its preset."""
    if cfg.trace:
        if not os.path.exists(cfg.trace):
            raise FileNotFoundError(f"trace file not found: {cfg.trace}")
        return merge_streams([iter_trace(cfg.trace)])
    labels = cfg.node_labels()
    streams = [generate_synthetic(cfg.presets[labels[n]], n, cfg.seed, cfg.scale)
               for n in range(cfg.nodes)]
    return merge_streams(streams)


def run_cell(cfg: RunConfig, trace=None) -> MetricsReport:
    if trace is None:
        trace = build_trace(cfg)
    return Simulation(cfg, trace).run()


def write_cell(cfg: RunConfig, report: MetricsReport, outdir: str):
    report.export(outdir)
    with open(os.path.join(outdir, "config.echo"), "w", encoding="ascii") as fh:
        fh.write(cfg.to_text())


def sweep_cells(cfg: RunConfig, page_policies=SWEEP_PAGE_POLICIES,
                pool_policies=SWEEP_POOL_POLICIES):
    for page, pool in itertools.product(page_policies, pool_policies):
        yield f"{page}__{pool}", cfg.replace(page_policy=page, pool_policy=pool)


def comparison_row(name: str, report: MetricsReport) -> tuple:
    s = report.summary
    return (name, s["avg_latency_ns"], s["avg_remote_latency_ns"], s["avg_pool_latency_ns"],
            s["tail_fraction"]["1000"], s["mean_pool_variation"])


def format_table(rows) -> str:
    head = ("cell", "avg_ns", "remote_avg_ns", "pool_avg_ns", "frac>=1000ns", "mean_variation")
    out = [f"{head[0]:<28}" + "".join(f"{h:>16}" for h in head[1:])]
    for name, *vals in rows:
        out.append(f"{name:<28}{vals[0]:>16.2f}{vals[1]:>16.2f}{vals[2]:>16.2f}"
                   f"{vals[3]:>16.4f}{vals[4]:>16.1f}")
    return "\n".join(out)
