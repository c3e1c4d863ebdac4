"""Per-access completion records, streaming aggregates and report export.

All sums are kept as integer picoseconds; conversion to nanoseconds happens
only when a report is exported. Epoch ``k`` covers simulated time
``(k*E, (k+1)*E]`` so that a cumulative value at epoch ``k`` includes every
completion at or before the epoch's right edge.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

SCHEMA_VERSION = 1

# latency buckets in ns; 500 and 1000 are the edges the tail analysis uses
BUCKET_EDGES_NS = (200, 500, 1000, 2000)
TAIL_EDGES_NS = (500, 1000, 2000)
_EDGES_PS = tuple(e * 1000 for e in BUCKET_EDGES_NS)


class BreakdownError(RuntimeError):
    pass


class CompletionRecord(NamedTuple):
    node_id: int
    label: str
    remote: bool
    latency: int  # ps, end to end
    local: int
    network: int
    remote_queue: int
    remote_service: int
    done: int  # completion sim-time, ps

    @property
    def pool_latency(self) -> int:
        return self.remote_queue + self.remote_service


def histogram_bucket(latency_ns: float) -> int:
    if latency_ns < 0:
        raise ValueError("latency must be non-negative")
    for i, edge in enumerate(BUCKET_EDGES_NS):
        if latency_ns < edge:
            return i
    return len(BUCKET_EDGES_NS)


def _bucket_ps(latency_ps: int) -> int:
    for i, edge in enumerate(_EDGES_PS):
        if latency_ps < edge:
            return i
    return len(_EDGES_PS)


def bucket_label(i: int) -> str:
    lo = 0 if i == 0 else BUCKET_EDGES_NS[i - 1]
    hi = BUCKET_EDGES_NS[i] if i < len(BUCKET_EDGES_NS) else "inf"
    return f"[{lo},{hi})"


def pool_access_variation(counts) -> int:
    counts = list(counts)
    return max(counts) - min(counts) if counts else 0


def epoch_of(t_ps: int, epoch_ps: int) -> int:
    return (t_ps - 1) // epoch_ps if t_ps > 0 else 0


def n_epochs(duration_ps: int, epoch_ps: int) -> int:
    return -(-duration_ps // epoch_ps)


@dataclass
class _Agg:
    count: int = 0
    latency: int = 0
    local: int = 0
    network: int = 0
    remote_queue: int = 0
    remote_service: int = 0
    remote_count: int = 0
    remote_latency: int = 0
    pool_latency: int = 0
    hist: list = field(default_factory=lambda: [0] * (len(BUCKET_EDGES_NS) + 1))
    pool_hist: list = field(default_factory=lambda: [0] * (len(BUCKET_EDGES_NS) + 1))
    # epoch -> [count, latency sum, remote count, remote sum, pool-side sum]
    epochs: dict = field(default_factory=dict)


class MetricsCollector:
    def __init__(self, n_pools: int, epoch_ps: int, keep_completions: bool = False):
        if epoch_ps <= 0:
            raise ValueError("epoch length must be positive")
        self.n_pools = n_pools
        self.epoch_ps = epoch_ps
        self.aggs: dict[str, _Agg] = {}
        self.pool_epoch_counts: dict[int, list[int]] = {}
        self.keep_completions = keep_completions
        self.completions: list[CompletionRecord] = []
        self.oom_drops = 0
        self.end_time = 0

    def record_completion(self, rec: CompletionRecord):
        if rec.local + rec.network + rec.remote_queue + rec.remote_service != rec.latency:
            raise BreakdownError(f"breakdown does not sum to latency: {rec}")
        if not rec.remote and (rec.network or rec.remote_queue or rec.remote_service):
            raise BreakdownError(f"local access with remote components: {rec}")
        a = self.aggs.get(rec.label)
        if a is None:
            a = self.aggs[rec.label] = _Agg()
        lat = rec.latency
        a.count += 1
        a.latency += lat
        a.local += rec.local
        a.network += rec.network
        a.remote_queue += rec.remote_queue
        a.remote_service += rec.remote_service
        e = epoch_of(rec.done, self.epoch_ps)
        row = a.epochs.get(e)
        if row is None:
            row = a.epochs[e] = [0, 0, 0, 0, 0]
        row[0] += 1
        row[1] += lat
        if rec.remote:
            pl = rec.remote_queue + rec.remote_service
            a.remote_count += 1
            a.remote_latency += lat
            a.pool_latency += pl
            a.hist[_bucket_ps(lat)] += 1
            a.pool_hist[_bucket_ps(pl)] += 1
            row[2] += 1
            row[3] += lat
            row[4] += pl
        if rec.done > self.end_time:
            self.end_time = rec.done
        if self.keep_completions:
            self.completions.append(rec)

    def record_pool_access(self, pool: int, t_ps: int):
        e = epoch_of(t_ps, self.epoch_ps)
        row = self.pool_epoch_counts.get(e)
        if row is None:
            row = self.pool_epoch_counts[e] = [0] * self.n_pools
        row[pool] += 1

    def note_time(self, t_ps: int):
        if t_ps > self.end_time:
            self.end_time = t_ps

    def build_report(self, meta: dict) -> "MetricsReport":
        return MetricsReport.from_collector(self, meta)


def _avg(total, count):
    return total / count / 1000 if count else 0.0


class MetricsReport:
    """Finished metrics of one run, with CSV/JSON export."""

    def __init__(self):
        self.labels: list[str] = []
        self.epoch_ps = 0
        self.duration_ps = 0
        self.epoch_rows: list[tuple] = []
        self.remote_epoch_rows: list[tuple] = []
        self.hist_rows: list[tuple] = []
        self.breakdown_rows: list[tuple] = []
        self.variation_rows: list[tuple] = []
        self.summary: dict = {}
        self.completions: list[CompletionRecord] = []
        self.grant_log: list[tuple] = []
        self.packet_log: list[tuple] = []

    @classmethod
    def from_collector(cls, col: MetricsCollector, meta: dict) -> "MetricsReport":
        r = cls()
        r.epoch_ps = E = col.epoch_ps
        r.duration_ps = col.end_time
        ne = n_epochs(col.end_time, E)
        r.labels = sorted(col.aggs)
        r.completions = col.completions
        tot = _Agg()
        for label in r.labels:
            a = col.aggs[label]
            cnt = lat = rcnt = rlat = plat = 0
            for k in range(ne):
                row = a.epochs.get(k)
                if row:
                    cnt += row[0]
                    lat += row[1]
                    rcnt += row[2]
                    rlat += row[3]
                    plat += row[4]
                t_ns = (k + 1) * E / 1000
                r.epoch_rows.append((k, t_ns, label, _avg(lat, cnt)))
                r.remote_epoch_rows.append((k, t_ns, label, _avg(rlat, rcnt), _avg(plat, rcnt)))
            for i in range(len(a.hist)):
                r.hist_rows.append((label, bucket_label(i), a.hist[i], a.pool_hist[i]))
            r.breakdown_rows.append((label, _avg(a.local, a.count), _avg(a.network, a.count),
                                     _avg(a.remote_queue, a.count), _avg(a.remote_service, a.count)))
            for f in ("count", "latency", "local", "network", "remote_queue", "remote_service",
                      "remote_count", "remote_latency", "pool_latency"):
                setattr(tot, f, getattr(tot, f) + getattr(a, f))
            tot.hist = [x + y for x, y in zip(tot.hist, a.hist)]
            tot.pool_hist = [x + y for x, y in zip(tot.pool_hist, a.pool_hist)]

        variations = []
        for k in range(ne):
            counts = col.pool_epoch_counts.get(k, [0] * col.n_pools)
            v = pool_access_variation(counts)
            variations.append(v)
            r.variation_rows.append((k, (k + 1) * E / 1000, v, *counts))

        def tails(hist, count):
            out = {}
            for edge in TAIL_EDGES_NS:
                idx = BUCKET_EDGES_NS.index(edge)
                out[str(edge)] = sum(hist[idx + 1:]) / count if count else 0.0
            return out

        per_label = {}
        for label in r.labels:
            a = col.aggs[label]
            per_label[label] = {
                "accesses": a.count,
                "remote_accesses": a.remote_count,
                "avg_latency_ns": _avg(a.latency, a.count),
                "avg_remote_latency_ns": _avg(a.remote_latency, a.remote_count),
                "avg_pool_latency_ns": _avg(a.pool_latency, a.remote_count),
                "tail_fraction": tails(a.hist, a.remote_count),
            }
        r.summary = {
            "schema_version": SCHEMA_VERSION,
            **meta,
            "duration_ns": col.end_time / 1000,
            "epoch_ns": E / 1000,
            "epochs": ne,
            "totals": {
                **meta.get("totals", {}),
                "completed": tot.count,
                "remote_completed": tot.remote_count,
                "local_completed": tot.count - tot.remote_count,
                "oom_drops": col.oom_drops,
            },
            "avg_latency_ns": _avg(tot.latency, tot.count),
            "avg_remote_latency_ns": _avg(tot.remote_latency, tot.remote_count),
            "avg_pool_latency_ns": _avg(tot.pool_latency, tot.remote_count),
            "breakdown_ns": {
                "local": _avg(tot.local, tot.count),
                "network": _avg(tot.network, tot.count),
                "remote_queue": _avg(tot.remote_queue, tot.count),
                "remote_service": _avg(tot.remote_service, tot.count),
            },
            "remote_histogram": {bucket_label(i): c for i, c in enumerate(tot.hist)},
            "pool_histogram": {bucket_label(i): c for i, c in enumerate(tot.pool_hist)},
            "tail_fraction": tails(tot.hist, tot.remote_count),
            "pool_tail_fraction": tails(tot.pool_hist, tot.remote_count),
            "mean_pool_variation": sum(variations) / len(variations) if variations else 0.0,
            "benchmarks": per_label,
        }
        return r

    # convenience accessors
    @property
    def avg_remote_latency_ns(self) -> float:
        return self.summary["avg_remote_latency_ns"]

    @property
    def mean_variation(self) -> float:
        return self.summary["mean_pool_variation"]

    def tail_fraction(self, edge_ns: int = 1000) -> float:
        return self.summary["tail_fraction"][str(edge_ns)]

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.summary_json().encode()).hexdigest()

    def export(self, outdir, fmt: str = "csv"):
        """Write every series as CSV plus ``summary.json`` into ``outdir``."""
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown export format {fmt!r}")
        try:
            os.makedirs(outdir, exist_ok=True)
            with open(os.path.join(outdir, "summary.json"), "w", encoding="ascii") as fh:
                fh.write(self.summary_json())
            if fmt == "json":
                return
            pools = len(self.variation_rows[0]) - 3 if self.variation_rows else self.summary.get("pools", 0)
            tables = {
                "epoch_latency.csv": (("epoch_index", "sim_time_ns", "benchmark", "cumulative_avg_ns"),
                                      self.epoch_rows),
                "remote_epoch_latency.csv": (("epoch_index", "sim_time_ns", "benchmark",
                                              "cumulative_remote_avg_ns", "cumulative_pool_avg_ns"),
                                             self.remote_epoch_rows),
                "latency_histogram.csv": (("benchmark", "bucket_ns", "remote_count", "pool_side_count"),
                                          self.hist_rows),
                "latency_breakdown.csv": (("benchmark", "local_ns", "network_ns",
                                           "remote_queue_ns", "remote_service_ns"), self.breakdown_rows),
                "pool_variation.csv": (("epoch_index", "sim_time_ns", "variation",
                                        *(f"pool{i}" for i in range(pools))), self.variation_rows),
                "grants.csv": (("grant_index", "policy", "pool", "node", "sim_time_ns"),
                               [(i, p, pool, n, t / 1000) for i, p, pool, n, t in self.grant_log]),
            }
            if self.completions:
                tables["completions.csv"] = (CompletionRecord._fields, self.completions)
            if self.packet_log:
                tables["packets.csv"] = (("pkt_id", "kind", "injected", "nic_out", "switch_in",
                                          "switch_out", "delivered"),
                                         [(p, k, *(t / 1000 for t in ts)) for p, k, *ts in self.packet_log])
            for name, (header, rows) in tables.items():
                with open(os.path.join(outdir, name), "w", newline="", encoding="ascii") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(header)
                    for row in rows:
                        w.writerow([_fmt(x) for x in row])
        except OSError as exc:
            raise OSError(f"export to {outdir} failed: {exc}") from exc


def export(report: MetricsReport, fmt: str, path):
    """Functional form of :meth:`MetricsReport.export`."""
    report.export(path, fmt)


def _fmt(x):
    if isinstance(x, float):
        if math.isfinite(x) and x == int(x):
            return f"{x:.1f}"
        return f"{x:.3f}"
    return x
