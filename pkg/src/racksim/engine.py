"""Discrete-event core and the memory-access lifecycle.

Time is integer picoseconds. Events are ordered by (time, sequence number).
Trace records are injected open-loop at their timestamps (cycles x 833ps);
each access is translated by its node's MMU (faulting pages in on first
touch), then served by the node's local DRAM or sent as a request packet to a
pool, served by that pool's DRAM and returned as a response packet.
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Iterable

from .addrmap import NodeMMU, audit_mappings
from .config import RunConfig
from .dram import DramDevice
from .fabric import REQUEST, RESPONSE, Fabric
from .gmm import GlobalMemoryManager
from .metrics import CompletionRecord, MetricsCollector, MetricsReport
from .trace import LlcMissRecord, TraceError
from .units import CYCLE_PS, PAGE_SHIFT, ns

_OFFSET_MASK = (1 << PAGE_SHIFT) - 1


class CausalityError(RuntimeError):
    pass


class SimulationError(RuntimeError):
    pass


class Access:
    __slots__ = ("node", "vaddr", "kind", "pool", "addr", "injected",
                 "pool_arrival", "dram_start", "dram_done")

    def __init__(self, node, vaddr, kind, pool, addr, injected):
        self.node = node
        self.vaddr = vaddr
        self.kind = kind
        self.pool = pool
        self.addr = addr
        self.injected = injected
        self.pool_arrival = self.dram_start = self.dram_done = -1


class EventQueue:
    """Min-heap of (time, seq, handler, arg) with a monotone clock."""

    def __init__(self):
        self.heap: list = []
        self.seq = 0
        self.now = 0
        self.processed = 0

    def __len__(self):
        return len(self.heap)

    def schedule(self, time: int, fn, arg=None):
        if time < self.now:
            raise CausalityError(f"event at {time}ps scheduled in the past (now={self.now}ps)")
        self.seq += 1
        heapq.heappush(self.heap, (time, self.seq, fn, arg))

    def step(self):
        """Process the earliest event and return it as (time, seq, handler, arg)."""
        if not self.heap:
            raise IndexError("event queue is empty")
        ev = heapq.heappop(self.heap)
        self.now = ev[0]
        self.processed += 1
        ev[2](ev[3])
        return ev

    def run(self):
        heap = self.heap
        pop = heapq.heappop
        n = 0
        while heap:
            t, _, fn, arg = pop(heap)
            self.now = t
            fn(arg)
            n += 1
        self.processed += n


class Simulation(EventQueue):
    def __init__(self, cfg: RunConfig, trace: Iterable[LlcMissRecord], labels=None):
        super().__init__()
        self.cfg = cfg
        self.labels = labels or cfg.node_labels()
        n_nodes, n_pools = cfg.nodes, cfg.pools
        self.n_nodes = n_nodes
        self.gmm = GlobalMemoryManager(n_pools, cfg.pool_capacity, cfg.chunk_size,
                                       cfg.pool_policy, cfg.seed)
        self.mmus = [NodeMMU(i, self.gmm, cfg.page_policy, cfg.local_memory) for i in range(n_nodes)]
        ldc, pdc = cfg.local_dram_config(), cfg.pool_dram_config()
        self.local_dram = [DramDevice(ldc, f"node{i}") for i in range(n_nodes)]
        self.pool_dram = [DramDevice(pdc, f"pool{i}") for i in range(n_pools)]
        self.fabric = Fabric(cfg.fabric_config(), n_nodes + n_pools, self, self._on_deliver,
                             can_accept=self._can_accept, accept_retry_time=self._retry_time,
                             record_packets=cfg.record_packets)
        self.metrics = MetricsCollector(n_pools, cfg.epoch_ps, keep_completions=cfg.dump_completions)
        self.grant_delay = ns(cfg.grant_latency_ns)
        self.cap = cfg.max_outstanding
        self.outstanding = [0] * n_nodes
        self.backlog = [deque() for _ in range(n_nodes)]
        self.local_wait = [deque() for _ in range(n_nodes)]
        self.local_retry = [False] * n_nodes
        self.injected = 0
        self.completed = 0
        self._trace = iter(trace)
        self._last_ts = -1

    # -- trace feeding --------------------------------------------------------

    def _feed(self):
        rec = next(self._trace, None)
        if rec is None:
            return
        if rec.timestamp < self._last_ts:
            raise TraceError(f"trace not time-ordered at timestamp {rec.timestamp}")
        if not 0 <= rec.node_id < self.n_nodes:
            raise TraceError(f"trace record for node {rec.node_id} but only {self.n_nodes} nodes")
        self._last_ts = rec.timestamp
        self.schedule(rec.timestamp * CYCLE_PS, self._on_record, rec)

    def _on_record(self, rec: LlcMissRecord):
        self._feed()
        self.injected += 1
        node = rec.node_id
        if self.cap and self.outstanding[node] >= self.cap:
            self.backlog[node].append(rec)
            return
        self._issue(rec)

    def _issue(self, rec: LlcMissRecord):
        now = self.now
        node = rec.node_id
        mmu = self.mmus[node]
        vaddr = rec.vaddr
        hit = mmu.table.fast.get(vaddr >> PAGE_SHIFT)
        delay = 0
        if hit is None:
            before = mmu.chunk_requests
            if mmu.handle_page_fault(vaddr, now) is None:
                self.metrics.oom_drops += 1
                self._maybe_unblock(node)
                return
            if mmu.chunk_requests != before:
                delay = self.grant_delay
            hit = mmu.table.fast[vaddr >> PAGE_SHIFT]
        pool, base = hit
        acc = Access(node, vaddr, rec.kind, pool, base + (vaddr & _OFFSET_MASK), now)
        self.outstanding[node] += 1
        if pool < 0:
            self._local_submit(acc)
        else:
            fab = self.fabric
            pkt = fab.new_packet(REQUEST, node, self.n_nodes + pool, acc)
            fab.inject(pkt, now + delay)

    # -- local memory ---------------------------------------------------------

    def _local_submit(self, acc: Access):
        node = acc.node
        dev = self.local_dram[node]
        wait = self.local_wait[node]
        if wait or not dev.has_room(acc.addr, self.now):
            wait.append(acc)
            self._arm_local_retry(node)
            return
        start, done = dev.schedule(acc.addr, acc.kind, self.now)
        self.schedule(done, self._local_done, acc)

    def _arm_local_retry(self, node):
        if not self.local_retry[node]:
            self.local_retry[node] = True
            self.schedule(self.local_dram[node].room_time(self.local_wait[node][0].addr),
                          self._local_drain, node)

    def _local_drain(self, node):
        self.local_retry[node] = False
        dev = self.local_dram[node]
        wait = self.local_wait[node]
        while wait:
            acc = wait[0]
            if not dev.has_room(acc.addr, self.now):
                self._arm_local_retry(node)
                return
            wait.popleft()
            start, done = dev.schedule(acc.addr, acc.kind, self.now)
            self.schedule(done, self._local_done, acc)

    def _local_done(self, acc: Access):
        lat = self.now - acc.injected
        self.metrics.record_completion(CompletionRecord(
            acc.node, self.labels[acc.node], False, lat, lat, 0, 0, 0, self.now))
        self._finish(acc.node)

    # -- remote memory --------------------------------------------------------

    def _can_accept(self, pkt) -> bool:
        if pkt.kind != REQUEST:
            return True
        acc = pkt.access
        return self.pool_dram[acc.pool].has_room(acc.addr, self.now)

    def _retry_time(self, pkt) -> int:
        acc = pkt.access
        return self.pool_dram[acc.pool].room_time(acc.addr)

    def _on_deliver(self, pkt):
        acc: Access = pkt.access
        now = self.now
        if pkt.kind == REQUEST:
            pool = acc.pool
            self.gmm.record_pool_access(pool)
            self.metrics.record_pool_access(pool, now)
            acc.pool_arrival = pkt.delivered
            acc.dram_start, acc.dram_done = self.pool_dram[pool].schedule(acc.addr, acc.kind, now)
            fab = self.fabric
            fab.inject(fab.new_packet(RESPONSE, pkt.dst, acc.node, acc), acc.dram_done)
            return
        lat = now - acc.injected
        rq = acc.dram_start - acc.pool_arrival
        rs = acc.dram_done - acc.dram_start
        self.metrics.record_completion(CompletionRecord(
            acc.node, self.labels[acc.node], True, lat, 0, lat - rq - rs, rq, rs, now))
        self._finish(acc.node)

    def _finish(self, node):
        self.completed += 1
        self.outstanding[node] -= 1
        self._maybe_unblock(node)

    def _maybe_unblock(self, node):
        if self.backlog[node] and (not self.cap or self.outstanding[node] < self.cap):
            self._issue(self.backlog[node].popleft())

    # -- driver ---------------------------------------------------------------

    def run(self) -> MetricsReport:
        self._feed()
        super().run()
        return self.finish()

    def finish(self) -> MetricsReport:
        m = self.metrics
        m.note_time(self.now)
        for dev in self.local_dram + self.pool_dram:
            dev.drain()
        if self.injected != self.completed + m.oom_drops:
            raise SimulationError(f"access conservation violated: injected {self.injected}, "
                                  f"completed {self.completed}, dropped {m.oom_drops}")
        if self.fabric.injected != self.fabric.delivered:
            raise SimulationError(f"packet conservation violated: {self.fabric.injected} injected, "
                                  f"{self.fabric.delivered} delivered")
        for i, p in enumerate(self.gmm.pools):
            charged = sum(mmu.charged.get(i, 0) for mmu in self.mmus)
            if charged != p.allocated_bytes:
                raise SimulationError(f"pool {i}: nodes charged {charged} bytes, manager has {p.allocated_bytes}")
        cfg = self.cfg
        meta = {
            "config_hash": cfg.digest(),
            "seed": cfg.seed,
            "page_policy": cfg.page_policy,
            "pool_policy": cfg.pool_policy,
            "nodes": cfg.nodes,
            "pools": cfg.pools,
            "config": cfg.to_dict(),
            "totals": {
                "injected": self.injected,
                "packets": self.fabric.injected,
                "grants": len(self.gmm.grant_log),
                "denials": self.gmm.denials,
                "events": self.processed,
                "local_pages": sum(mmu.local_pages() for mmu in self.mmus),
                "remote_pages": sum(len(mmu.table) - mmu.local_pages() for mmu in self.mmus),
            },
            "pool_stats": [
                {"pool": i, "allocated_bytes": p.allocated_bytes,
                 "lifetime_accesses": p.lifetime_access_count, **self.pool_dram[i].summary()}
                for i, p in enumerate(self.gmm.pools)
            ],
            "local_dram_max_queue_depth": max(d.summary()["max_queue_depth"] for d in self.local_dram),
            "nic_max_egress_bytes": max(n.max_egress_bytes for n in self.fabric.nics),
        }
        report = m.build_report(meta)
        report.grant_log = list(self.gmm.grant_log)
        report.packet_log = self.fabric.packet_log
        return report

    def audit(self) -> list[str]:
        return audit_mappings(self.mmus)


def run(config: RunConfig, trace: Iterable[LlcMissRecord]) -> MetricsReport:
    """Simulate ``trace`` (time-ordered LLC misses) on the rack in ``config``."""
    return Simulation(config, trace).run()
