"""Functional TLB + three-level cache filter producing LLC-miss traces.

Levels are non-inclusive and independent: a line may live in any subset of
levels. Each set replaces round-robin via a cursor that advances on every
fill. Caches are write-back/write-allocate; a dirty victim is written into the
next level down, and a dirty victim of the last level becomes a write record
in the output trace stamped with the evicting access's time.

The per-thread clock advances by the cost of each reference: an L1 hit costs
the L1 latency, an L2 hit costs L1 + L2, and anything resolved at or past the
last level costs the last-level latency (41 cycles by default). A data TLB
miss adds its penalty on top.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .trace import READ, WRITE, LlcMissRecord, TraceError, _open
from .units import KB, LINE_BYTES, MB, PAGE_SHIFT


@dataclass(frozen=True)
class LevelConfig:
    size: int
    ways: int
    latency: int
    line: int = LINE_BYTES

    def __post_init__(self):
        if self.ways < 1 or self.size <= 0 or self.size % (self.ways * self.line):
            raise ValueError(f"cache size {self.size} not divisible by ways*line ({self.ways}x{self.line})")

    @property
    def sets(self) -> int:
        return self.size // (self.ways * self.line)


@dataclass(frozen=True)
class TlbConfig:
    entries: int
    ways: int
    miss_penalty: int

    def __post_init__(self):
        if self.ways < 1 or self.entries % self.ways:
            raise ValueError("TLB entries must be a multiple of associativity")


@dataclass(frozen=True)
class CacheConfig:
    levels: tuple = (
        LevelConfig(32 * KB, 8, 4),
        LevelConfig(256 * KB, 4, 12),
        LevelConfig(16 * MB, 16, 41),
    )
    dtlb: TlbConfig | None = field(default_factory=lambda: TlbConfig(64, 4, 60))
    itlb: TlbConfig | None = field(default_factory=lambda: TlbConfig(128, 8, 60))

    def resolve_cost(self, level: int) -> int:
        """Cycles for a reference resolved at ``level`` (0-based; len(levels) = memory)."""
        lv = self.levels
        if level >= len(lv) - 1:
            return lv[-1].latency
        return sum(x.latency for x in lv[: level + 1])


class SetAssoc:
    """Tag store with per-set round-robin replacement."""

    def __init__(self, sets: int, ways: int):
        self.nsets = sets
        self.ways = ways
        self.tags = [[None] * ways for _ in range(sets)]
        self.dirty = [[False] * ways for _ in range(sets)]
        self.cursor = [0] * sets
        self.lookups = 0

    def find(self, key):
        row = self.tags[key % self.nsets]
        for w in range(self.ways):
            if row[w] == key:
                return w
        return -1

    def fill(self, key, dirty=False):
        """Install ``key``; return the evicted (key, dirty) or None."""
        s = key % self.nsets
        w = self.cursor[s]
        self.cursor[s] = (w + 1) % self.ways
        old, old_dirty = self.tags[s][w], self.dirty[s][w]
        self.tags[s][w] = key
        self.dirty[s][w] = dirty
        return None if old is None else (old, old_dirty)

    def mark_dirty(self, key, way):
        self.dirty[key % self.nsets][way] = True


class CacheHierarchy:
    def __init__(self, cfg: CacheConfig):
        self.cfg = cfg
        self.levels = [SetAssoc(lv.sets, lv.ways) for lv in cfg.levels]
        self.dtlb = None
        if cfg.dtlb is not None:
            self.dtlb = SetAssoc(cfg.dtlb.entries // cfg.dtlb.ways, cfg.dtlb.ways)
        self.writebacks: list[int] = []

    def _write_back(self, level: int, line: int):
        if level == len(self.levels):
            self.writebacks.append(line)
            return
        cache = self.levels[level]
        w = cache.find(line)
        if w >= 0:
            cache.mark_dirty(line, w)
            return
        self._install(level, line, dirty=True)

    def _install(self, level: int, line: int, dirty: bool):
        victim = self.levels[level].fill(line, dirty)
        if victim is not None and victim[1]:
            self._write_back(level + 1, victim[0])

    def access(self, vaddr: int, is_write: bool):
        """Return (cycles, llc_miss, writeback_lines) for one data reference."""
        self.writebacks = []
        cost = 0
        if self.dtlb is not None:
            page = vaddr >> PAGE_SHIFT
            if self.dtlb.find(page) < 0:
                self.dtlb.fill(page)
                cost += self.cfg.dtlb.miss_penalty
        line = vaddr // LINE_BYTES
        hit_level = len(self.levels)
        for k, cache in enumerate(self.levels):
            cache.lookups += 1
            w = cache.find(line)
            if w >= 0:
                hit_level = k
                if is_write and k == 0:
                    cache.mark_dirty(line, w)
                break
        cost += self.cfg.resolve_cost(hit_level)
        # allocate in every level that missed, farthest first
        for k in range(hit_level - 1, -1, -1):
            self._install(k, line, dirty=(is_write and k == 0))
        return cost, hit_level == len(self.levels), self.writebacks


def cache_filter(refs: Iterable[tuple], cfg: CacheConfig | None = None,
                 node_id: int = 0) -> Iterator[LlcMissRecord]:
    """Turn per-thread (thread, vaddr, kind) references into LLC-miss records.

    Threads share one hierarchy but keep separate clocks, so the output is
    time-ordered per thread, not globally.
    """
    h = CacheHierarchy(cfg or CacheConfig())
    clock: dict[int, int] = {}
    for thread, vaddr, kind in refs:
        cost, miss, wbs = h.access(vaddr, kind == WRITE)
        clock[thread] = clock.get(thread, 0) + cost
        now = clock[thread]
        if miss:
            yield LlcMissRecord(now, node_id, thread, vaddr & ~(LINE_BYTES - 1), kind)
        for wb in wbs:
            yield LlcMissRecord(now, node_id, thread, wb * LINE_BYTES, WRITE)


def parse_ref_line(line: str, lineno: int | None = None) -> tuple:
    where = f"line {lineno}" if lineno is not None else "reference line"
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) != 3:
        raise TraceError(f"{where}: expected thread,vaddr,kind")
    try:
        thread, vaddr = int(fields[0]), int(fields[1], 16)
    except ValueError:
        raise TraceError(f"{where}: non-numeric field") from None
    kind = fields[2].upper()
    if kind not in (READ, WRITE):
        raise TraceError(f"{where}: kind must be R or W")
    return thread, vaddr, kind


def iter_refs(path) -> Iterator[tuple]:
    with _open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            if lineno == 1 and line.strip().startswith("thread"):
                continue
            yield parse_ref_line(line, lineno)
