"""Per-node MMU: page placement policies and virtual-to-physical translation."""

from __future__ import annotations

from typing import NamedTuple

from .gmm import GlobalMemoryManager
from .units import MB, PAGE_BYTES, PAGE_SHIFT

LOCAL_FIRST = "local_first"
ALTERNATE = "alternate"
PAGE_POLICIES = (LOCAL_FIRST, ALTERNATE)

_OFFSET_MASK = PAGE_BYTES - 1


class Local(NamedTuple):
    frame: int


class Remote(NamedTuple):
    pool: int
    chunk_id: int
    chunk_base: int
    offset: int


class PhysicalTarget(NamedTuple):
    pool: int | None  # None means the node's local DRAM
    addr: int

    @property
    def is_remote(self) -> bool:
        return self.pool is not None


class TranslationError(RuntimeError):
    """Access to an unmapped page; the engine must fault before translating."""


class PageTable:
    def __init__(self):
        self.placements: dict[int, Local | Remote] = {}
        # page -> (pool or -1, physical page base); the engine's fast path
        self.fast: dict[int, tuple[int, int]] = {}

    def __len__(self):
        return len(self.placements)

    def map(self, vpage: int, placement):
        if vpage in self.placements:
            raise ValueError(f"page {vpage:#x} already mapped")
        self.placements[vpage] = placement
        if isinstance(placement, Local):
            self.fast[vpage] = (-1, placement.frame * PAGE_BYTES)
        else:
            self.fast[vpage] = (placement.pool, placement.chunk_base + placement.offset)

    def lookup(self, vpage: int):
        return self.placements.get(vpage)


def translate(table: PageTable, vaddr: int) -> PhysicalTarget:
    hit = table.fast.get(vaddr >> PAGE_SHIFT)
    if hit is None:
        raise TranslationError(f"unmapped virtual address {vaddr:#x}")
    pool, base = hit
    return PhysicalTarget(None if pool < 0 else pool, base + (vaddr & _OFFSET_MASK))


class NodeMMU:
    """Page table plus allocation state for one compute node.

    Under ``local_first`` pages go to local frames until none remain. Under
    ``alternate`` even-numbered faults go local and odd ones remote while
    frames remain; afterwards everything goes remote. Remote pages are carved
    sequentially out of the node's current chunk, and a new chunk is requested
    from the global manager whenever the current one is used up.
    """

    def __init__(self, node_id: int, gmm: GlobalMemoryManager,
                 policy: str = ALTERNATE, local_bytes: int = 256 * MB):
        if policy not in PAGE_POLICIES:
            raise ValueError(f"unknown page policy {policy!r}; expected one of {PAGE_POLICIES}")
        self.node_id = node_id
        self.gmm = gmm
        self.policy = policy
        self.local_capacity = local_bytes // PAGE_BYTES
        self.free_local_frames = self.local_capacity
        self.current_chunk = None  # (grant, next_free_offset)
        self.fault_counter = 0
        self.table = PageTable()
        self.chunk_requests = 0
        self.oom_faults = 0
        self.charged: dict[int, int] = {}

    def _wants_local(self) -> bool:
        if self.free_local_frames == 0:
            return False
        if self.policy == LOCAL_FIRST:
            return True
        return self.fault_counter % 2 == 0

    def handle_page_fault(self, vaddr: int, now: int = 0):
        """Map the page holding ``vaddr``; return its placement or None on OOM."""
        vpage = vaddr >> PAGE_SHIFT
        if vpage in self.table.placements:
            raise ValueError(f"page {vpage:#x} already mapped on node {self.node_id}")
        local = self._wants_local()
        self.fault_counter += 1
        if local:
            placement = Local(self.local_capacity - self.free_local_frames)
            self.free_local_frames -= 1
        else:
            placement = self._remote_page(now)
            if placement is None:
                self.oom_faults += 1
                return None
        self.table.map(vpage, placement)
        return placement

    def _remote_page(self, now):
        cur = self.current_chunk
        if cur is None or cur[1] + PAGE_BYTES > cur[0].size:
            grant = self.gmm.allocate_chunk(self.node_id, now)
            self.chunk_requests += 1
            if grant is None:
                return None
            self.charged[grant.pool_id] = self.charged.get(grant.pool_id, 0) + grant.size
            cur = self.current_chunk = [grant, 0]
        grant, offset = cur
        cur[1] = offset + PAGE_BYTES
        return Remote(grant.pool_id, grant.grant_index, grant.base_offset, offset)

    def translate(self, vaddr: int) -> PhysicalTarget:
        return translate(self.table, vaddr)

    def local_pages(self) -> int:
        return self.local_capacity - self.free_local_frames

    def dump(self, fh):
        """Write the page table as CSV rows (debugging aid)."""
        fh.write("node,vpage,where,frame_or_pool,chunk,offset\n")
        for vpage, p in sorted(self.table.placements.items()):
            if isinstance(p, Local):
                fh.write(f"{self.node_id},{vpage:#x},local,{p.frame},,\n")
            else:
                fh.write(f"{self.node_id},{vpage:#x},remote,{p.pool},{p.chunk_id},{p.offset}\n")


def audit_mappings(mmus) -> list[str]:
    """Check that no two pages share physical memory; return the problems found."""
    problems = []
    seen_remote: dict[tuple[int, int], tuple[int, int]] = {}
    for mmu in mmus:
        frames = set()
        for vpage, p in mmu.table.placements.items():
            if isinstance(p, Local):
                if p.frame in frames:
                    problems.append(f"node {mmu.node_id}: frame {p.frame} mapped twice")
                frames.add(p.frame)
                if p.frame >= mmu.local_capacity:
                    problems.append(f"node {mmu.node_id}: frame {p.frame} beyond capacity")
            else:
                if p.offset + PAGE_BYTES > mmu.gmm.chunk_size:
                    problems.append(f"node {mmu.node_id}: offset {p.offset} outside chunk")
                key = (p.pool, p.chunk_base + p.offset)
                if key in seen_remote:
                    problems.append(f"pool {p.pool} addr {key[1]:#x} mapped by {seen_remote[key]} "
                                    f"and ({mmu.node_id}, {vpage:#x})")
                seen_remote[key] = (mmu.node_id, vpage)
    return problems
