"""Global memory manager: pool bookkeeping and pool-selection policies.

Each pool keeps a bump allocator over its capacity and a ring of access
counts for the four most recent windows. A window closes every time a chunk
is granted, whichever policy is active.

Smart-idle selection runs in two steps. First it ranks non-full pools by
their access factor

    Af = count(just-closed window) + (sum of the three windows before it) / 3

and keeps the ``ceil(log2(n))`` lowest. From that subset it grants the pool
with the least memory already allocated. Both steps break ties toward the
lower pool id.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

from .units import GB, MB

RANDOM = "random"
ROUND_ROBIN = "round_robin"
SMART_IDLE = "smart_idle"
POLICIES = (RANDOM, ROUND_ROBIN, SMART_IDLE)

RING_DEPTH = 4


class ChunkGrant(NamedTuple):
    pool_id: int
    base_offset: int
    size: int
    grant_index: int


@dataclass
class PoolState:
    pool_id: int
    capacity_bytes: int = 32 * GB
    allocated_bytes: int = 0
    # window_ring[0] is the open window, [1..3] the older ones, newest first
    window_ring: list = field(default_factory=lambda: [0] * RING_DEPTH)
    lifetime_access_count: int = 0

    def free_bytes(self) -> int:
        return self.capacity_bytes - self.allocated_bytes


def access_factor(ring) -> Fraction:
    """Access factor of a 4-entry ring ``(new, old1, old2, old3)``, exact."""
    new, o1, o2, o3 = ring
    return Fraction(3 * new + o1 + o2 + o3, 3)


def _af_key(ring) -> int:
    # 3*Af, integer so comparisons are exact
    return 3 * ring[0] + ring[1] + ring[2] + ring[3]


def subset_size(n: int) -> int:
    if n < 1:
        raise ValueError("need at least one pool")
    return min(max(1, math.ceil(math.log2(n))), n)


class OutOfPoolMemory(Exception):
    pass


class GlobalMemoryManager:
    def __init__(self, n_pools: int = 6, capacity_bytes: int = 32 * GB,
                 chunk_size: int = 4 * MB, policy: str = SMART_IDLE, seed: int = 0):
        if n_pools < 1:
            raise ValueError("n_pools must be >= 1")
        if policy not in POLICIES:
            raise ValueError(f"unknown pool policy {policy!r}; expected one of {POLICIES}")
        if chunk_size <= 0 or chunk_size > capacity_bytes:
            raise ValueError("chunk size must be positive and fit in a pool")
        self.pools = [PoolState(i, capacity_bytes) for i in range(n_pools)]
        self.policy = policy
        self.chunk_size = chunk_size
        self.rr_cursor = n_pools - 1
        self.rng_seed = seed
        self.rng = random.Random(seed)
        self.grant_log: list[tuple] = []
        self.denials = 0

    @property
    def n(self) -> int:
        return len(self.pools)

    def record_pool_access(self, pool_id: int):
        p = self.pools[pool_id]
        p.window_ring[0] += 1
        p.lifetime_access_count += 1

    def rotate_windows(self):
        for p in self.pools:
            r = p.window_ring
            r[3], r[2], r[1], r[0] = r[2], r[1], r[0], 0

    def _eligible(self, size: int) -> list[PoolState]:
        return [p for p in self.pools if p.free_bytes() >= size]

    def select_pool_random(self, size: int | None = None) -> int:
        pools = self._eligible(size or self.chunk_size)
        if not pools:
            raise OutOfPoolMemory("all pools full")
        return pools[self.rng.randrange(len(pools))].pool_id

    def select_pool_round_robin(self, size: int | None = None) -> int:
        size = size or self.chunk_size
        n = self.n
        for step in range(1, n + 1):
            i = (self.rr_cursor + step) % n
            if self.pools[i].free_bytes() >= size:
                self.rr_cursor = i
                return i
        raise OutOfPoolMemory("all pools full")

    def select_pool_smart_idle(self, size: int | None = None) -> int:
        pools = self._eligible(size or self.chunk_size)
        if not pools:
            raise OutOfPoolMemory("all pools full")
        m = min(subset_size(self.n), len(pools))
        subset = sorted(pools, key=lambda p: (_af_key(p.window_ring), p.pool_id))[:m]
        return min(subset, key=lambda p: (p.allocated_bytes, p.pool_id)).pool_id

    def select_pool(self, size: int | None = None) -> int:
        if self.policy == SMART_IDLE:
            return self.select_pool_smart_idle(size)
        if self.policy == ROUND_ROBIN:
            return self.select_pool_round_robin(size)
        return self.select_pool_random(size)

    def allocate_chunk(self, node_id: int, now: int = 0) -> ChunkGrant | None:
        """Grant one chunk to ``node_id`` or return None (denial is counted).

        ``now`` is simulated time in picoseconds, kept for the grant log.
        """
        try:
            pid = self.select_pool()
        except OutOfPoolMemory:
            self.denials += 1
            return None
        pool = self.pools[pid]
        base = pool.allocated_bytes
        pool.allocated_bytes += self.chunk_size
        self.rotate_windows()
        grant = ChunkGrant(pid, base, self.chunk_size, len(self.grant_log))
        self.grant_log.append((grant.grant_index, self.policy, pid, node_id, now))
        return grant

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "grants": len(self.grant_log),
            "denials": self.denials,
            "allocated_bytes": [p.allocated_bytes for p in self.pools],
            "lifetime_accesses": [p.lifetime_access_count for p in self.pools],
        }
