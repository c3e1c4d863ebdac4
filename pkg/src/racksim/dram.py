"""Queued DRAM timing model with fixed closed-page service time.

Each channel has a FIFO controller queue that issues requests in arrival
order. A request issues once it reaches the head and its bank is free, then
occupies the bank for ``t_access``. Queue occupancy counts requests from
submission until completion; a full queue refuses new requests and the
caller has to hold them (back-pressure).

Pages (4KB) interleave across channels and lines (64B) across banks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .units import GB, MB, ns


@dataclass(frozen=True)
class DramConfig:
    channels: int = 1
    banks: int = 8
    t_access: int = ns(46)  # picoseconds
    queue_capacity: int = 64
    capacity_bytes: int = 256 * MB
    channel_shift: int = 12
    bank_shift: int = 6

    def __post_init__(self):
        if min(self.channels, self.banks, self.queue_capacity) < 1:
            raise ValueError("channels, banks and queue capacity must be >= 1")
        if self.t_access <= 0:
            raise ValueError("t_access must be positive")

    @classmethod
    def pool(cls, capacity_bytes=32 * GB, **kw):
        return cls(channels=kw.pop("channels", 2), capacity_bytes=capacity_bytes, **kw)


class DramAddressError(RuntimeError):
    pass


class QueueFull(RuntimeError):
    pass


class _Channel:
    __slots__ = ("bank_busy", "last_start", "inflight", "max_depth")

    def __init__(self, banks):
        self.bank_busy = [0] * banks
        self.last_start = 0
        self.inflight: list[int] = []  # completion-time heap
        self.max_depth = 0


class DramDevice:
    def __init__(self, cfg: DramConfig, name: str = "dram"):
        self.cfg = cfg
        self.name = name
        self.channels = [_Channel(cfg.banks) for _ in range(cfg.channels)]
        self.served = 0
        self.submitted = 0
        self.reads = 0
        self.writes = 0

    def route(self, addr: int) -> tuple[int, int]:
        if not 0 <= addr < self.cfg.capacity_bytes:
            raise DramAddressError(f"{self.name}: address {addr:#x} outside {self.cfg.capacity_bytes:#x}")
        cfg = self.cfg
        return (addr >> cfg.channel_shift) % cfg.channels, (addr >> cfg.bank_shift) % cfg.banks

    def _retire(self, ch: _Channel, now: int):
        q = ch.inflight
        while q and q[0] <= now:
            heapq.heappop(q)
            self.served += 1

    def has_room(self, addr: int, now: int) -> bool:
        ch = self.channels[self.route(addr)[0]]
        self._retire(ch, now)
        return len(ch.inflight) < self.cfg.queue_capacity

    def room_time(self, addr: int) -> int:
        """Earliest time a slot frees on ``addr``'s channel."""
        return self.channels[self.route(addr)[0]].inflight[0]

    def schedule(self, addr: int, kind: str, now: int) -> tuple[int, int]:
        """Enqueue a request; return (service start, completion) in ps."""
        c, b = self.route(addr)
        ch = self.channels[c]
        self._retire(ch, now)
        if len(ch.inflight) >= self.cfg.queue_capacity:
            raise QueueFull(f"{self.name}: channel {c} full at t={now}")
        start = now
        if ch.last_start > start:
            start = ch.last_start
        if ch.bank_busy[b] > start:
            start = ch.bank_busy[b]
        done = start + self.cfg.t_access
        ch.last_start = start
        ch.bank_busy[b] = done
        heapq.heappush(ch.inflight, done)
        if len(ch.inflight) > ch.max_depth:
            ch.max_depth = len(ch.inflight)
        self.submitted += 1
        if kind == "W":
            self.writes += 1
        else:
            self.reads += 1
        return start, done

    def submit(self, addr: int, kind: str, now: int) -> int:
        return self.schedule(addr, kind, now)[1]

    def queue_depth(self, channel: int, now: int | None = None) -> int:
        if not 0 <= channel < len(self.channels):
            raise IndexError(f"{self.name}: no channel {channel}")
        ch = self.channels[channel]
        if now is not None:
            self._retire(ch, now)
        return len(ch.inflight)

    def drain(self):
        for ch in self.channels:
            self.served += len(ch.inflight)
            ch.inflight.clear()

    def summary(self) -> dict:
        return {
            "submitted": self.submitted,
            "served": self.served,
            "max_queue_depth": max(ch.max_depth for ch in self.channels),
        }
