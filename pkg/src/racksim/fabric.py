"""Rack interconnect: NIC queues, a top-of-rack switch with virtual output
queues, round-robin output arbitration and credit-style back-pressure.

Endpoints are numbered with compute nodes first (0..nodes-1) and memory pools
after them; endpoint ``i`` sits on switch port ``i``. A message pays packet
preparation and NIC processing at its origin, serializes onto the NIC link,
propagates to the switch, waits in the VOQ for its output, pays the switch
pipeline delay and the output serialization, propagates to the destination
NIC and pays its processing delay there.

Nothing is dropped. A full NIC egress queue parks new packets in an
unbounded pending list (the sender stalls); a full switch input buffer holds
packets in the NIC; a full destination ingress queue holds packets in their
VOQ and the output is not arbitrated until room frees.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .units import KB, ns

REQUEST = "req"
RESPONSE = "resp"


@dataclass(frozen=True)
class FabricConfig:
    link_rate_bps: int = 100_000_000_000
    nic_proc: int = ns(10)
    switch_delay: int = ns(20)
    packet_prep: int = ns(25)
    propagation: int = ns(2.5)
    switch_buffer_bytes: int = 132_000_000 // 8  # 132 Mb shared across active ports
    switch_ports: int = 128
    nic_queue_bytes: int = 256 * KB
    request_bytes: int = 64
    response_bytes: int = 128
    response_prep: bool = True

    def __post_init__(self):
        if self.link_rate_bps <= 0:
            raise ValueError("link rate must be positive")
        for name in ("nic_proc", "switch_delay", "packet_prep", "propagation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if min(self.request_bytes, self.response_bytes) <= 0:
            raise ValueError("packet sizes must be positive")
        if self.nic_queue_bytes < max(self.request_bytes, self.response_bytes):
            raise ValueError("NIC queue must hold at least one packet")

    def size_of(self, kind: str) -> int:
        return self.request_bytes if kind == REQUEST else self.response_bytes


def transmission_delay(nbytes: int, rate_bps: int) -> int:
    """Serialization time in ps of ``nbytes`` at ``rate_bps``, rounded up to 1ps."""
    if rate_bps <= 0:
        raise ValueError("link rate must be positive")
    return -(-(nbytes * 8 * 10**12) // int(rate_bps))


def path_latency_zero_load(kind: str, cfg: FabricConfig | None = None) -> int:
    """One-way latency in ps of a lone packet through empty queues."""
    cfg = cfg or FabricConfig()
    tx = transmission_delay(cfg.size_of(kind), cfg.link_rate_bps)
    prep = cfg.packet_prep if (kind == REQUEST or cfg.response_prep) else 0
    return (prep + cfg.nic_proc + tx + cfg.propagation
            + cfg.switch_delay + tx + cfg.propagation + cfg.nic_proc)


class Packet:
    __slots__ = ("pid", "kind", "size", "src", "dst", "access",
                 "injected", "nic_out", "switch_in", "switch_out", "delivered")

    def __init__(self, pid, kind, size, src, dst, access=None):
        self.pid = pid
        self.kind = kind
        self.size = size
        self.src = src
        self.dst = dst
        self.access = access
        self.injected = self.nic_out = self.switch_in = self.switch_out = self.delivered = -1

    def stamps(self):
        return (self.injected, self.nic_out, self.switch_in, self.switch_out, self.delivered)


class Nic:
    __slots__ = ("port", "egress", "egress_bytes", "pending", "busy", "waiting_credit",
                 "ingress_bytes", "ingress", "max_egress_bytes")

    def __init__(self, port):
        self.port = port
        self.egress: deque = deque()
        self.egress_bytes = 0
        self.pending: deque = deque()
        self.busy = False
        self.waiting_credit = False
        self.ingress_bytes = 0
        self.ingress: deque = deque()
        self.max_egress_bytes = 0


class Fabric:
    """Event-driven fabric bound to an engine's scheduler.

    ``scheduler`` must provide ``now`` and ``schedule(time, fn, arg)``.
    ``on_deliver(packet)`` is called when a packet clears its destination
    NIC; for pool endpoints ``can_accept(packet)`` gates that hand-off and
    ``accept_retry_time(packet)`` says when to try again.
    """

    def __init__(self, cfg: FabricConfig, n_endpoints: int, scheduler, on_deliver,
                 can_accept=None, accept_retry_time=None, record_packets: bool = False):
        if n_endpoints > cfg.switch_ports:
            raise ValueError(f"{n_endpoints} endpoints exceed {cfg.switch_ports} switch ports")
        self.cfg = cfg
        self.sim = scheduler
        self.on_deliver = on_deliver
        self.can_accept = can_accept
        self.accept_retry_time = accept_retry_time
        n = n_endpoints
        self.n = n
        self.nics = [Nic(i) for i in range(n)]
        self.port_budget = cfg.switch_buffer_bytes // max(n, 1)
        self.sw_in_bytes = [0] * n
        self.voq = [[deque() for _ in range(n)] for _ in range(n)]
        self.active = [set() for _ in range(n)]
        self.rr_cursor = [n - 1] * n
        self.out_free = [0] * n
        self.out_sched = [False] * n
        self.out_blocked = [False] * n
        self.retry_sched = [False] * n
        self._tx = {s: transmission_delay(s, cfg.link_rate_bps)
                    for s in (cfg.request_bytes, cfg.response_bytes)}
        self.next_pid = 0
        self.injected = 0
        self.delivered = 0
        self.forwarded_by_input: dict[tuple[int, int], int] = {}
        self.record_packets = record_packets
        self.packet_log: list[tuple] = []

    def tx_time(self, size: int) -> int:
        t = self._tx.get(size)
        if t is None:
            t = self._tx[size] = transmission_delay(size, self.cfg.link_rate_bps)
        return t

    # -- injection and NIC egress -------------------------------------------

    def new_packet(self, kind, src, dst, access=None) -> Packet:
        pkt = Packet(self.next_pid, kind, self.cfg.size_of(kind), src, dst, access)
        self.next_pid += 1
        return pkt

    def inject(self, pkt: Packet, now: int):
        """Hand a packet to its source NIC at ``now`` (may be in the future)."""
        pkt.injected = now
        self.injected += 1
        cfg = self.cfg
        prep = cfg.packet_prep if (pkt.kind == REQUEST or cfg.response_prep) else 0
        self.sim.schedule(now + prep + cfg.nic_proc, self._nic_enqueue, pkt)

    def _nic_enqueue(self, pkt: Packet):
        nic = self.nics[pkt.src]
        if nic.pending or nic.egress_bytes + pkt.size > self.cfg.nic_queue_bytes:
            nic.pending.append(pkt)
            return
        nic.egress.append(pkt)
        nic.egress_bytes += pkt.size
        if nic.egress_bytes > nic.max_egress_bytes:
            nic.max_egress_bytes = nic.egress_bytes
        if not nic.busy:
            self._nic_send(nic)

    def _nic_send(self, nic: Nic):
        if nic.busy or not nic.egress:
            return
        head = nic.egress[0]
        port = nic.port
        if self.sw_in_bytes[port] + head.size > self.port_budget:
            nic.waiting_credit = True
            return
        nic.egress.popleft()
        nic.egress_bytes -= head.size
        self.sw_in_bytes[port] += head.size
        now = self.sim.now
        tx = self.tx_time(head.size)
        head.nic_out = now + tx
        nic.busy = True
        self.sim.schedule(now + tx, self._nic_tx_done, nic)
        self.sim.schedule(now + tx + self.cfg.propagation, self._switch_arrive, head)
        cap = self.cfg.nic_queue_bytes
        while nic.pending and nic.egress_bytes + nic.pending[0].size <= cap:
            p = nic.pending.popleft()
            nic.egress.append(p)
            nic.egress_bytes += p.size

    def _nic_tx_done(self, nic: Nic):
        nic.busy = False
        self._nic_send(nic)

    # -- switch --------------------------------------------------------------

    def _switch_arrive(self, pkt: Packet):
        pkt.switch_in = self.sim.now
        out = pkt.dst
        self.voq[out][pkt.src].append(pkt)
        self.active[out].add(pkt.src)
        self._try_arbitrate(out)

    def _arb_event(self, out: int):
        self.out_sched[out] = False
        self._try_arbitrate(out)

    def _pick_input(self, out: int) -> int:
        cur = self.rr_cursor[out]
        act = self.active[out]
        after = [i for i in act if i > cur]
        return min(after) if after else min(act)

    def _try_arbitrate(self, out: int):
        if self.out_sched[out] or self.out_blocked[out] or not self.active[out]:
            return
        now = self.sim.now
        if self.out_free[out] > now:
            self.out_sched[out] = True
            self.sim.schedule(self.out_free[out], self._arb_event, out)
            return
        inp = self._pick_input(out)
        q = self.voq[out][inp]
        pkt = q[0]
        dst_nic = self.nics[out]
        if dst_nic.ingress_bytes + pkt.size > self.cfg.nic_queue_bytes:
            self.out_blocked[out] = True
            return
        q.popleft()
        if not q:
            self.active[out].discard(inp)
        self.rr_cursor[out] = inp
        key = (inp, out)
        self.forwarded_by_input[key] = self.forwarded_by_input.get(key, 0) + 1
        self.sw_in_bytes[inp] -= pkt.size
        src_nic = self.nics[inp]
        if src_nic.waiting_credit:
            src_nic.waiting_credit = False
            self._nic_send(src_nic)
        dst_nic.ingress_bytes += pkt.size
        tx = self.tx_time(pkt.size)
        pkt.switch_out = now + self.cfg.switch_delay + tx
        self.out_free[out] = now + tx
        self.sim.schedule(pkt.switch_out + self.cfg.propagation + self.cfg.nic_proc,
                          self._deliver, pkt)
        if self.active[out]:
            self.out_sched[out] = True
            self.sim.schedule(self.out_free[out], self._arb_event, out)

    # -- destination NIC ingress ---------------------------------------------

    def _deliver(self, pkt: Packet):
        pkt.delivered = self.sim.now
        nic = self.nics[pkt.dst]
        if self.can_accept is None:
            self._hand_off(nic, pkt)
            return
        nic.ingress.append(pkt)
        self._drain_ingress(nic)

    def _drain_ingress(self, nic: Nic):
        q = nic.ingress
        while q:
            pkt = q[0]
            if not self.can_accept(pkt):
                if not self.retry_sched[nic.port]:
                    self.retry_sched[nic.port] = True
                    self.sim.schedule(self.accept_retry_time(pkt), self._ingress_retry, nic)
                return
            q.popleft()
            self._hand_off(nic, pkt)

    def _ingress_retry(self, nic: Nic):
        self.retry_sched[nic.port] = False
        self._drain_ingress(nic)

    def _hand_off(self, nic: Nic, pkt: Packet):
        nic.ingress_bytes -= pkt.size
        self.delivered += 1
        if self.record_packets:
            self.packet_log.append((pkt.pid, pkt.kind) + pkt.stamps())
        out = nic.port
        if self.out_blocked[out]:
            self.out_blocked[out] = False
            self._try_arbitrate(out)
        self.on_deliver(pkt)

    def idle(self) -> bool:
        return all(not nic.egress and not nic.pending and not nic.ingress for nic in self.nics) \
            and not any(self.active)
