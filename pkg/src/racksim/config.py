"""Run configuration: flat ``key = value`` files with rack defaults.

An empty file gives the full-scale rack (64 nodes, 6 pools of 32GB, 256MB
local memory per node, 4MB chunks, 100Gb/s links). ``profile = desk`` switches
the defaults to a small rack that finishes in seconds; keys given in the
file override either profile. Workload presets are tuned with
``preset.<name>.<field> = value`` lines.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, field, fields

from .addrmap import PAGE_POLICIES
from .dram import DramConfig
from .fabric import FabricConfig
from .frontend import CacheConfig, LevelConfig, TlbConfig
from .gmm import POLICIES
from .trace import PRESETS, WL_MIX, WorkloadPreset
from .units import CYCLE_PS, GB, KB, MB, PAGE_BYTES, ns, parse_size

ENV_CONFIG = "RACKSIM_CONFIG"


class ConfigError(ValueError):
    pass


def _size(**kw):
    return field(metadata={"kind": "size"}, **kw)


@dataclass
class RunConfig:
    profile: str = "rack"
    nodes: int = 64
    pools: int = 6
    local_memory: int = _size(default=256 * MB)
    pool_capacity: int = _size(default=32 * GB)
    chunk_size: int = _size(default=4 * MB)
    page_policy: str = "alternate"
    pool_policy: str = "smart_idle"
    seed: int = 0
    epoch_cycles: int = 1_500_000
    workloads: str = ",".join(WL_MIX)
    trace: str = ""
    scale: float = 1.0
    out: str = "results"
    max_outstanding: int = 0
    grant_latency_ns: float = 0.0
    dump_completions: bool = False
    record_packets: bool = False
    # fabric
    link_rate_gbps: float = 100.0
    nic_delay_ns: float = 10.0
    switch_delay_ns: float = 20.0
    packet_prep_ns: float = 25.0
    propagation_ns: float = 2.5
    switch_buffer: int = _size(default=132_000_000 // 8)
    switch_ports: int = 128
    nic_queue: int = _size(default=256 * KB)
    request_bytes: int = 64
    response_bytes: int = 128
    response_prep: bool = True
    # dram
    t_access_ns: float = 46.0
    local_channels: int = 1
    pool_channels: int = 2
    banks: int = 8
    dram_queue: int = 64
    # frontend caches
    l1_size: int = _size(default=32 * KB)
    l1_ways: int = 8
    l1_latency: int = 4
    l2_size: int = _size(default=256 * KB)
    l2_ways: int = 4
    l2_latency: int = 12
    l3_size: int = _size(default=16 * MB)
    l3_ways: int = 16
    l3_latency: int = 41
    dtlb_entries: int = 64
    dtlb_ways: int = 4
    itlb_entries: int = 128
    itlb_ways: int = 8
    tlb_penalty: int = 60
    presets: dict = field(default_factory=lambda: dict(PRESETS))

    def __post_init__(self):
        self.validate()

    # -- derived configs ------------------------------------------------------

    def validate(self):
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}")

        if self.nodes < 1:
            bad("nodes", "must be >= 1")
        if self.pools < 1:
            bad("pools", "must be >= 1")
        if self.page_policy not in PAGE_POLICIES:
            bad("page_policy", f"must be one of {PAGE_POLICIES}")
        if self.pool_policy not in POLICIES:
            bad("pool_policy", f"must be one of {POLICIES}")
        if self.chunk_size < PAGE_BYTES or self.chunk_size % PAGE_BYTES:
            bad("chunk_size", "must be a positive multiple of the 4KB page")
        if self.pool_capacity < self.chunk_size:
            bad("pool_capacity", "must hold at least one chunk")
        if self.local_memory < 0 or self.local_memory % PAGE_BYTES:
            bad("local_memory", "must be a non-negative multiple of 4KB")
        if self.epoch_cycles < 1:
            bad("epoch_cycles", "must be >= 1")
        if self.scale <= 0:
            bad("scale", "must be positive")
        if self.max_outstanding < 0:
            bad("max_outstanding", "must be >= 0 (0 disables the cap)")
        if self.nodes + self.pools > self.switch_ports:
            bad("switch_ports", f"{self.nodes + self.pools} endpoints exceed the switch radix")
        if self.link_rate_gbps <= 0:
            bad("link_rate_gbps", "must be positive")
        if self.t_access_ns <= 0:
            bad("t_access_ns", "must be positive")
        for key in ("nic_delay_ns", "switch_delay_ns", "packet_prep_ns", "propagation_ns",
                    "grant_latency_ns"):
            if getattr(self, key) < 0:
                bad(key, "must be >= 0")
        if not self.trace:
            names = self.workload_list()
            if not names:
                bad("workloads", "at least one workload is required")
            for name in names:
                if name not in self.presets:
                    bad("workloads", f"unknown preset {name!r}")
            if len(names) > self.nodes:
                bad("workloads", "more workloads than nodes; every node runs exactly one")
        try:
            self.fabric_config()
            self.pool_dram_config()
            self.local_dram_config()
            self.cache_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def workload_list(self) -> list[str]:
        return [w.strip() for w in self.workloads.split(",") if w.strip()]

    def node_labels(self) -> list[str]:
        """Workload label of each node; nodes split into equal contiguous groups."""
        names = self.workload_list() or ["trace"]
        k = len(names)
        return [names[i * k // self.nodes] for i in range(self.nodes)]

    def fabric_config(self) -> FabricConfig:
        return FabricConfig(
            link_rate_bps=int(round(self.link_rate_gbps * 1e9)),
            nic_proc=ns(self.nic_delay_ns),
            switch_delay=ns(self.switch_delay_ns),
            packet_prep=ns(self.packet_prep_ns),
            propagation=ns(self.propagation_ns),
            switch_buffer_bytes=self.switch_buffer,
            switch_ports=self.switch_ports,
            nic_queue_bytes=self.nic_queue,
            request_bytes=self.request_bytes,
            response_bytes=self.response_bytes,
            response_prep=self.response_prep,
        )

    def local_dram_config(self) -> DramConfig:
        return DramConfig(channels=self.local_channels, banks=self.banks,
                          t_access=ns(self.t_access_ns), queue_capacity=self.dram_queue,
                          capacity_bytes=max(self.local_memory, PAGE_BYTES))

    def pool_dram_config(self) -> DramConfig:
        return DramConfig(channels=self.pool_channels, banks=self.banks,
                          t_access=ns(self.t_access_ns), queue_capacity=self.dram_queue,
                          capacity_bytes=self.pool_capacity)

    def cache_config(self) -> CacheConfig:
        return CacheConfig(
            levels=(LevelConfig(self.l1_size, self.l1_ways, self.l1_latency),
                    LevelConfig(self.l2_size, self.l2_ways, self.l2_latency),
                    LevelConfig(self.l3_size, self.l3_ways, self.l3_latency)),
            dtlb=TlbConfig(self.dtlb_entries, self.dtlb_ways, self.tlb_penalty),
            itlb=TlbConfig(self.itlb_entries, self.itlb_ways, self.tlb_penalty),
        )

    @property
    def epoch_ps(self) -> int:
        return self.epoch_cycles * CYCLE_PS

    def replace(self, **kw) -> "RunConfig":
        return dataclasses.replace(self, **kw)

    # -- echo -----------------------------------------------------------------

    def to_text(self) -> str:
        lines = ["# effective configuration"]
        for f in fields(self):
            if f.name == "presets":
                continue
            lines.append(f"{f.name} = {_render(getattr(self, f.name))}")
        for name in sorted(self.presets):
            p = self.presets[name]
            for pf in fields(p):
                if pf.name == "label":
                    continue
                lines.append(f"preset.{name}.{pf.name} = {_render(getattr(p, pf.name))}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "presets"}
        d["presets"] = {n: dataclasses.asdict(p) for n, p in sorted(self.presets.items())}
        return d

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


# Small rack: 8 nodes (two per WL-Mix benchmark), 4 pools, presets at 1e-3.
# Local memory, chunk size and epoch are scaled with the workloads so the
# remote footprint still spans many chunks and the run many epochs.
DESK_PROFILE = {
    "nodes": 8,
    "pools": 4,
    "local_memory": 256 * KB,
    "pool_capacity": 2 * GB,
    "chunk_size": 64 * KB,
    "scale": 1e-3,
    # same number of chunk grants per epoch as the full-size rack (about 33)
    "epoch_cycles": 120_000,
}

PROFILES = {"rack": {}, "desk": DESK_PROFILE}


_FIELDS = {f.name: f for f in fields(RunConfig)}
_PRESET_FIELDS = {f.name: f for f in fields(WorkloadPreset) if f.name != "label"}


def _convert(key, raw: str, typ, kind=None):
    raw = raw.strip()
    try:
        if kind == "size":
            return parse_size(raw)
        if typ in (bool, "bool"):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ in (int, "int"):
            return int(raw.replace("_", ""))
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(typ, '__name__', typ)}") from None


def config_from_pairs(pairs, base: dict | None = None) -> RunConfig:
    """Build a RunConfig from (key, raw value, line number) triples."""
    values: dict = {}
    preset_updates: dict[str, dict] = {}
    for key, raw, lineno in pairs:
        where = f"line {lineno}: " if lineno else ""
        if key.startswith("preset."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _PRESET_FIELDS:
                raise ConfigError(f"{where}unknown key {key!r}")
            pf = _PRESET_FIELDS[parts[2]]
            kind = "size" if parts[2] == "footprint_bytes" else None
            try:
                preset_updates.setdefault(parts[1], {})[parts[2]] = _convert(key, raw, pf.type, kind)
            except ConfigError as exc:
                raise ConfigError(f"{where}{exc}") from None
            continue
        f = _FIELDS.get(key)
        if f is None or key == "presets":
            raise ConfigError(f"{where}unknown key {key!r}")
        try:
            values[key] = _convert(key, raw, f.type, f.metadata.get("kind"))
        except ConfigError as exc:
            raise ConfigError(f"{where}{exc}") from None

    profile = values.get("profile", (base or {}).get("profile", "rack"))
    if profile not in PROFILES:
        raise ConfigError(f"profile: unknown profile {profile!r}; expected one of {sorted(PROFILES)}")
    merged = {**PROFILES[profile], **(base or {}), **values}
    presets = dict(PRESETS)
    for name, upd in preset_updates.items():
        try:
            if name in presets:
                presets[name] = presets[name].with_updates(**upd)
            else:
                presets[name] = WorkloadPreset(label=name, **upd)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"preset.{name}: {exc}") from None
    merged["presets"] = presets
    try:
        return RunConfig(**merged)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected key = value, got {line.strip()!r}")
        key, raw = s.split("=", 1)
        pairs.append((key.strip(), raw, lineno))
    for key, raw in (overrides or {}).items():
        pairs.append((key, str(raw), None))
    return config_from_pairs(pairs)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Load a config file; ``None`` falls back to $RACKSIM_CONFIG, then defaults."""
    path = path or os.environ.get(ENV_CONFIG)
    if not path:
        return parse_config_text("", overrides)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, overrides)
