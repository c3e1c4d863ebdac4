import random
from collections import deque

import pytest

from racksim.frontend import (
    CacheConfig, CacheHierarchy, LevelConfig, SetAssoc, TlbConfig, cache_filter,
    iter_refs, parse_ref_line,
)
from racksim.trace import TraceError
from racksim.units import KB, MB


def tiny(sets=4, ways=2, levels=1):
    lv = tuple(LevelConfig(sets * ways * 64 * (2 ** k), ways, 4 + 10 * k) for k in range(levels))
    return CacheConfig(levels=lv, dtlb=None, itlb=None)


def fifo_oracle(refs, sets, ways):
    """Per-set FIFO queues of [line, dirty]; yields ('M', line) and ('WB', line)."""
    q = [deque() for _ in range(sets)]
    out = []
    for _, vaddr, kind in refs:
        line = vaddr // 64
        s = q[line % sets]
        entry = next((e for e in s if e[0] == line), None)
        if entry is not None:
            if kind == "W":
                entry[1] = True
            continue
        out.append(("M", line))
        s.append([line, kind == "W"])
        if len(s) > ways:
            old, dirty = s.popleft()
            if dirty:
                out.append(("WB", old))
    return out


def two_level_read_oracle(refs, geo):
    """Independent non-inclusive levels, reads only: each level sees the misses of the one above."""
    queues = [[deque() for _ in range(s)] for s, _ in geo]
    misses = []
    for _, vaddr, _ in refs:
        line = vaddr // 64
        missed = []
        for k, (sets, ways) in enumerate(geo):
            if line in queues[k][line % sets]:
                break
            missed.append(k)
        else:
            misses.append(line)
        for k in missed:
            s = queues[k][line % geo[k][0]]
            s.append(line)
            if len(s) > geo[k][1]:
                s.popleft()
    return misses


def rand_refs(seed, n=10_000, lines=48, wf=0.3):
    rng = random.Random(seed)
    return [(0, rng.randrange(lines) * 64 + rng.randrange(64), "W" if rng.random() < wf else "R")
            for _ in range(n)]


def run_filter(refs, cfg):
    """Replay through the hierarchy directly so write-backs are told apart from write misses."""
    h = CacheHierarchy(cfg)
    out = []
    for _, vaddr, kind in refs:
        _, miss, wbs = h.access(vaddr, kind == "W")
        if miss:
            out.append(("M", vaddr // 64))
        out.extend(("WB", w) for w in wbs)
    return out


@pytest.mark.parametrize("seed", range(5))
def test_single_level_matches_fifo_oracle(seed):
    refs = rand_refs(seed)
    assert run_filter(refs, tiny()) == fifo_oracle(refs, 4, 2)


@pytest.mark.parametrize("seed", range(3))
def test_filter_records_match_oracle(seed):
    refs = rand_refs(100 + seed)
    recs = list(cache_filter(refs, tiny()))
    expected = fifo_oracle(refs, 4, 2)
    assert [r.vaddr // 64 for r in recs] == [line for _, line in expected]
    for r, (tag, _) in zip(recs, expected):
        if tag == "WB":
            assert r.kind == "W"


@pytest.mark.parametrize("seed", range(3))
def test_two_level_reads_match_oracle(seed):
    refs = rand_refs(200 + seed, wf=0.0, lines=64)
    cfg = tiny(levels=2)
    got = [r.vaddr // 64 for r in cache_filter(refs, cfg)]
    assert got == two_level_read_oracle(refs, [(4, 2), (8, 2)])


@pytest.mark.parametrize("seed", range(4))
def test_miss_count_monotone_in_sets_and_ways(seed):
    refs = rand_refs(300 + seed, lines=[16, 32, 64, 128][seed])
    def misses(cfg):
        return sum(1 for t, _ in run_filter(refs, cfg) if t == "M")
    by_sets = [misses(tiny(sets=s)) for s in (4, 8, 16, 32)]
    by_ways = [misses(tiny(ways=w)) for w in (2, 4, 8)]
    assert by_sets == sorted(by_sets, reverse=True)
    assert by_ways == sorted(by_ways, reverse=True)


def test_round_robin_alternates_ways():
    c = SetAssoc(1, 2)
    assert c.fill(10) is None
    assert c.fill(20) is None
    assert c.fill(30) == (10, False)
    assert c.tags[0] == [30, 20]
    assert c.fill(40) == (20, False)
    assert c.tags[0] == [30, 40]


def test_repeated_line_hits_l1_once_missed():
    h = CacheHierarchy(CacheConfig(dtlb=None))
    cost, miss, _ = h.access(0x4000, False)
    assert (cost, miss) == (41, True)
    for _ in range(99):
        assert h.access(0x4000, False) == (4, False, [])
    assert h.levels[1].lookups == 1
    assert h.levels[2].lookups == 1


def test_l2_hit_cost():
    cfg = CacheConfig(levels=(LevelConfig(64, 1, 4), LevelConfig(256 * KB, 4, 12), LevelConfig(16 * MB, 16, 41)),
                      dtlb=None)
    h = CacheHierarchy(cfg)
    h.access(0, False)
    h.access(64, False)  # evicts line 0 from the one-line L1
    cost, miss, _ = h.access(0, False)
    assert (cost, miss) == (16, False)


def test_cold_miss_emits_llc_record_with_tlb_penalty():
    recs = list(cache_filter([(0, 0x1234, "R")]))
    assert len(recs) == 1
    assert recs[0].vaddr == 0x1200
    assert recs[0].timestamp == 41 + 60


def test_dirty_eviction_becomes_write_record():
    refs = [(0, 0, "W"), (0, 4 * 64, "R"), (0, 8 * 64, "R")]
    recs = list(cache_filter(refs, tiny()))
    assert [(r.vaddr, r.kind) for r in recs] == [(0, "W"), (256, "R"), (512, "R"), (0, "W")]


def test_threads_keep_separate_clocks():
    refs = [(0, 0, "R"), (1, 64 * 1000, "R"), (0, 64 * 2000, "R")]
    recs = list(cache_filter(refs, tiny()))
    assert [(r.thread_id, r.timestamp) for r in recs] == [(0, 4), (1, 4), (0, 8)]


def test_bad_geometry():
    with pytest.raises(ValueError):
        LevelConfig(1000, 3, 4)
    with pytest.raises(ValueError):
        TlbConfig(10, 4, 60)


def test_ref_parsing(tmp_path):
    assert parse_ref_line("2,0x40,w") == (2, 0x40, "W")
    with pytest.raises(TraceError, match="line 3"):
        parse_ref_line("2,0x40", lineno=3)
    p = tmp_path / "refs.csv"
    p.write_text("thread,vaddr,kind\n0,0x0,R\n1,0x80,W\n")
    assert list(iter_refs(p)) == [(0, 0, "R"), (1, 0x80, "W")]
