import random

import pytest
from hypothesis import given, settings, strategies as st

from racksim.dram import DramAddressError, DramConfig, DramDevice, QueueFull
from racksim.units import ns

T = ns(46)


def test_idle_bank_completion():
    d = DramDevice(DramConfig())
    assert d.submit(0, "R", ns(1000)) == ns(1046)


def test_same_bank_serializes():
    d = DramDevice(DramConfig())
    assert d.submit(0, "R", 0) == T
    assert d.submit(8 * 64, "W", 0) == 2 * T  # same bank after wrapping 8 banks


def test_different_banks_overlap():
    d = DramDevice(DramConfig())
    assert d.submit(0, "R", 0) == T
    assert d.submit(64, "R", 0) == T


def test_in_order_issue_blocks_behind_busy_bank():
    d = DramDevice(DramConfig())
    d.submit(0, "R", 0)
    d.submit(512, "R", 0)  # waits for bank 0 until 46ns
    start, done = d.schedule(64, "R", 0)  # bank 1 idle but issues after the head
    assert (start, done) == (T, 2 * T)


def test_routing():
    d = DramDevice(DramConfig.pool(channels=2))
    assert d.route(0) == (0, 0)
    assert d.route(4096 + 3 * 64) == (1, 3)
    with pytest.raises(DramAddressError):
        d.route(d.cfg.capacity_bytes)


def test_queue_depth_and_drain():
    d = DramDevice(DramConfig())
    assert d.queue_depth(0) == 0
    for _ in range(3):
        d.submit(0, "R", 0)
    assert d.queue_depth(0) == 3
    assert d.queue_depth(0, now=T) == 2
    d.drain()
    assert d.queue_depth(0) == 0
    assert d.summary()["submitted"] == d.summary()["served"] == 3
    with pytest.raises(IndexError):
        d.queue_depth(4)


def test_full_queue_refuses():
    d = DramDevice(DramConfig(queue_capacity=2))
    d.submit(0, "R", 0)
    d.submit(0, "R", 0)
    assert not d.has_room(0, 0)
    assert d.room_time(0) == T
    with pytest.raises(QueueFull):
        d.submit(0, "R", 0)
    assert d.has_room(0, T)


@pytest.mark.parametrize("kw", [dict(banks=0), dict(queue_capacity=0), dict(t_access=0)])
def test_bad_config(kw):
    with pytest.raises(ValueError):
        DramConfig(**kw)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 200_000), st.integers(0, 31)), min_size=1, max_size=60))
def test_bank_spacing_and_decomposition(reqs):
    d = DramDevice(DramConfig(queue_capacity=10_000))
    done_by_bank = {}
    for now, line in sorted(reqs):
        start, done = d.schedule(line * 64, "R", now)
        assert start >= now and done - start == T  # wait + service
        done_by_bank.setdefault(line % 8, []).append(done)
    for times in done_by_bank.values():
        assert all(b - a >= T for a, b in zip(times, times[1:]))


def test_littles_law_single_bank():
    rng = random.Random(2024)
    d = DramDevice(DramConfig(banks=1, queue_capacity=10_000))
    lam = 0.5 / T  # utilization 0.5
    t = 0
    arrivals = []
    for _ in range(40_000):
        t += max(1, int(rng.expovariate(lam)))
        arrivals.append(t)
    horizon = arrivals[-1]
    probes = sorted(rng.randrange(horizon) for _ in range(40_000))
    lat = []
    samples = []
    pi = 0
    for a in arrivals:
        while pi < len(probes) and probes[pi] < a:
            samples.append(d.queue_depth(0, probes[pi]))
            pi += 1
        lat.append(d.submit(0, "R", a) - a)
    mean_l = sum(samples) / len(samples)
    mean_w = sum(lat) / len(lat)
    rate = len(arrivals) / horizon
    assert abs(mean_l - rate * mean_w) / (rate * mean_w) < 0.10
    md1 = T + 0.5 * T / (2 * (1 - 0.5))
    assert abs(mean_w - md1) / md1 < 0.10
