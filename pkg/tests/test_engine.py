import pytest

from racksim.config import RunConfig, parse_config_text
from racksim.engine import CausalityError, EventQueue, Simulation, run
from racksim.experiment import build_trace
from racksim.fabric import REQUEST, RESPONSE, path_latency_zero_load
from racksim.trace import LlcMissRecord, TraceError
from racksim.units import CYCLE_PS, ns


def one_node(**kw):
    base = dict(nodes=1, pools=1, workloads="lbm", dump_completions=True)
    base.update(kw)
    return RunConfig(**base)


def R(ts, vaddr, node=0, kind="R"):
    return LlcMissRecord(ts, node, 0, vaddr, kind)


def test_event_order_ties_by_sequence():
    q = EventQueue()
    seen = []
    q.schedule(5, seen.append, "first")
    q.schedule(5, seen.append, "second")
    q.schedule(3, seen.append, "early")
    q.run()
    assert seen == ["early", "first", "second"]
    assert q.now == 5


def test_step_advances_clock():
    q = EventQueue()
    q.schedule(42, lambda _: None)
    t, seq, _, _ = q.step()
    assert (t, q.now) == (42, 42)
    with pytest.raises(IndexError):
        q.step()


def test_followup_runs_once_and_past_is_rejected():
    q = EventQueue()
    hits = []

    def first(_):
        q.schedule(q.now + 7, hits.append, q.now)
        with pytest.raises(CausalityError):
            q.schedule(q.now - 1, hits.append, None)

    q.schedule(10, first)
    q.run()
    assert hits == [10]
    assert q.now == 17


def test_empty_trace():
    rep = run(one_node(), [])
    assert rep.summary["totals"]["completed"] == 0
    assert rep.summary["avg_latency_ns"] == 0


def test_one_local_access_is_dram_service():
    rep = run(one_node(), [R(0, 0x1000)])
    (c,) = rep.completions
    assert (c.remote, c.latency, c.local) == (False, ns(46), ns(46))


def test_one_remote_access_zero_load():
    rep = run(one_node(page_policy="local_first", local_memory=0), [R(100, 0x1000)])
    (c,) = rep.completions
    expected = path_latency_zero_load(REQUEST) + ns(46) + path_latency_zero_load(RESPONSE)
    assert c.latency == expected == 216_720
    assert c.done == 100 * CYCLE_PS + expected
    assert (c.remote_queue, c.remote_service) == (0, ns(46))
    assert c.network == expected - ns(46)


def test_grant_latency_delays_first_remote_access():
    cfg = one_node(page_policy="local_first", local_memory=0, grant_latency_ns=500)
    rep = run(cfg, [R(0, 0x1000), R(10_000, 0x1040)])
    a, b = rep.completions
    assert a.latency == 216_720 + ns(500)
    assert b.latency == 216_720


def test_unordered_trace_rejected():
    with pytest.raises(TraceError):
        run(one_node(), [R(10, 0), R(5, 64)])


def test_unknown_node_rejected():
    with pytest.raises(TraceError):
        run(one_node(), [R(10, 0, node=3)])


def test_oom_drops_counted():
    cfg = one_node(page_policy="local_first", local_memory=0, pool_capacity=65536,
                   chunk_size=65536)
    trace = [R(i * 10, 0x1000 * (i + 1)) for i in range(20)]
    rep = run(cfg, trace)
    t = rep.summary["totals"]
    assert t["oom_drops"] == 4
    assert t["injected"] == t["completed"] + t["oom_drops"] == 20


def test_outstanding_cap_serializes_misses():
    cfg = one_node(page_policy="local_first", local_memory=0, max_outstanding=1)
    trace = [R(0, 0x1000 + 64 * i) for i in range(3)]
    rep = run(cfg, trace)
    dones = [c.done for c in rep.completions]
    assert dones[1] - dones[0] >= 216_720 - ns(80.24)
    assert rep.summary["totals"]["completed"] == 3


def desk(seed=0, policy="smart_idle", **extra):
    text = "profile=desk\nscale=0.0002\n" + "".join(f"{k}={v}\n" for k, v in extra.items())
    return parse_config_text(text, {"seed": seed, "pool_policy": policy})


def test_small_desk_run_conserves_and_adds_up():
    cfg = desk(dump_completions="true")
    trace = build_trace(cfg)
    sim = Simulation(cfg, trace)
    rep = sim.run()
    t = rep.summary["totals"]
    assert t["injected"] == len(trace) == t["completed"] + t["oom_drops"]
    assert all(c.local + c.network + c.remote_queue + c.remote_service == c.latency for c in rep.completions)
    assert sim.audit() == []
    assert sum(rep.summary["remote_histogram"].values()) == t["remote_completed"]
    assert t["packets"] == 2 * t["remote_completed"]


@pytest.mark.parametrize("policy", ["random", "round_robin", "smart_idle"])
def test_determinism(policy):
    cfg = desk(seed=7, policy=policy)
    a = run(cfg, build_trace(cfg)).summary_json()
    b = run(cfg, build_trace(cfg)).summary_json()
    assert a == b
