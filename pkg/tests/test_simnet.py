import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import simple_topology
from sdiotsim.errors import TimeTravel, UnknownId
from sdiotsim.runner import build_engine
from sdiotsim.simnet import DROPPED, SERVED, Engine, EngineConfig, EventKind
from sdiotsim.traffic import Poisson, TrafficProfile


def bare_engine(mu=500.0, link=0.0, horizon=10.0, seed=0, n_sw=1):
    links = [(f"s{j}", "c0", link) for j in range(n_sw)]
    topo = simple_topology(links, 1, n_sw, capacity=mu)
    return Engine(EngineConfig(horizon=horizon, seed=seed), topology=topo, heartbeats=False)


def test_config_validation():
    with pytest.raises(ValueError):
        EngineConfig(horizon=0)
    with pytest.raises(ValueError):
        EngineConfig(loss_probability=1.0)


def test_schedule_in_the_past():
    eng = bare_engine()
    eng.run_until(2.0)
    with pytest.raises(TimeTravel):
        eng.schedule(1.0, EventKind.PACKET_ARRIVAL, (0, 0.1, None))
    eng.schedule(2.0, EventKind.PACKET_ARRIVAL, (0, 0.1, None))  # now itself is fine


def test_run_past_horizon_rejected():
    with pytest.raises(ValueError):
        bare_engine(horizon=1.0).run_until(2.0)


def test_empty_schedule_gives_empty_trace():
    tr = Engine(EngineConfig(horizon=1.0)).run_until(1.0)
    assert len(tr) == 0 and len(tr.packets) == 0 and tr.lines() == []


def test_equal_time_events_keep_scheduling_order():
    eng = bare_engine(n_sw=2)
    eng.base.inject(1, 0.5, work=0.5)
    eng.base.inject(0, 0.5, work=0.5)
    tr = eng.run_until(5.0)
    p = tr.packets
    assert p.switch.tolist() == [1, 0]
    assert p.start[1] == pytest.approx(p.completion[0])


def test_single_packet_hand_trace():
    seed = 17
    eng = bare_engine(mu=500.0, seed=seed)
    eng.base.inject(0, 1.0)
    tr = eng.run_until(5.0)
    # service draw: first exponential of the switch's work stream, scaled by 1/mu
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2, 0)))
    service = rng.standard_exponential() / 500.0
    p = tr.packets
    assert p.status.tolist() == [SERVED]
    assert p.arrival[0] == 1.0 and p.start[0] == 1.0
    assert p.completion[0] == pytest.approx(1.0 + service, abs=1e-15)
    lines = tr.lines(packets=True)
    assert [l.split("\t")[1] for l in lines] == ["PacketArrival", "ServiceCompletion"]


def test_packet_in_flight_to_down_controller_dropped():
    eng = bare_engine(link=0.01)
    eng.inject_failure("base:0", 0.5)
    eng.base.inject(0, 0.495, work=0.5)
    tr = eng.run_until(2.0)
    assert tr.packets.status.tolist() == [DROPPED]
    assert tr.summary["dropped"] == 1


def test_failure_drops_queue_and_service():
    eng = bare_engine(mu=1.0)
    for t in (0.1, 0.2, 0.3):
        eng.base.inject(0, t, work=1.0)
    eng.inject_failure("base:0", 0.5)
    tr = eng.run_until(5.0)
    assert tr.packets.status.tolist() == [DROPPED] * 3
    assert np.all(tr.packets.drop_time == 0.5)


def test_unknown_controller_injection():
    eng = bare_engine()
    with pytest.raises(UnknownId):
        eng.inject_failure("base:7", 1.0)
    with pytest.raises(UnknownId):
        eng.inject_failure("main:0", 1.0)  # no main layer on this engine


def test_recovery_without_failure_warns(failover):
    eng = build_engine(failover, seed=0)
    eng.inject_recovery("base:0", 0.2)
    eng.run_until(0.5)
    assert any("without a prior failure" in w for w in eng.warnings)
    assert eng.trace.of_kind("Warning")


def _run(cfg, seed, horizon=None):
    eng = build_engine(cfg, seed)
    return eng, eng.run_until(horizon or cfg.run.horizon)


def test_base_failure_plan_at_next_tick(failover):
    eng, tr = _run(failover, 3)
    fail = next(r for r in tr.records if r.kind == "FailureInjection" and r.subject == "base:1")
    moves = [r for r in tr.of_kind("Migration") if r.detail["reason"] == "failure"]
    assert moves and all(r.detail["from"] == 1 and r.detail["kind"] == "FullMaster" for r in moves)
    period = failover.balancer.evaluation_period
    assert fail.time <= moves[0].time <= fail.time + period + 1e-9
    assert {r.detail["switch"] for r in moves} == {2, 3}


def test_leader_failure_reelection_in_trace(failover):
    _, tr = _run(failover, 5)
    assert tr.of_kind("ReElection")
    epochs = [r.detail["epoch"] for r in tr.of_kind("ElectionComplete")]
    assert epochs[:2] == [0, 1]


def test_recovered_base_controller_is_slave_only(failover):
    eng, tr = _run(failover, 2)
    rec = next(r for r in tr.records if r.kind == "RecoveryInjection" and r.subject == "base:1")
    assert rec.detail["slave_of"]
    assert not np.any(eng.base.assignment.masters() == 1)


def test_determinism_bit_for_bit(failover):
    _, a = _run(failover, 9)
    _, b = _run(failover, 9)
    assert a.lines(packets=True) == b.lines(packets=True)
    for name in ("emit", "arrival", "start", "completion", "status", "controller"):
        assert getattr(a.packets, name).tobytes() == getattr(b.packets, name).tobytes()


def test_different_seeds_differ(failover):
    _, a = _run(failover, 1)
    _, b = _run(failover, 2)
    assert a.lines(packets=True) != b.lines(packets=True)


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.floats(0.2, 0.95))
def test_queue_causality_and_conservation(seed, rho):
    links = [("s0", "c0", 0.001), ("s1", "c0", 0.002), ("s2", "c1", 0.001), ("c0", "c1", 0.003)]
    topo = simple_topology(links, 2, 3, capacity=200)
    rates = TrafficProfile((Poisson(100 * rho), Poisson(100 * rho), Poisson(200 * rho)))
    eng = Engine(EngineConfig(horizon=3.0, seed=seed), topology=topo, traffic=rates)
    eng.inject_failure("base:1", 1.5)
    eng.inject_recovery("base:1", 2.0)
    tr = eng.run_until(3.0)
    p = tr.packets
    c = p.counts()
    assert c["served"] + c["dropped"] + c["queued"] == c["generated"] == len(p)
    assert tr.summary["generated"] == c["generated"]
    for ctrl in range(2):
        mine = (p.controller == ctrl) & (p.status == SERVED)
        order = np.argsort(p.start[mine], kind="stable")
        comp = p.completion[mine][order]
        assert np.all(np.diff(comp) >= 0)
        assert np.all(p.completion[mine] >= p.arrival[mine])
        assert np.all(p.arrival[mine] >= p.emit[mine])


def test_trace_write(tmp_path, failover):
    _, tr = _run(failover, 0, horizon=1.0)
    path = tmp_path / "trace.tsv"
    tr.write(path, packets=True)
    lines = path.read_text().splitlines()
    assert lines == tr.lines(packets=True)
    times = [float(l.split("\t")[0]) for l in lines]
    assert times == sorted(times)
