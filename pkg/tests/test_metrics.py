import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import simple_topology
from sdiotsim import metrics
from sdiotsim.election import BASELINE, VARIANT, ElectionParams
from sdiotsim.errors import EmptySeries, NoElectionInTrace
from sdiotsim.metrics import MetricSeries, read_csv, response_times, std_dev, write_csv
from sdiotsim.simnet import Engine, EngineConfig
from sdiotsim.traffic import Poisson, TrafficProfile


def test_response_single_packet():
    topo = simple_topology([("s0", "c0", 0.001)], 1, 1, capacity=500)
    eng = Engine(EngineConfig(horizon=1.0), topology=topo)
    eng.base.inject(0, 0.25, work=1.0)  # 1/500 s of service
    series = response_times(eng.run_until(1.0))
    assert len(series) == 1
    assert series.values[0] == pytest.approx(0.003)


def test_response_empty_trace():
    series = response_times(Engine(EngineConfig(horizon=1.0)).run_until(1.0))
    assert len(series) == 0
    with pytest.raises(EmptySeries):
        series.mean()


def test_response_low_load_limit():
    mu, link = 500.0, 0.001
    topo = simple_topology([("s0", "c0", link)], 1, 1, capacity=mu)
    eng = Engine(EngineConfig(horizon=4000.0, seed=4), topology=topo,
                 traffic=TrafficProfile((Poisson(5.0),)), slice_period=50.0)
    mean = response_times(eng.run_until(4000.0)).mean()
    assert mean == pytest.approx(link + 1 / mu, rel=0.03)


def test_std_dev_examples():
    assert std_dev([1, 2, 3]) == pytest.approx(math.sqrt(2 / 3))
    assert std_dev([4.2] * 7) == 0.0
    assert std_dev([9.0]) == 0.0
    with pytest.raises(EmptySeries):
        std_dev([])


values = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=50)


@given(values, st.floats(-100, 100))
def test_std_dev_homogeneous(xs, k):
    assert std_dev(np.array(xs) * k) == pytest.approx(abs(k) * std_dev(xs), rel=1e-9, abs=1e-9)


@given(values, st.floats(-100, 100))
def test_std_dev_translation_invariant(xs, c):
    assert std_dev(np.array(xs) + c) == pytest.approx(std_dev(xs), rel=1e-6, abs=1e-6)


@given(values)
def test_std_dev_matches_oracle(xs):
    assert std_dev(xs) == pytest.approx(oracles.pstdev(xs), rel=1e-9, abs=1e-9)


def _util_engine(rates, mu=100.0, horizon=200.0, seed=1):
    links = [(f"s{j}", f"c{j}", 0.0) for j in range(len(rates))]
    links += [(f"c{j}", f"c{j + 1}", 0.001) for j in range(len(rates) - 1)]
    topo = simple_topology(links, len(rates), len(rates), capacity=mu)
    tr = TrafficProfile(tuple(Poisson(r) for r in rates))
    return Engine(EngineConfig(horizon=horizon, seed=seed), topology=topo, traffic=tr, slice_period=1.0)


def test_utilization_idle_saturated_and_half():
    eng = _util_engine([0.0, 150.0, 50.0])
    tr = eng.run_until(200.0)
    u = metrics.utilization_series(tr, 5.0, 3)
    assert np.all(u[0].values == 0.0)
    assert np.all(u[1].values[1:] > 0.98)
    assert u[2].values.mean() == pytest.approx(0.5, rel=0.05)
    summary = metrics.utilization_summary(u, 5.0)
    assert summary.per_controller_mean[0] == 0.0
    assert summary.dispersion > 0


def test_utilization_window_validation():
    with pytest.raises(ValueError):
        metrics.utilization_series(Engine(EngineConfig(horizon=1.0)).run_until(1.0), 0.0)


def test_metric_series_validation():
    with pytest.raises(ValueError):
        MetricSeries([1.0, 0.5], [0.0, 0.0])
    with pytest.raises(ValueError):
        MetricSeries([1.0], [math.inf])


def _election_trace(n, alg, proposers=None):
    eng = Engine(EngineConfig(horizon=5.0), election=ElectionParams(alg, n, jitter=0.0), heartbeats=False)
    eng.main.start(0.0, proposers)
    return eng.run_until(5.0, stop=lambda: 0 in eng.main.completed)


def test_election_report_singleton():
    rep = metrics.election_report(_election_trace(1, VARIANT))
    assert rep.leader == 0 and rep.election_time == 0.0 and rep.message_count == 0


def test_election_report_variant_faster_uncontested():
    v = metrics.election_report(_election_trace(3, VARIANT, [2]))
    b = metrics.election_report(_election_trace(3, BASELINE, [2]))
    assert v.election_time < b.election_time
    assert v.per_algorithm[VARIANT]["count"] == 1
    # one round trip plus commit fan-out against two round trips plus fan-out
    assert v.election_time == pytest.approx(3 * 0.02 + 0.002)
    assert b.election_time == pytest.approx(5 * 0.02)


def test_election_report_needs_an_election():
    with pytest.raises(NoElectionInTrace):
        metrics.election_report(Engine(EngineConfig(horizon=1.0)).run_until(1.0))


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=20), st.floats(-5, 5), st.floats(-5, 5))
def test_ls_slope_matches_polyfit(xs, a, b):
    x = np.array(xs)
    if np.ptp(x) < 1e-3:
        return
    y = a * x + b + np.sin(x)
    assert metrics.ls_slope(x, y) == pytest.approx(np.polyfit(x, y, 1)[0], rel=1e-6, abs=1e-9)


@given(st.lists(st.tuples(st.text(min_size=1, max_size=8).filter(lambda s: s.isprintable()),
                          st.integers(0, 10**6), st.sampled_from(["variant", "baseline"]),
                          st.one_of(st.none(), st.integers(0, 9)),
                          st.floats(0, 1e4), st.floats(-1e9, 1e9)), max_size=20))
def test_csv_round_trip(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    write_csv(path, rows)
    back = read_csv(path)
    assert len(back) == len(rows)
    for orig, got in zip(rows, back):
        assert got["scenario_id"] == orig[0]
        assert int(got["seed"]) == orig[1]
        assert got["algorithm"] == orig[2]
        assert (got["controller_id"] == "") == (orig[3] is None)
        assert float(got["time"]) == orig[4]
        assert float(got["value"]) == orig[5]
