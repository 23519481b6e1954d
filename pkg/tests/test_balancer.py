import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from conftest import simple_topology
from sdiotsim.balancer import (
    EXCESS_ONLY,
    FULL_MASTER,
    BalancerParams,
    MigrationPlan,
    apply_failure,
    apply_plan,
    overload_test,
    rebalance_step,
    select_target_controller,
)
from sdiotsim.errors import NoIdleController
from sdiotsim.queueing import LoadState, load_state, total_delay_or_inf
from sdiotsim.topology import SLAVE, UNASSIGNED, AssignmentMatrix

HOT = [300.0, 175.0, 175.0, 175.0, 175.0]  # lambda = 1000 on one controller


def hot_setup(rates=HOT, mu=2000.0, neighbour_delay=0.0001):
    # controller 0 masters five switches; controller 1 is one short hop away
    links = [(f"s{j}", "c0", 0.0) for j in range(5)] + [("c0", "c1", neighbour_delay)]
    topo = simple_topology(links, 2, 5, capacity=mu)
    a = AssignmentMatrix.from_masters(2, [0] * 5, slaves={j: [1] for j in range(5)})
    load = LoadState.from_switch_rates([mu, mu], a, rates, 0.001, 0.001)
    return topo, a, load


def test_overload_clause_a_fails():
    _, _, load = hot_setup([150.0, 212.5, 212.5, 212.5, 212.5])
    assert not overload_test(load, 0, 0, BalancerParams(1000), t_c=0.0, m=5)


def test_overload_inequality_holds():
    _, _, load = hot_setup()
    # T_w at lambda 1000, mu 2000 is 0.5 ms per packet
    assert load.lam[0] == 1000.0
    assert overload_test(load, 0, 0, BalancerParams(1000), t_c=0.0001, m=5)


def test_overload_inequality_fails_when_shipping_is_dear():
    _, _, load = hot_setup()
    # remote = 100 * 0.01 + 0.001 > local = 0.001 + 100 * 0.0005
    assert not overload_test(load, 0, 0, BalancerParams(1000), t_c=0.01, m=5)


def test_overload_gated_below_threshold():
    _, _, load = hot_setup()
    assert not overload_test(load, 0, 0, BalancerParams(1001), t_c=0.0, m=5)


def test_overload_unstable_queue():
    _, _, load = hot_setup([600.0, 500.0, 500.0, 500.0, 500.0], mu=2000.0)
    assert load.lam[0] >= load.mu[0]
    assert overload_test(load, 0, 0, BalancerParams(1000), t_c=0.003, m=5)
    assert not overload_test(load, 0, 0, BalancerParams(1000), t_c=math.inf, m=5)


def three_controller_setup(util1=0.0, util2=0.0):
    # switch s0 on c0; c1 is 1 ms away, c2 3 ms away
    links = [("s0", "c0", 0.0), ("c0", "c1", 0.001), ("c0", "c2", 0.003), ("s1", "c1", 0.0), ("s2", "c2", 0.0)]
    topo = simple_topology(links, 3, 3, capacity=1000)
    a = AssignmentMatrix.from_masters(3, [0, 1, 2])
    load = LoadState.from_switch_rates(topo.capacity, a, [100.0, 1000 * util1, 1000 * util2])
    return topo, a, load


def test_select_nearest_idle():
    topo, a, load = three_controller_setup()
    assert select_target_controller(topo, a, load, 0, BalancerParams(100)) == 1


def test_select_skips_busy_nearest():
    topo, a, load = three_controller_setup(util1=0.9)
    assert select_target_controller(topo, a, load, 0, BalancerParams(100)) == 2


def test_select_no_idle():
    topo, a, load = three_controller_setup(util1=0.6, util2=0.7)
    with pytest.raises(NoIdleController):
        select_target_controller(topo, a, load, 0, BalancerParams(100))


def test_select_respects_down_set():
    topo, a, load = three_controller_setup()
    assert select_target_controller(topo, a, load, 0, BalancerParams(100), down={1}) == 2


def test_failure_moves_all_five_switches():
    topo, a, load = hot_setup(rates=[50.0] * 5)
    plan = apply_failure(topo, a, 0, load, BalancerParams(500))
    assert len(plan) == 5
    assert all(x.kind == FULL_MASTER and x.source == 0 and x.target == 1 for x in plan.actions)
    after = apply_plan(a, plan, failed={0})
    assert after.masters().tolist() == [1] * 5
    assert np.all(after.roles[0] == UNASSIGNED)


def test_failure_of_empty_controller():
    topo, a, load = hot_setup()
    assert not apply_failure(topo, a, 1, load)


def test_failure_tie_goes_to_lower_id():
    links = [("s0", "c1", 0.0), ("c1", "c0", 0.002), ("c1", "c2", 0.002)]
    topo = simple_topology(links, 3, 1)
    a = AssignmentMatrix.from_masters(3, [1])
    plan = apply_failure(topo, a, 1)
    assert plan.actions[0].target == 0


def test_failure_without_capacity_reports_orphans():
    topo, a, load = hot_setup(rates=[50.0] * 5)
    busy = LoadState(load.mu, load.pair_rate + np.array([[0] * 5, [1500.0, 0, 0, 0, 0]]))
    plan = apply_failure(topo, a, 0, busy, BalancerParams(500))
    assert plan.actions == () and plan.orphans == (0, 1, 2, 3, 4)


def test_rebalance_nothing_hot():
    topo, a, load = hot_setup(rates=[50.0] * 5)
    assert not rebalance_step(topo, a, load, BalancerParams(1000))


def test_rebalance_single_hot_pair():
    topo, a, load = hot_setup()
    plan = rebalance_step(topo, a, load, BalancerParams(1000))
    assert len(plan) == 1
    act = plan.actions[0]
    assert (act.switch, act.source, act.target, act.kind) == (0, 0, 1, EXCESS_ONLY)
    assert act.rate == pytest.approx(100.0)
    after = apply_plan(a, plan)
    assert after.offload_of(0).fraction == pytest.approx(1 / 3)
    assert after.role(1, 0) == SLAVE and after.master_of(0) == 0


def test_toy_fixed_point(toy):
    topo = toy.build_topology()
    a = toy.initial_assignment(topo)
    params = toy.balancer_params(True)
    load = load_state(topo, a, toy.traffic_profile(), 1.0, toy.constants.t_s, toy.constants.t_d)
    plan = rebalance_step(topo, a, load, params)
    assert len(plan) >= 1
    after = apply_plan(a, plan)
    moved = load.project(after)
    assert not rebalance_step(topo, after, moved, params)
    masters = after.masters()
    for i in range(topo.n):
        mine = [j for j in range(topo.m) if masters[j] == i]
        for j in mine:
            t_c = min(topo.distances[j, c] for c in range(topo.n) if c != i)
            assert not overload_test(moved, i, j, params, t_c, m=len(mine))


def test_params_validation():
    with pytest.raises(ValueError):
        BalancerParams(0)
    with pytest.raises(ValueError):
        BalancerParams(10, idle_fraction=1.0)


# -- properties ---------------------------------------------------------------------

@st.composite
def scenarios(draw):
    n = draw(st.integers(2, 4))
    m = draw(st.integers(2, 7))
    delay = st.integers(0, 10).map(lambda k: k * 0.0005)
    links = [(f"c{i}", f"c{i + 1}", draw(delay)) for i in range(n - 1)]
    links += [(f"s{j}", f"c{draw(st.integers(0, n - 1))}", draw(delay)) for j in range(m)]
    mu = draw(st.lists(st.floats(200, 2000), min_size=n, max_size=n))
    topo = simple_topology(links, n, m)
    topo = type(topo)(n, m, (0,), np.array(mu), topo.links)
    masters = draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    a = AssignmentMatrix.from_masters(n, masters, slaves={j: range(n) for j in range(m)})
    rates = draw(st.lists(st.floats(0, 600), min_size=m, max_size=m))
    load = LoadState.from_switch_rates(mu, a, rates, 0.001, 0.001)
    params = BalancerParams(draw(st.floats(50, 1500)), draw(st.floats(0.2, 0.9)),
                            migration=draw(st.sampled_from(["excess", "full"])))
    return topo, a, load, params


@given(scenarios())
def test_plans_keep_assignment_valid(sc):
    topo, a, load, params = sc
    plan = rebalance_step(topo, a, load, params)
    apply_plan(a, plan).validate()
    for f in range(topo.n):
        fp = apply_failure(topo, a, f, load, params)
        res = apply_plan(a, fp, failed={f})
        res.validate()
        assert all(res.role(f, j) == UNASSIGNED for j in range(topo.m) if a.master_of(j) == f
                   and j not in fp.orphans)


@given(scenarios())
def test_rebalance_never_worsens_total_delay(sc):
    topo, a, load, params = sc
    plan = rebalance_step(topo, a, load, params)
    assume(plan)
    before = total_delay_or_inf(load, topo, a)
    after = total_delay_or_inf(load, topo, apply_plan(a, plan))
    assert after <= before


@given(scenarios())
def test_no_thrash_under_stationary_load(sc):
    topo, a, load, params = sc
    seen = set()
    for _ in range(4):
        plan = rebalance_step(topo, a, load, params)
        for act in plan.actions:
            if act.kind == EXCESS_ONLY:
                assert (act.switch, act.source) not in seen
                seen.add((act.switch, act.source))
        a = apply_plan(a, plan)
        load = load.project(a)


@given(scenarios())
def test_failure_closure_with_ample_capacity(sc):
    topo, a, load, _ = sc
    params = BalancerParams(100, idle_fraction=0.99)
    idle = LoadState(np.full(topo.n, 1e9), load.pair_rate, 0.001, 0.001)
    for f in range(topo.n):
        plan = apply_failure(topo, a, f, idle, params)
        assert plan.orphans == ()
        after = apply_plan(a, plan, failed={f})
        assert not np.any(after.masters() == f)


def test_plan_truthiness():
    assert not MigrationPlan()
    assert MigrationPlan(cleared_offloads=(3,))
