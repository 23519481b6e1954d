"""Balanced-delay load balancing across base controllers.

Two branches run on every evaluation pass:

* failure: switches mastered by a down controller are handed to the
  nearest live idle controller;
* overload: on a controller whose load reached ``p_th``, every switch
  sending more than its share ``p_th / m`` has the excess routed to the
  nearest idle controller when queueing it locally costs more than
  shipping it.

A pass works on a snapshot and keeps a projected load so that several
actions in one pass do not pile onto the same target.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .errors import NoIdleController, UnstableQueue
from .queueing import LoadState, queueing_delay, total_delay_or_inf
from .topology import MASTER, SLAVE, UNASSIGNED, AssignmentMatrix, Offload, Topology

FULL_MASTER = "FullMaster"
EXCESS_ONLY = "ExcessOnly"


@dataclass(frozen=True)
class BalancerParams:
    p_th: float
    idle_fraction: float = 0.5
    evaluation_period: float = 0.1
    enabled: bool = True
    migration: str = "excess"  # excess | full
    load_window: float = 1.0
    objective_guard: bool = True

    def __post_init__(self):
        if not self.p_th > 0:
            raise ValueError("p_th must be positive")
        if not 0 < self.idle_fraction < 1:
            raise ValueError("idle_fraction must lie in (0, 1)")
        if not self.evaluation_period > 0:
            raise ValueError("evaluation_period must be positive")
        if self.migration not in ("excess", "full"):
            raise ValueError("migration must be 'excess' or 'full'")


@dataclass(frozen=True)
class MigrationAction:
    switch: int
    source: int
    target: int
    kind: str
    rate: float = 0.0  # packets/s moved to the target
    fraction: float = 1.0  # share of the switch stream moved


@dataclass(frozen=True)
class MigrationPlan:
    actions: tuple = ()
    orphans: tuple = ()  # switches of a down controller that found no target
    cleared_offloads: tuple = ()  # switches whose offload target went down

    def __bool__(self):
        return bool(self.actions or self.cleared_offloads)

    def __len__(self):
        return len(self.actions)


def _t_w(lam: float, mu: float) -> float:
    try:
        return queueing_delay(lam, mu)
    except UnstableQueue:
        return math.inf


def overload_test(load: LoadState, i: int, j: int, params: BalancerParams, t_c: float,
                  m: Optional[int] = None, lam_i: Optional[float] = None) -> bool:
    """Whether switch ``j``'s excess over its share should leave controller ``i``.

    ``t_c`` is the per-packet transfer delay to the candidate target and
    ``m`` the number of switches controller ``i`` masters (defaults to the
    switches it currently receives traffic from).  ``lam_i`` overrides the
    controller's arrival rate, e.g. with a projected value.
    """
    lam = float(load.lam[i]) if lam_i is None else float(lam_i)
    if lam < params.p_th:
        return False
    if m is None:
        m = int(np.count_nonzero(load.pair_rate[i] > 0))
    if m <= 0:
        return False
    share = params.p_th / m
    p_ij = float(load.pair_rate[i, j])
    if not p_ij > share:
        return False
    excess = p_ij - share
    t_w = _t_w(lam, float(load.mu[i]))
    if math.isinf(t_w):
        return math.isfinite(t_c)
    local = load.t_s + t_w * excess
    remote = t_c * excess + load.t_d
    return local > remote


def _idle_candidates(topology, util, idle_fraction, down, exclude):
    return [
        c for c in range(topology.n)
        if c not in down and c not in exclude and util[c] < idle_fraction
    ]


def select_target_controller(topology: Topology, assignment: AssignmentMatrix, load: LoadState, j: int,
                             params: BalancerParams, down: Iterable[int] = (),
                             exclude: Optional[Iterable[int]] = None, lam=None) -> int:
    """Nearest live controller below the idle threshold; ties go to the lowest id."""
    j = topology.check_switch(j)
    lam = load.lam if lam is None else np.asarray(lam, dtype=float)
    util = lam / load.mu
    if exclude is None:
        exclude = {assignment.master_of(j)}
    cands = _idle_candidates(topology, util, params.idle_fraction, set(down), set(exclude))
    if not cands:
        raise NoIdleController(f"no idle controller for switch s{j}")
    return min(cands, key=lambda c: (topology.distances[j, c], c))


def _move_master(roles, offloads, j, source, target, source_role):
    roles[source, j] = source_role
    roles[target, j] = MASTER
    off = offloads.get(j)
    if off is not None and (off.target == target or roles[off.target, j] != SLAVE):
        del offloads[j]


def apply_plan(assignment: AssignmentMatrix, plan: MigrationPlan, failed: Iterable[int] = ()) -> AssignmentMatrix:
    """Assignment after ``plan``; controllers in ``failed`` lose their entries."""
    roles = assignment.roles.copy()
    offloads = assignment.offloads
    failed = set(failed)
    for j in plan.cleared_offloads:
        offloads.pop(j, None)
    for a in plan.actions:
        if a.kind == FULL_MASTER:
            role = UNASSIGNED if a.source in failed else SLAVE
            _move_master(roles, offloads, a.switch, a.source, a.target, role)
        else:
            if roles[a.target, a.switch] == UNASSIGNED:
                roles[a.target, a.switch] = SLAVE
            offloads[a.switch] = Offload(a.target, a.fraction)
    return AssignmentMatrix(roles, offloads).validate()


def apply_failure(topology: Topology, assignment: AssignmentMatrix, failed: int,
                  load: Optional[LoadState] = None, params: Optional[BalancerParams] = None,
                  down: Iterable[int] = ()) -> MigrationPlan:
    """Reassign every switch mastered by ``failed`` to its nearest live idle controller.

    Without ``load`` every live controller counts as idle.  Switches that
    find no target are reported in ``plan.orphans``.
    """
    failed = topology.check_controller(failed)
    down = set(down) | {failed}
    idle_fraction = params.idle_fraction if params else 0.5
    if load is None:
        switch_rates = np.zeros(topology.m)
        lam = np.zeros(topology.n)
        mu = topology.capacity
    else:
        switch_rates = load.switch_rates
        lam = load.lam.copy()
        mu = load.mu
    lam[failed] = 0.0
    masters = assignment.masters()
    actions, orphans = [], []
    for j in range(topology.m):
        if masters[j] != failed:
            continue
        cands = _idle_candidates(topology, lam / mu, idle_fraction, down, {failed})
        if not cands:
            orphans.append(j)
            continue
        target = min(cands, key=lambda c: (topology.distances[j, c], c))
        rate = float(switch_rates[j])
        off = assignment.offload_of(j)
        if off is not None and off.target != target and off.target not in down:
            rate *= 1.0 - off.fraction
        lam[target] += rate
        actions.append(MigrationAction(j, failed, target, FULL_MASTER, rate, 1.0))
    cleared = tuple(
        j for j, off in sorted(assignment.offloads.items())
        if off.target in down and masters[j] not in down
    )
    return MigrationPlan(tuple(actions), tuple(orphans), cleared)


def rebalance_step(topology: Topology, assignment: AssignmentMatrix, load: LoadState,
                   params: BalancerParams, down: Iterable[int] = ()) -> MigrationPlan:
    """One overload pass over a consistent load snapshot."""
    down = set(down)
    lam = load.lam.astype(float).copy()
    working = assignment
    masters = assignment.masters()
    actions = []
    for i in range(topology.n):
        if i in down or lam[i] < params.p_th:
            continue
        mine = [j for j in range(topology.m) if masters[j] == i]
        m_i = len(mine)
        if m_i == 0:
            continue
        share = params.p_th / m_i
        # hottest switches first; ties by id
        for j in sorted(mine, key=lambda j: (-load.pair_rate[i, j], j)):
            if lam[i] < params.p_th:
                break
            if working.offload_of(j) is not None:
                continue
            p_ij = float(load.pair_rate[i, j])
            if not p_ij > share:
                continue
            try:
                target = select_target_controller(topology, working, load, j, params, down, {i}, lam)
            except NoIdleController:
                continue  # keep waiting for controller i to drain
            t_c = float(topology.distances[j, target])
            if not overload_test(load, i, j, params, t_c, m=m_i, lam_i=lam[i]):
                continue
            if params.migration == "full":
                action = MigrationAction(j, i, target, FULL_MASTER, p_ij, 1.0)
            else:
                excess = p_ij - share
                action = MigrationAction(j, i, target, EXCESS_ONLY, excess, excess / p_ij)
            candidate = apply_plan(working, MigrationPlan((action,)))
            if params.objective_guard:
                before = total_delay_or_inf(load, topology, working)
                after = total_delay_or_inf(load, topology, candidate)
                if after > before:
                    continue
            working = candidate
            lam[i] -= action.rate
            lam[target] += action.rate
            actions.append(action)
    return MigrationPlan(tuple(actions))
