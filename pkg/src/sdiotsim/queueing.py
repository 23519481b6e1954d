"""Analytical load and delay model for the base control layer.

Everything here is a pure function.  Poisson and on/off profiles enter
through their rate functions (expectations); random draws live in the
simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import UnknownId, UnstableQueue
from .topology import AssignmentMatrix, Topology, controller_switch_delay
from .traffic import TrafficProfile, expected_count


@dataclass(frozen=True)
class LoadState:
    """Per-pair Packet_in rates plus controller capacities and delay constants.

    ``pair_rate[i, j]`` is the rate (packets/s) switch ``j`` offers to
    controller ``i``; ``mu[i]`` is the configured service rate of ``i``.
    """

    mu: np.ndarray
    pair_rate: np.ndarray
    t_s: float = 0.0
    t_d: float = 0.0

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        pr = np.asarray(self.pair_rate, dtype=float)
        if pr.ndim != 2 or pr.shape[0] != mu.shape[0]:
            raise ValueError("pair_rate must be n x m with n = len(mu)")
        if np.any(pr < 0) or np.any(mu < 0):
            raise ValueError("rates must be non-negative")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "pair_rate", pr)

    @property
    def lam(self) -> np.ndarray:
        return self.pair_rate.sum(axis=1)

    @property
    def switch_rates(self) -> np.ndarray:
        return self.pair_rate.sum(axis=0)

    @property
    def utilization(self) -> np.ndarray:
        return self.lam / self.mu

    def project(self, assignment: AssignmentMatrix) -> "LoadState":
        """Same switch emission rates, routed according to ``assignment``."""
        return LoadState(self.mu, assignment.shares() * self.switch_rates, self.t_s, self.t_d)

    @classmethod
    def from_switch_rates(cls, mu, assignment: AssignmentMatrix, switch_rates, t_s=0.0, t_d=0.0):
        return cls(mu, assignment.shares() * np.asarray(switch_rates, dtype=float), t_s, t_d)


class PacketCounts(NamedTuple):
    pair: np.ndarray  # P_ij
    controller: np.ndarray  # P_i
    total: float  # P


def offered_rate(assignment: AssignmentMatrix, traffic: TrafficProfile, i: int, j: int, t: float) -> float:
    """Rate switch ``j`` offers controller ``i`` at time ``t``.

    Zero unless ``i`` is the Master of ``j`` or the target of an offload
    from it; an offload splits the rate between the two.
    """
    n, m = assignment.shape
    if not (0 <= i < n and 0 <= j < m):
        raise UnknownId(f"unknown pair (c{i}, s{j})")
    share = assignment.share(i, j)
    if share == 0.0:
        return 0.0
    return share * traffic.rate(i, j, t)


def load_counts(assignment: AssignmentMatrix, traffic: TrafficProfile, T: float) -> PacketCounts:
    """Packet_in totals over ``[0, T]``: per pair, per controller, and overall."""
    if not T > 0:
        raise ValueError("interval length must be positive")
    shares = assignment.shares()
    per_switch = np.array([expected_count(p, 0.0, T) for p in traffic.profiles])
    pair = shares * per_switch
    controller = np.array([math.fsum(row) for row in pair])
    return PacketCounts(pair, controller, math.fsum(controller))


def load_state(topology: Topology, assignment: AssignmentMatrix, traffic: TrafficProfile, T: float,
               t_s: float = 0.0, t_d: float = 0.0) -> LoadState:
    """Average rates over ``[0, T]`` (``lambda_i = P_i / T``)."""
    counts = load_counts(assignment, traffic, T)
    return LoadState(topology.capacity, counts.pair / T, t_s, t_d)


def queueing_delay(lam: float, mu: float) -> float:
    """M/M/1 mean waiting time in queue, ``lam / (mu (mu - lam))``."""
    if not mu > 0:
        raise ValueError("service rate must be positive")
    if lam < 0:
        raise ValueError("arrival rate must be non-negative")
    if lam >= mu:
        raise UnstableQueue(lam, mu)
    return lam / (mu * (mu - lam))


def controller_path_delay(load: LoadState, topology: Topology, assignment: AssignmentMatrix, i: int) -> float:
    """Processing + sending + queueing + worst switch distance for controller ``i``."""
    i = topology.check_controller(i)
    lam = float(load.project(assignment).lam[i])
    try:
        t_w = queueing_delay(lam, float(load.mu[i]))
    except UnstableQueue as exc:
        raise UnstableQueue(exc.lam, exc.mu, controller=i) from None
    return load.t_s + load.t_d + t_w + controller_switch_delay(topology, assignment, i)


def total_delay(load: LoadState, topology: Topology, assignment: AssignmentMatrix) -> float:
    return math.fsum(controller_path_delay(load, topology, assignment, i) for i in range(topology.n))


def total_delay_or_inf(load: LoadState, topology: Topology, assignment: AssignmentMatrix) -> float:
    try:
        return total_delay(load, topology, assignment)
    except UnstableQueue:
        return math.inf


class BalanceObjective(NamedTuple):
    q: np.ndarray
    delay: float


def balance_objective(topology: Topology, assignment: AssignmentMatrix, load: LoadState) -> BalanceObjective:
    """Binary control matrix together with the total delay it induces."""
    return BalanceObjective(assignment.binary(), total_delay(load, topology, assignment))
