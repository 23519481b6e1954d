"""Controller pool, switch layer, link delays and the control matrix.

Base controllers are numbered ``0..n-1`` and switches ``0..m-1``.  In link
lists they are written ``"c<i>"`` and ``"s<j>"``.  Main controllers only
exchange election traffic; switches never link to them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import (
    DisconnectedTopology,
    DuplicateId,
    InvalidAssignment,
    NegativeDelay,
    TopologyError,
    UnknownId,
)

MAIN = "main"
BASE = "base"

UNASSIGNED = 0
SLAVE = 1
MASTER = 2

ROLE_NAMES = {UNASSIGNED: "unassigned", SLAVE: "slave", MASTER: "master"}


@dataclass(frozen=True, order=True)
class ControllerId:
    layer: str
    id: int

    def __str__(self):
        return f"{self.layer}:{self.id}"

    @classmethod
    def parse(cls, text: str) -> "ControllerId":
        layer, _, num = str(text).partition(":")
        if layer not in (MAIN, BASE) or not num.isdigit():
            raise UnknownId(f"bad controller reference {text!r}; expected 'main:<i>' or 'base:<i>'")
        return cls(layer, int(num))


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    delay: float


def parse_node(label: str) -> tuple[str, int]:
    label = str(label)
    kind, num = label[:1], label[1:]
    if kind not in ("s", "c") or not num.isdigit():
        raise UnknownId(f"bad node label {label!r}; expected 's<j>' or 'c<i>'")
    return kind, int(num)


@dataclass(frozen=True, eq=False)
class Topology:
    n_base: int
    n_switches: int
    main_controllers: tuple[int, ...]
    capacity: np.ndarray
    links: tuple[Link, ...]
    main_base_delay: float = 0.0
    # switch x base-controller shortest-path delays, filled in __post_init__
    distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_base < 1 or self.n_switches < 1:
            raise TopologyError("need at least one base controller and one switch")
        cap = np.asarray(self.capacity, dtype=float)
        if cap.shape != (self.n_base,):
            raise TopologyError("capacity must list one service rate per base controller")
        if np.any(~np.isfinite(cap)) or np.any(cap <= 0):
            raise TopologyError("controller capacities must be finite and positive")
        cap.setflags(write=False)
        object.__setattr__(self, "capacity", cap)
        dist = _switch_controller_distances(self.n_base, self.n_switches, self.links)
        unreachable = np.argwhere(~np.isfinite(dist))
        if len(unreachable):
            j, i = unreachable[0]
            raise DisconnectedTopology(f"switch s{j} has no path to base controller c{i}")
        dist.setflags(write=False)
        object.__setattr__(self, "distances", dist)

    @property
    def n(self) -> int:
        return self.n_base

    @property
    def m(self) -> int:
        return self.n_switches

    def check_controller(self, i: int) -> int:
        if not 0 <= int(i) < self.n_base:
            raise UnknownId(f"unknown base controller {i}")
        return int(i)

    def check_switch(self, j: int) -> int:
        if not 0 <= int(j) < self.n_switches:
            raise UnknownId(f"unknown switch {j}")
        return int(j)

    def to_dict(self) -> dict:
        return {
            "main_controllers": list(self.main_controllers),
            "base_controllers": [
                {"id": i, "capacity": float(c)} for i, c in enumerate(self.capacity)
            ],
            "switches": self.n_switches,
            "links": [[l.a, l.b, float(l.delay)] for l in self.links],
            "main_base_delay": float(self.main_base_delay),
        }

    def same_structure(self, other: "Topology") -> bool:
        return (
            self.n_base == other.n_base
            and self.n_switches == other.n_switches
            and self.main_controllers == other.main_controllers
            and np.array_equal(self.capacity, other.capacity)
            and self.links == other.links
            and self.main_base_delay == other.main_base_delay
        )


def _switch_controller_distances(n, m, links):
    # node index: switches 0..m-1, base controllers m..m+n-1
    rows, cols, vals = [], [], []
    for link in links:
        u, v = (_node_index(x, n, m) for x in (link.a, link.b))
        rows += [u, v]
        cols += [v, u]
        # csgraph drops explicit zero weights; a tiny epsilon keeps the edge
        w = link.delay if link.delay > 0 else 1e-300
        vals += [w, w]
    # coo -> csr would sum parallel links; keep the cheapest one instead
    graph = _min_parallel(n + m, rows, cols, vals)
    dist = dijkstra(graph, directed=False, indices=np.arange(m))[:, m:]
    dist[dist < 1e-200] = 0.0
    return np.array(dist, dtype=float)


def _min_parallel(size, rows, cols, vals):
    best: dict[tuple[int, int], float] = {}
    for r, c, v in zip(rows, cols, vals):
        key = (r, c)
        if key not in best or v < best[key]:
            best[key] = v
    keys = list(best)
    r = [k[0] for k in keys]
    c = [k[1] for k in keys]
    v = [best[k] for k in keys]
    return coo_matrix((v, (r, c)), shape=(size, size)).tocsr()


def _node_index(label, n, m):
    kind, num = parse_node(label)
    if kind == "s":
        if num >= m:
            raise UnknownId(f"link endpoint {label} is not a known switch")
        return num
    if num >= n:
        raise UnknownId(f"link endpoint {label} is not a known base controller")
    return m + num


def build_topology(config) -> Topology:
    """Build a validated :class:`Topology` from a scenario or its topology section."""
    section = getattr(config, "topology", config)
    if not isinstance(section, Mapping):
        raise TopologyError("topology section must be a mapping")

    base = section.get("base_controllers", [])
    ids = [int(b["id"]) for b in base]
    _check_dense(ids, "base controller")
    capacity = np.empty(len(ids))
    for b in base:
        capacity[int(b["id"])] = float(b["capacity"])

    switches = section.get("switches", [])
    if isinstance(switches, int):
        sw_ids = list(range(switches))
    else:
        sw_ids = [int(s["id"]) if isinstance(s, Mapping) else int(s) for s in switches]
    _check_dense(sw_ids, "switch")

    mains = tuple(int(x) for x in section.get("main_controllers", []))
    if len(set(mains)) != len(mains):
        raise DuplicateId("duplicate main controller id")

    links = []
    for raw in section.get("links", []):
        a, b, delay = raw
        delay = float(delay)
        if not math.isfinite(delay):
            raise TopologyError(f"link {a}-{b} has a non-finite delay")
        if delay < 0:
            raise NegativeDelay(f"link {a}-{b} has negative delay {delay}")
        links.append(Link(str(a), str(b), delay))

    return Topology(
        n_base=len(ids),
        n_switches=len(sw_ids),
        main_controllers=mains,
        capacity=capacity,
        links=tuple(links),
        main_base_delay=float(section.get("main_base_delay", 0.0)),
    )


def _check_dense(ids, what):
    if len(set(ids)) != len(ids):
        dup = next(x for x in ids if ids.count(x) > 1)
        raise DuplicateId(f"duplicate {what} id {dup}")
    if sorted(ids) != list(range(len(ids))):
        raise TopologyError(f"{what} ids must be dense in [0, {len(ids)})")


def shortest_path_delay(topology: Topology, s: int, c: int) -> float:
    """Minimum total link delay from switch ``s`` to base controller ``c``."""
    return float(topology.distances[topology.check_switch(s), topology.check_controller(c)])


@dataclass(frozen=True)
class Offload:
    """Share of a switch's Packet_in stream diverted to a second controller."""

    target: int
    fraction: float


class AssignmentMatrix:
    """Ternary control matrix: rows are base controllers, columns switches.

    A switch may additionally carry an :class:`Offload` that diverts a fixed
    fraction of its stream to a Slave-role controller.
    """

    __slots__ = ("_roles", "_offloads")

    def __init__(self, roles, offloads: Mapping[int, Offload] | None = None):
        roles = np.array(roles, dtype=np.int8)
        if roles.ndim != 2:
            raise InvalidAssignment("assignment must be a 2-D matrix")
        roles.setflags(write=False)
        self._roles = roles
        self._offloads = dict(offloads or {})

    @classmethod
    def from_masters(cls, n: int, masters: Iterable[int], slaves: Mapping[int, Iterable[int]] | None = None):
        masters = list(masters)
        roles = np.zeros((n, len(masters)), dtype=np.int8)
        for j, i in enumerate(masters):
            roles[i, j] = MASTER
        for j, extra in (slaves or {}).items():
            for i in extra:
                if roles[i, j] != MASTER:
                    roles[i, j] = SLAVE
        return cls(roles)

    @property
    def roles(self) -> np.ndarray:
        return self._roles

    @property
    def offloads(self) -> dict[int, Offload]:
        return dict(self._offloads)

    @property
    def shape(self):
        return self._roles.shape

    def role(self, i: int, j: int) -> int:
        return int(self._roles[i, j])

    def binary(self) -> np.ndarray:
        """The 0/1 control matrix (Master and Slave both count as controlled)."""
        return (self._roles != UNASSIGNED).astype(np.int8)

    def masters(self) -> np.ndarray:
        """Master controller per switch, ``-1`` where a column has none."""
        has = (self._roles == MASTER).any(axis=0)
        out = np.argmax(self._roles == MASTER, axis=0).astype(int)
        out[~has] = -1
        return out

    def master_of(self, j: int) -> int:
        col = np.flatnonzero(self._roles[:, j] == MASTER)
        return int(col[0]) if len(col) else -1

    def offload_of(self, j: int) -> Offload | None:
        return self._offloads.get(int(j))

    def share(self, i: int, j: int) -> float:
        """Fraction of switch ``j``'s stream that controller ``i`` carries."""
        off = self._offloads.get(j)
        if self._roles[i, j] == MASTER:
            return 1.0 - off.fraction if off else 1.0
        if off is not None and off.target == i:
            return off.fraction
        return 0.0

    def shares(self) -> np.ndarray:
        out = (self._roles == MASTER).astype(float)
        for j, off in self._offloads.items():
            out[:, j] *= 1.0 - off.fraction
            out[off.target, j] += off.fraction
        return out

    def served_by(self, i: int) -> list[int]:
        return [j for j in range(self.shape[1]) if self.share(i, j) > 0.0]

    def validate(self):
        roles = self._roles
        if not np.isin(roles, (UNASSIGNED, SLAVE, MASTER)).all():
            raise InvalidAssignment("entries must be unassigned, slave or master")
        counts = (roles == MASTER).sum(axis=0)
        bad = np.flatnonzero(counts != 1)
        if len(bad):
            raise InvalidAssignment(f"switch s{bad[0]} has {counts[bad[0]]} masters")
        for j, off in self._offloads.items():
            if not 0.0 < off.fraction < 1.0:
                raise InvalidAssignment(f"offload fraction for s{j} must lie in (0, 1)")
            if roles[off.target, j] != SLAVE:
                raise InvalidAssignment(f"offload target c{off.target} of s{j} must hold the slave role")
        return self

    def replace(self, roles=None, offloads=None) -> "AssignmentMatrix":
        return AssignmentMatrix(
            self._roles if roles is None else roles,
            self._offloads if offloads is None else offloads,
        )

    def __eq__(self, other):
        if not isinstance(other, AssignmentMatrix):
            return NotImplemented
        return np.array_equal(self._roles, other._roles) and self._offloads == other._offloads

    def __hash__(self):
        return hash((self._roles.tobytes(), self._roles.shape, tuple(sorted(self._offloads.items()))))

    def __repr__(self):
        return f"AssignmentMatrix(masters={self.masters().tolist()}, offloads={self._offloads})"


def initial_assignment(config, topology: Topology) -> AssignmentMatrix:
    """Assignment declared in the scenario's switch list (master + slaves)."""
    section = getattr(config, "topology", config)
    switches = section.get("switches", [])
    n, m = topology.n, topology.m
    roles = np.zeros((n, m), dtype=np.int8)
    if isinstance(switches, int):
        switches = [{"id": j} for j in range(switches)]
    for sw in switches:
        if not isinstance(sw, Mapping):
            sw = {"id": int(sw)}
        j = int(sw["id"])
        master = sw.get("master")
        if master is None:
            master = int(np.argmin(topology.distances[j]))
        master = topology.check_controller(master)
        slaves = sw.get("slaves")
        if slaves is None:
            slaves = [i for i in range(n) if i != master]
        for i in slaves:
            roles[topology.check_controller(i), j] = SLAVE
        roles[master, j] = MASTER
    return AssignmentMatrix(roles).validate()


def worst_case_assignment_delay(topology: Topology, assignment: AssignmentMatrix) -> float:
    """Max over switches of the delay to the nearest controller assigned to it."""
    assignment.validate()
    d = np.where(assignment.roles.T != UNASSIGNED, topology.distances, np.inf)
    return float(d.min(axis=1).max())


def controller_switch_delay(topology: Topology, assignment: AssignmentMatrix, i: int) -> float:
    """Worst-case switch delay restricted to the switches assigned to controller ``i``.

    For every switch with a Master or Slave entry for ``i`` take the delay to
    its nearest assigned controller; return the largest (0 if ``i`` has none).
    """
    i = topology.check_controller(i)
    roles = assignment.roles
    mine = roles[i] != UNASSIGNED
    if not mine.any():
        return 0.0
    d = np.where(roles.T != UNASSIGNED, topology.distances, np.inf)
    return float(d[mine].min(axis=1).max())
