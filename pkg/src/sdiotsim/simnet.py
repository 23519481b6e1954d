"""Deterministic discrete-event engine for both control layers.

Control events (election messages, timers, failures, balancer ticks) go
through a single heap ordered by ``(time, sequence)``.  Packet_in traffic
is far denser, so it is generated one evaluation slice at a time and
pushed through each controller's FIFO server in batches.  A controller's
arrivals are only served up to the current clock, which keeps the FIFO
order exact across failures and reassignments.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable, NamedTuple, Optional

import numpy as np

from . import kernels
from .balancer import BalancerParams, apply_failure, apply_plan, rebalance_step
from .election import (
    BASELINE,
    VARIANT,
    ElectionMessage,
    ElectionOutcome,
    ElectionParams,
    Kind,
    fresh_state,
    step,
)
from .errors import InvariantViolation, NoLiveControllers, TimeTravel, UnknownId
from .queueing import LoadState
from .topology import BASE, MAIN, SLAVE, UNASSIGNED, AssignmentMatrix, ControllerId, Topology
from .traffic import STREAM_WORK, ArrivalStream, TrafficProfile, stream_rng

STREAM_LOSS = 3
STREAM_ELECTION = 4

# packet status codes
PENDING = 0  # emitted, not yet reached its controller
SERVED = 1  # accepted by a live server (completion may lie past the horizon)
DROPPED = 2


class EventKind(str, Enum):
    MESSAGE_DELIVERY = "MessageDelivery"
    PACKET_ARRIVAL = "PacketArrival"
    SERVICE_COMPLETION = "ServiceCompletion"
    FAILURE = "FailureInjection"
    RECOVERY = "RecoveryInjection"
    BALANCER_TICK = "BalancerTick"
    HEARTBEAT_TICK = "HeartbeatTick"


@dataclass(frozen=True)
class EngineConfig:
    ctrl_to_ctrl_latency: float = 0.02
    loss_probability: float = 0.0
    seed: int = 0
    horizon: float = 10.0

    def __post_init__(self):
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.loss_probability < 1.0:
            raise ValueError("loss_probability must lie in [0, 1)")
        if self.ctrl_to_ctrl_latency < 0:
            raise ValueError("latency must be non-negative")


@dataclass(frozen=True, order=True)
class Event:
    time: float
    sequence: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


class TraceRecord(NamedTuple):
    time: float
    sequence: int
    kind: str
    subject: str
    detail: Any = None


def _fmt_detail(detail) -> str:
    if detail is None:
        return ""
    if isinstance(detail, ElectionMessage):
        parts = [detail.kind.value, f"epoch={detail.epoch}", f"from=main:{detail.sender}",
                 f"to=main:{detail.receiver}"]
        if detail.ballot is not None:
            parts.append(f"k={detail.ballot}")
        if detail.value is not None:
            parts.append(f"v={detail.value}")
        return " ".join(parts)
    if isinstance(detail, dict):
        return " ".join(f"{k}={_fmt_value(v)}" for k, v in detail.items())
    return str(detail)


def _fmt_value(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


@dataclass
class PacketTable:
    """Every generated Packet_in, indexed by packet id (emission order per slice)."""

    emit: np.ndarray
    arrival: np.ndarray
    switch: np.ndarray
    controller: np.ndarray
    start: np.ndarray
    completion: np.ndarray
    drop_time: np.ndarray
    status: np.ndarray
    horizon: float

    def __len__(self):
        return len(self.emit)

    @classmethod
    def empty(cls, horizon=0.0):
        f = np.empty(0)
        i = np.empty(0, dtype=np.int64)
        return cls(f, f, i, i, f, f, f, np.empty(0, dtype=np.int8), horizon)

    @property
    def served_mask(self) -> np.ndarray:
        return (self.status == SERVED) & (self.completion <= self.horizon)

    @property
    def dropped_mask(self) -> np.ndarray:
        return self.status == DROPPED

    @property
    def queued_mask(self) -> np.ndarray:
        return ~(self.served_mask | self.dropped_mask)

    def counts(self) -> dict:
        served = int(self.served_mask.sum())
        dropped = int(self.dropped_mask.sum())
        return {
            "generated": len(self),
            "served": served,
            "dropped": dropped,
            "queued": len(self) - served - dropped,
        }


@dataclass
class EventTrace:
    records: list = field(default_factory=list)
    packets: PacketTable = field(default_factory=PacketTable.empty)
    summary: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def of_kind(self, kind: str) -> list:
        return [r for r in self.records if r.kind == kind]

    def lines(self, packets: bool = False) -> list[str]:
        """Line-oriented export: ``time<TAB>kind<TAB>subject<TAB>payload``."""
        rows = [(r.time, 0, r.sequence, r.kind, r.subject, _fmt_detail(r.detail)) for r in self.records]
        if packets and len(self.packets):
            rows += list(_packet_rows(self.packets))
            rows.sort(key=lambda r: r[:3])
        return [f"{t!r}\t{kind}\t{subj}\t{det}".rstrip("\t") for t, _, _, kind, subj, det in rows]

    def write(self, path, packets: bool = False):
        with open(path, "w") as fh:
            for line in self.lines(packets):
                fh.write(line + "\n")


def _packet_rows(p: PacketTable):
    for pid in range(len(p)):
        subj = f"s{p.switch[pid]}->base:{p.controller[pid]}"
        if p.arrival[pid] <= p.horizon:
            yield (float(p.arrival[pid]), 1, pid, EventKind.PACKET_ARRIVAL.value, subj, f"packet={pid}")
        if p.status[pid] == DROPPED:
            yield (float(p.drop_time[pid]), 2, pid, "PacketDrop", subj, f"packet={pid}")
        elif p.status[pid] == SERVED and p.completion[pid] <= p.horizon:
            yield (float(p.completion[pid]), 2, pid, EventKind.SERVICE_COMPLETION.value, subj,
                   f"packet={pid} response={float(p.completion[pid] - p.emit[pid])!r}")


class Engine:
    """One simulated control plane.  Single-threaded; engines share nothing."""

    def __init__(self, config: EngineConfig, *, topology: Optional[Topology] = None,
                 traffic: Optional[TrafficProfile] = None, assignment: Optional[AssignmentMatrix] = None,
                 t_s: float = 0.0, t_d: float = 0.0, balancer: Optional[BalancerParams] = None,
                 election: Optional[ElectionParams] = None, heartbeats: bool = True,
                 record_messages: bool = True, slice_period: Optional[float] = None):
        self.config = config
        self.now = 0.0
        self._queue: list = []
        self._seq = 0
        self.trace = EventTrace()
        self.warnings: list[str] = []
        self.main = None
        self.base = None
        if election is not None:
            self.main = MainLayer(self, election, heartbeats=heartbeats, record_messages=record_messages)
        if topology is not None:
            self.base = BaseLayer(self, topology, traffic, assignment, t_s, t_d, balancer, slice_period)

    # -- event queue -------------------------------------------------------

    def schedule(self, time: float, kind: EventKind, payload=None) -> Event:
        if time < self.now:
            raise TimeTravel(f"cannot schedule at {time!r} before now={self.now!r}")
        ev = Event(float(time), self._seq, EventKind(kind), payload)
        self._seq += 1
        heapq.heappush(self._queue, (ev.time, ev.sequence, ev))
        return ev

    def record(self, kind: str, subject: str, detail=None, time: Optional[float] = None):
        self.trace.records.append(TraceRecord(self.now if time is None else time, len(self.trace.records),
                                              kind, subject, detail))

    def warn(self, message: str):
        self.warnings.append(message)
        self.record("Warning", "engine", message)

    def pending(self) -> int:
        return len(self._queue)

    def run_until(self, t_end: float, stop: Optional[Callable[[], bool]] = None) -> EventTrace:
        """Process every event with ``time <= t_end`` (or until ``stop()`` holds)."""
        if t_end > self.config.horizon:
            raise ValueError(f"t_end {t_end!r} is past the horizon {self.config.horizon!r}")
        if t_end < self.now:
            raise TimeTravel(f"t_end {t_end!r} is before now={self.now!r}")
        queue = self._queue
        stopped = False
        while queue and queue[0][0] <= t_end:
            _, _, ev = heapq.heappop(queue)
            self.now = ev.time
            self._dispatch(ev)
            if stop is not None and stop():
                stopped = True
                break
        if not stopped:
            self.now = t_end
        self._finish()
        return self.trace

    def _dispatch(self, ev: Event):
        kind = ev.kind
        if kind is EventKind.MESSAGE_DELIVERY or kind is EventKind.HEARTBEAT_TICK:
            self.main.deliver(ev.payload, self.now)
        elif kind is EventKind.BALANCER_TICK:
            self.base.tick(self.now)
        elif kind is EventKind.PACKET_ARRIVAL:
            self.base.add_packet(*ev.payload)
        elif kind is EventKind.FAILURE:
            self._fail(ev.payload)
        elif kind is EventKind.RECOVERY:
            self._recover(ev.payload)
        else:  # pragma: no cover - every kind is routed above
            raise InvariantViolation(f"unroutable event {ev}")

    def _finish(self):
        summary = self.trace.summary
        if self.base is not None:
            # arrivals since the last tick still reach their servers (or are dropped)
            self.base.flush_all(self.now)
            self.trace.packets = self.base.table(self.now)
            summary.update(self.base.reconcile(self.trace.packets))
        if self.main is not None:
            summary.update(self.main.summary())
        summary["warnings"] = len(self.warnings)

    # -- failures ----------------------------------------------------------

    def _layer(self, controller):
        if isinstance(controller, str):
            if controller == "main:leader":
                return MAIN, None
            controller = ControllerId.parse(controller)
        if controller.layer == MAIN:
            if self.main is None:
                raise UnknownId(f"no main layer for {controller}")
            if not 0 <= controller.id < self.main.params.n:
                raise UnknownId(f"unknown controller {controller}")
        else:
            if self.base is None:
                raise UnknownId(f"no base layer for {controller}")
            self.base.topology.check_controller(controller.id)
        return controller.layer, controller.id

    def inject_failure(self, controller, at: float) -> Event:
        """Crash ``controller`` (a :class:`ControllerId` or ``"base:2"``) at time ``at``.

        ``"main:leader"`` resolves to the committed leader at that instant.
        """
        self._layer(controller)
        return self.schedule(at, EventKind.FAILURE, controller)

    def inject_recovery(self, controller, at: float) -> Event:
        self._layer(controller)
        return self.schedule(at, EventKind.RECOVERY, controller)

    def _fail(self, controller):
        layer, cid = self._layer(controller)
        if layer == MAIN:
            if cid is None:
                cid = self.main.current_leader()
                if cid is None:
                    self.warn("leader failure requested but no leader is committed")
                    return
            self.main.fail(cid, self.now)
        else:
            self.base.fail(cid, self.now)

    def _recover(self, controller):
        layer, cid = self._layer(controller)
        if layer == MAIN:
            if cid is None:
                cid = self.main.last_failed_leader
                if cid is None:
                    self.warn("leader recovery requested but no leader has failed")
                    return
            self.main.recover(cid, self.now)
        else:
            self.base.recover(cid, self.now)


# -- main layer -------------------------------------------------------------------

class MainLayer:
    """Election state machines on a lossy, fixed-latency network."""

    def __init__(self, engine: Engine, params: ElectionParams, heartbeats=True, record_messages=True):
        self.engine = engine
        self.params = params
        self.heartbeats = heartbeats
        self.record_messages = record_messages
        n = params.n
        seed = engine.config.seed
        self.states = {c: fresh_state(c) for c in range(n)}
        self.live = set(range(n))
        self._rand = {c: stream_rng(seed, STREAM_ELECTION, c) for c in range(n)}
        self._loss_rng = stream_rng(seed, STREAM_LOSS, 0)
        self._loss = engine.config.loss_probability
        self._latency = engine.config.ctrl_to_ctrl_latency
        self.sent = Counter()  # network election messages per epoch
        self.lost = 0
        self.heartbeat_messages = 0
        self.commits: dict[int, dict[int, tuple[int, float]]] = {}
        self.triggers: dict[int, float] = {}
        self.completed: dict[int, dict] = {}
        self.violations: list[str] = []
        self.last_failed_leader: Optional[int] = None

    def start(self, trigger_time: float, proposers: Optional[Iterable[int]] = None):
        eng = self.engine
        proposers = sorted(self.live if proposers is None else set(proposers) & self.live)
        if not proposers:
            raise NoLiveControllers("no live main controllers")
        epoch = max(s.epoch for s in self.states.values())
        self.triggers.setdefault(epoch, trigger_time)
        eng.record("ElectionStart", "main", {"epoch": epoch, "algorithm": self.params.algorithm,
                                             "proposers": proposers}, time=trigger_time)
        for c in proposers:
            delay = self._rand[c].random() * self.params.jitter
            msg = ElectionMessage(Kind.START, epoch, c, c, send_time=trigger_time)
            eng.schedule(trigger_time + delay, EventKind.MESSAGE_DELIVERY, msg)
        if self.heartbeats:
            for c in sorted(self.live):
                msg = ElectionMessage(Kind.HB_TICK, epoch, c, c, send_time=trigger_time)
                eng.schedule(trigger_time + self.params.heartbeat, EventKind.HEARTBEAT_TICK, msg)

    def current_leader(self) -> Optional[int]:
        best = None
        for c in sorted(self.live):
            st = self.states[c]
            if st.is_leader and (best is None or st.epoch > self.states[best].epoch):
                best = c
        return best

    def deliver(self, msg: ElectionMessage, now: float):
        cid = msg.receiver
        if cid not in self.live:
            return
        if msg.kind == Kind.HB_TICK and not self.heartbeats:
            return
        old = self.states[cid]
        new, out = step(old, msg, now, self.params, float(self._rand[cid].random()))
        self.states[cid] = new
        if self.record_messages and msg.kind not in (Kind.HB_TICK, Kind.HEARTBEAT):
            self.engine.record(EventKind.MESSAGE_DELIVERY.value, f"main:{cid}", msg)
        self._observe(cid, old, new, now)
        for o in out:
            self._send(cid, o, now)

    def _send(self, cid, o, now):
        eng = self.engine
        msg = o.msg
        if o.delay is not None:
            kind = EventKind.HEARTBEAT_TICK if msg.kind == Kind.HB_TICK else EventKind.MESSAGE_DELIVERY
            if kind is EventKind.HEARTBEAT_TICK and not self.heartbeats:
                return
            eng.schedule(now + o.delay, kind, msg)
            return
        if msg.receiver == cid:
            eng.schedule(now, EventKind.MESSAGE_DELIVERY, msg)  # local, free and lossless
            return
        if msg.kind == Kind.HEARTBEAT:
            self.heartbeat_messages += 1
        else:
            self.sent[msg.epoch] += 1
        if self._loss > 0.0 and self._loss_rng.random() < self._loss:
            self.lost += 1
            if self.record_messages and msg.kind != Kind.HEARTBEAT:
                eng.record("MessageLost", f"main:{msg.receiver}", msg)
            return
        eng.schedule(now + self._latency, EventKind.MESSAGE_DELIVERY, msg)

    def _observe(self, cid, old, new, now):
        eng = self.engine
        if new.epoch > old.epoch:
            if new.epoch not in self.triggers:
                self.triggers[new.epoch] = now
                eng.record("ReElection", f"main:{cid}", {"epoch": new.epoch})
        if new.committed is not None and (old.committed is None or new.epoch != old.epoch):
            per_epoch = self.commits.setdefault(new.epoch, {})
            per_epoch[cid] = (new.committed, now)
            eng.record("Commit", f"main:{cid}", {"epoch": new.epoch, "leader": new.committed})
            values = {v for v, _ in per_epoch.values()}
            if len(values) > 1:
                self._violation(f"epoch {new.epoch}: leaders {sorted(values)} committed")
        if new.conflict is not None and old.conflict is None:
            self._violation(f"epoch {new.epoch}: main:{cid} saw conflicting commit {new.conflict}")
        self._check_complete(new.epoch, now)

    def _violation(self, text):
        self.violations.append(text)
        self.engine.record("SafetyViolation", "main", text)

    def _check_complete(self, epoch, now):
        if epoch in self.completed or epoch not in self.commits:
            return
        for c in self.live:
            st = self.states[c]
            if st.amnesiac:
                continue
            if st.epoch == epoch and st.committed is None:
                return
            if st.epoch < epoch:
                return
        commits = self.commits[epoch]
        leader = next(iter(commits.values()))[0]
        done = max(t for _, t in commits.values())
        trigger = self.triggers.get(epoch, 0.0)
        info = {
            "epoch": epoch,
            "algorithm": self.params.algorithm,
            "leader": leader,
            "trigger": trigger,
            "election_time": done - trigger,
            "messages": self.sent[epoch],
        }
        self.completed[epoch] = info
        self.engine.record("ElectionComplete", f"main:{leader}", info, time=done)

    def fail(self, cid, now):
        if cid not in self.live:
            self.engine.warn(f"main:{cid} is already down")
            return
        if self.states[cid].is_leader:
            self.last_failed_leader = cid
        self.live.discard(cid)
        self.engine.record(EventKind.FAILURE.value, f"main:{cid}")
        for e in sorted(self.commits):
            self._check_complete(e, now)

    def recover(self, cid, now):
        if cid in self.live:
            self.engine.warn(f"recovery of main:{cid} without a prior failure ignored")
            return
        old = self.states[cid]
        # only the epoch number survives the crash
        self.states[cid] = replace(fresh_state(cid, old.epoch, old.stale), amnesiac=True)
        self.live.add(cid)
        self.engine.record(EventKind.RECOVERY.value, f"main:{cid}")
        if self.heartbeats:
            msg = ElectionMessage(Kind.HB_TICK, old.epoch, cid, cid, send_time=now)
            self.engine.schedule(now + self.params.heartbeat, EventKind.HEARTBEAT_TICK, msg)

    def incomplete(self) -> list[dict]:
        out = []
        for e, t in sorted(self.triggers.items()):
            if e in self.completed:
                continue
            live = len(self.live)
            status = "no_quorum" if live < self.params.classic_quorum else "stalled"
            if any(s.epoch > e for s in self.states.values()):
                status = "superseded"
            out.append({"epoch": e, "trigger": t, "status": status})
        return out

    def summary(self) -> dict:
        return {
            "election_messages": sum(self.sent.values()),
            "messages_lost": self.lost,
            "heartbeat_messages": self.heartbeat_messages,
            "stale_messages": sum(s.stale for s in self.states.values()),
            "elections_completed": len(self.completed),
            "safety_violations": len(self.violations),
        }


# -- base layer --------------------------------------------------------------------

class _Store:
    """Growable column store for packets."""

    _FIELDS = (("emit", np.float64), ("arrival", np.float64), ("work", np.float64),
               ("start", np.float64), ("completion", np.float64), ("drop_time", np.float64),
               ("switch", np.int64), ("controller", np.int64), ("status", np.int8))

    def __init__(self, capacity=1024):
        self.size = 0
        self.cols = {name: np.empty(capacity, dtype=dt) for name, dt in self._FIELDS}

    def __getattr__(self, name):
        cols = self.__dict__.get("cols")
        if cols is not None and name in cols:
            return cols[name]
        raise AttributeError(name)

    def append(self, emit, arrival, work, switch, controller) -> np.ndarray:
        k = len(emit)
        need = self.size + k
        cap = len(self.cols["emit"])
        if need > cap:
            cap = max(need, 2 * cap)
            for name, col in self.cols.items():
                grown = np.empty(cap, dtype=col.dtype)
                grown[: self.size] = col[: self.size]
                self.cols[name] = grown
        sl = slice(self.size, need)
        c = self.cols
        c["emit"][sl] = emit
        c["arrival"][sl] = arrival
        c["work"][sl] = work
        c["switch"][sl] = switch
        c["controller"][sl] = controller
        c["start"][sl] = np.nan
        c["completion"][sl] = np.nan
        c["drop_time"][sl] = np.nan
        c["status"][sl] = PENDING
        ids = np.arange(self.size, need, dtype=np.int64)
        self.size = need
        return ids


class BaseLayer:
    """Switch traffic, per-controller FIFO servers and the balancer loop."""

    def __init__(self, engine: Engine, topology: Topology, traffic: Optional[TrafficProfile],
                 assignment: Optional[AssignmentMatrix], t_s: float, t_d: float,
                 balancer: Optional[BalancerParams], slice_period: Optional[float] = None):
        self.engine = engine
        self.topology = topology
        self.traffic = traffic
        n, m = topology.n, topology.m
        if assignment is None:
            assignment = AssignmentMatrix.from_masters(n, np.argmin(topology.distances, axis=1))
        self.assignment = assignment.validate()
        self.t_s, self.t_d = t_s, t_d
        self.balancer = balancer
        # traffic is generated one balancer period at a time
        self.period = balancer.evaluation_period if balancer is not None else (slice_period or 0.1)
        window = balancer.load_window if balancer is not None else 1.0
        self._window_slices = max(1, int(math.ceil(window / self.period - 1e-9)))
        self._slices: deque = deque(maxlen=self._window_slices)
        self.mu = topology.capacity.astype(float)
        seed = engine.config.seed
        self.store = _Store()
        self._streams = None
        if traffic is not None:
            if len(traffic) != m:
                raise ValueError(f"traffic has {len(traffic)} profiles for {m} switches")
            self._streams = [ArrivalStream(p, seed, j) for j, p in enumerate(traffic.profiles)]
        self._work = [stream_rng(seed, STREAM_WORK, j) for j in range(m)]
        self._acc = np.zeros(m)  # offload split accumulator per switch
        self.pending: list[list[np.ndarray]] = [[] for _ in range(n)]
        self.active: list[deque] = [deque() for _ in range(n)]  # served ids that may still be in service
        self.busy_until = np.zeros(n)
        self.down: set[int] = set()
        self._cleared: dict[int, list[int]] = {}
        self.generated = 0
        self.dropped = 0
        self.migrations = 0
        self.plans: list[dict] = []
        if traffic is not None:
            engine.schedule(0.0, EventKind.BALANCER_TICK)

    # -- traffic ---------------------------------------------------------

    def _split(self, j, master, off, count):
        """Controller per packet for a switch with an offload: a deterministic fractional split."""
        ctrl = np.full(count, master, dtype=np.int64)
        k = np.arange(1, count + 1, dtype=float)
        # packet k goes to the target whenever the running share crosses an integer
        totals = np.floor(self._acc[j] + k * off.fraction + 1e-12)
        prev = np.concatenate(([math.floor(self._acc[j] + 1e-12)], totals[:-1]))
        ctrl[totals > prev] = off.target
        self._acc[j] = (self._acc[j] + count * off.fraction) % 1.0
        return ctrl

    def _generate(self, t0, t1):
        n, m = self.topology.n, self.topology.m
        masters = self.assignment.masters()
        offloads = self.assignment.offloads
        emits, works, sws, ctrls = [], [], [], []
        for j in range(m):
            emit = self._streams[j].take(t1)
            k = len(emit)
            if not k:
                continue
            emits.append(emit)
            works.append(self._work[j].standard_exponential(k))
            sws.append(np.full(k, j, dtype=np.int64))
            off = offloads.get(j)
            if off is None:
                ctrls.append(np.full(k, masters[j], dtype=np.int64))
            else:
                ctrls.append(self._split(j, masters[j], off, k))
        counts = np.zeros((n, m))
        if emits:
            emit = np.concatenate(emits)
            sw = np.concatenate(sws)
            ctrl = np.concatenate(ctrls)
            arrival = emit + self.topology.distances[sw, ctrl]
            ids = self.store.append(emit, arrival, np.concatenate(works), sw, ctrl)
            self.generated += len(ids)
            np.add.at(counts, (ctrl, sw), 1.0)
            for c in range(n):
                mine = ids[ctrl == c]
                if len(mine):
                    self.pending[c].append(mine)
        self._slices.append((t1 - t0, counts))

    def add_packet(self, j, work=None, controller=None):
        """Emit one Packet_in from switch ``j`` now (hand-built traces)."""
        now = self.engine.now
        if work is None:
            work = self._work[j].standard_exponential()
        c = self.assignment.master_of(j) if controller is None else controller
        emit = np.array([now])
        ids = self.store.append(emit, emit + self.topology.distances[j, c], [work], j, c)
        self.generated += 1
        self.pending[c].append(ids)

    def inject(self, j: int, at: float, work: Optional[float] = None, controller: Optional[int] = None):
        self.topology.check_switch(j)
        return self.engine.schedule(at, EventKind.PACKET_ARRIVAL, (j, work, controller))

    # -- servers -----------------------------------------------------------

    def flush(self, c, t):
        """Hand every arrival at controller ``c`` before ``t`` to its server (or drop it)."""
        chunks = self.pending[c]
        if not chunks:
            return
        ids = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
        arr = self.store.arrival[ids]
        ready = arr < t
        if not ready.any():
            self.pending[c] = [ids]
            return
        self.pending[c] = [ids[~ready]] if not ready.all() else []
        take = ids[ready]
        order = np.lexsort((take, arr[ready]))
        take = take[order]
        st = self.store
        if c in self.down:
            st.status[take] = DROPPED
            st.drop_time[take] = st.arrival[take]
            self.dropped += len(take)
            return
        starts, comps, free = kernels.fifo_serve(st.arrival[take], st.work[take] / self.mu[c], self.busy_until[c])
        st.start[take] = starts
        st.completion[take] = comps
        st.status[take] = SERVED
        self.busy_until[c] = free
        act = self.active[c]
        act.append((take, comps))
        while act and act[0][1][-1] <= t:
            act.popleft()

    def flush_all(self, t):
        for c in range(self.topology.n):
            self.flush(c, t)

    def fail(self, c, t):
        eng = self.engine
        if c in self.down:
            eng.warn(f"base:{c} is already down")
            return
        self.flush(c, t)
        st = self.store
        lost = 0
        for ids, comps in self.active[c]:
            hit = comps > t
            if hit.any():
                victims = ids[hit]
                st.status[victims] = DROPPED
                st.drop_time[victims] = t
                lost += len(victims)
        self.active[c].clear()
        self.dropped += lost
        self.busy_until[c] = t
        self.down.add(c)
        eng.record(EventKind.FAILURE.value, f"base:{c}", {"dropped_in_queue": lost})

    def recover(self, c, t):
        eng = self.engine
        if c not in self.down:
            eng.warn(f"recovery of base:{c} without a prior failure ignored")
            return
        self.flush(c, t)  # arrivals while down are lost
        self.down.discard(c)
        self.busy_until[c] = t
        roles = self.assignment.roles.copy()
        restored = [j for j in self._cleared.pop(c, []) if roles[c, j] == UNASSIGNED]
        roles[c, restored] = SLAVE
        self.assignment = self.assignment.replace(roles=roles).validate()
        eng.record(EventKind.RECOVERY.value, f"base:{c}", {"slave_of": restored})

    # -- balancer ------------------------------------------------------------

    def measured_load(self) -> LoadState:
        """Switch rates over the sliding window, routed by the current assignment."""
        n, m = self.topology.n, self.topology.m
        span = sum(d for d, _ in self._slices)
        if span <= 0:
            rates = np.zeros(m)
        else:
            rates = sum(c for _, c in self._slices).sum(axis=0) / span
        return LoadState.from_switch_rates(self.mu, self.assignment, rates, self.t_s, self.t_d)

    def tick(self, t):
        eng = self.engine
        self.flush_all(t)
        bp = self.balancer
        if bp is not None and bp.enabled and t > 0:
            self._balance(t)
        horizon = eng.config.horizon
        t1 = min(t + self.period, horizon)
        if t1 > t:
            self._generate(t, t1)
        if t1 < horizon:
            eng.schedule(t1, EventKind.BALANCER_TICK)

    def _balance(self, t):
        eng = self.engine
        load = self.measured_load()
        masters = self.assignment.masters()
        for f in sorted(self.down):
            orphaned = bool(np.any(masters == f))
            stale_offload = any(off.target == f for off in self.assignment.offloads.values())
            if not (orphaned or stale_offload):
                continue
            plan = apply_failure(self.topology, self.assignment, f, load, self.balancer, self.down)
            self._apply(plan, t, "failure", failed={f})
            load = load.project(self.assignment)
            masters = self.assignment.masters()
        span = sum(d for d, _ in self._slices)
        if span >= self.balancer.load_window - 1e-9:
            # overload decisions are permanent, so wait for a full measurement window
            plan = rebalance_step(self.topology, self.assignment, load, self.balancer, self.down)
            if plan:
                self._apply(plan, t, "overload")
        masters = self.assignment.masters()
        orphaned = int(sum(np.count_nonzero(masters == f) for f in self.down))
        eng.record(EventKind.BALANCER_TICK.value, "base", {
            "lam": [round(float(x), 6) for x in load.project(self.assignment).lam],
            "down": sorted(self.down),
            "orphaned": orphaned,
        })

    def _apply(self, plan, t, reason, failed=()):
        eng = self.engine
        if plan.orphans:
            eng.record("NoIdleController", "base", {"reason": reason, "switches": list(plan.orphans)})
        if not plan:
            return
        self.assignment = apply_plan(self.assignment, plan, failed)
        for f in failed:
            self._cleared.setdefault(f, []).extend(a.switch for a in plan.actions)
        for a in plan.actions:
            self.migrations += 1
            info = {"reason": reason, "switch": a.switch, "from": a.source, "to": a.target,
                    "kind": a.kind, "rate": float(a.rate), "fraction": float(a.fraction)}
            self.plans.append(dict(info, time=t))
            eng.record("Migration", f"s{a.switch}", info)
        for j in plan.cleared_offloads:
            eng.record("OffloadCleared", f"s{j}", {"reason": reason})

    # -- results ---------------------------------------------------------------

    def table(self, now) -> PacketTable:
        st = self.store
        k = st.size
        c = {name: col[:k].copy() for name, col in st.cols.items()}
        return PacketTable(c["emit"], c["arrival"], c["switch"], c["controller"], c["start"],
                           c["completion"], c["drop_time"], c["status"], float(now))

    def reconcile(self, table: PacketTable) -> dict:
        counts = table.counts()
        if counts["generated"] != self.generated or counts["dropped"] != self.dropped:
            raise InvariantViolation(
                f"packet reconciliation failed: table {counts} vs counters "
                f"generated={self.generated} dropped={self.dropped}"
            )
        if counts["served"] + counts["dropped"] + counts["queued"] != counts["generated"]:
            raise InvariantViolation(f"packet classes do not add up: {counts}")
        counts["migrations"] = self.migrations
        return counts


# -- convenience drivers ---------------------------------------------------------

def run_election(ids, trigger_time: float = 0.0, algorithm: str = VARIANT, *, latency: float = 0.02,
                 loss: float = 0.0, seed: int = 0, proposers=None, horizon: Optional[float] = None,
                 failures=(), recoveries=(), heartbeats: bool = False, **params) -> ElectionOutcome:
    """Elect a leader among ``ids`` on a fresh engine and report the first election.

    ``proposers`` restricts which controllers start proposing (default: all);
    ``failures`` / ``recoveries`` are ``(controller_index, time)`` pairs.
    """
    ids = list(ids)
    if not ids:
        raise NoLiveControllers("no live main controllers")
    if algorithm not in (VARIANT, BASELINE):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    n = len(ids)
    ep = ElectionParams(algorithm=algorithm, n=n, latency=latency, **params)
    if horizon is None:
        horizon = trigger_time + (ep.max_retries + 2) * 2 * ep.retry_timeout
    cfg = EngineConfig(ctrl_to_ctrl_latency=latency, loss_probability=loss, seed=seed, horizon=horizon)
    eng = Engine(cfg, election=ep, heartbeats=heartbeats)
    index = {cid: k for k, cid in enumerate(ids)}
    for cid, at in failures:
        eng.inject_failure(ControllerId(MAIN, index[cid]), at)
    for cid, at in recoveries:
        eng.inject_recovery(ControllerId(MAIN, index[cid]), at)
    local = None if proposers is None else [index[p] for p in proposers]
    eng.main.start(trigger_time, local)
    main = eng.main
    eng.run_until(horizon, stop=lambda: 0 in main.completed)
    info = main.completed.get(0)
    commits = {ids[c]: ids[v] for c, (v, _) in main.commits.get(0, {}).items()}
    if info is None:
        status = "no_quorum" if len(main.live) < ep.classic_quorum else "stalled"
        return ElectionOutcome(algorithm, None, None, main.sent[0], 0, status, commits)
    return ElectionOutcome(algorithm, ids[info["leader"]], info["election_time"], info["messages"], 0,
                           "committed", commits)
