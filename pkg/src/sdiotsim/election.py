"""Leader election among main controllers.

Two algorithms share one acceptor/learner implementation:

``variant``
    Single-round election.  Every controller broadcasts ``Propose(k, v)``
    with ``v`` its own id.  An acceptor collects proposals for a short window
    and casts one fast vote for the highest ballot it saw, answering that
    proposer with ``Promise`` and everyone else with ``Reject``.  A proposer
    holding a fast quorum of promises commits and broadcasts ``Commit``.
    When the fast round fails (loss, crashes, split votes) the proposer falls
    back to classic rounds with a bumped ballot.

``baseline``
    Classic two-phase Paxos: ``Prepare``/``Promise`` then
    ``Accept``/``Accepted``, followed by the same ``Commit`` broadcast.

Fast and classic quorums follow the Fast Paxos intersection rule
(``q_classic + 2 q_fast > 2n``), which keeps the fallback safe after a
partially successful fast round.  All quorums are taken over the configured
cluster size, never the live subset.

:func:`step` is a pure transition function; the simulator owns clocks,
network latency, loss and randomness.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

from .errors import NoLiveControllers

VARIANT = "variant"
BASELINE = "baseline"
ALGORITHMS = (VARIANT, BASELINE)


class Ballot(NamedTuple):
    ts: int  # simulated nanoseconds
    cid: int

    def __str__(self):
        return f"({self.ts},{self.cid})"


def ballot_at(now: float, cid: int) -> Ballot:
    return Ballot(int(round(now * 1e9)), cid)


class Kind(str, Enum):
    PROPOSE = "Propose"
    PREPARE = "Prepare"
    PROMISE = "Promise"
    REJECT = "Reject"
    ACCEPT = "Accept"
    ACCEPTED = "Accepted"
    COMMIT = "Commit"
    HEARTBEAT = "Heartbeat"
    # local timers
    START = "Start"
    WINDOW = "WindowClose"
    RETRY = "Retry"
    HB_TICK = "HeartbeatTick"


TIMERS = frozenset({Kind.START, Kind.WINDOW, Kind.RETRY, Kind.HB_TICK})


class Vote(NamedTuple):
    round: Optional[Ballot]  # None marks the fast round
    value: int
    k: Ballot  # ballot of the proposal voted for


@dataclass(frozen=True)
class ElectionMessage:
    kind: Kind
    epoch: int
    sender: int
    receiver: int
    ballot: Optional[Ballot] = None
    value: Optional[int] = None
    vote: Optional[Vote] = None
    send_time: float = 0.0


class Outgoing(NamedTuple):
    msg: ElectionMessage
    delay: Optional[float] = None  # None: network delivery; otherwise a local timer


@dataclass(frozen=True)
class ElectionParams:
    algorithm: str = VARIANT
    n: int = 3
    latency: float = 0.02
    jitter: float = 0.001
    window: float = 0.002
    retry_timeout: float = 0.2
    max_retries: int = 50
    heartbeat: float = 0.05
    missed_heartbeats: int = 3

    @property
    def classic_quorum(self) -> int:
        return self.n // 2 + 1

    @property
    def fast_quorum(self) -> int:
        qc = self.classic_quorum
        return min(self.n, max(qc, (2 * self.n - qc) // 2 + 1))


@dataclass(frozen=True)
class ElectionState:
    cid: int
    epoch: int = 0
    # acceptor
    promised: Optional[Ballot] = None
    vote: Optional[Vote] = None
    buffer: tuple = ()  # (k, v, sender) proposals awaiting the window
    window_open: bool = False
    # proposer
    ballot: Optional[Ballot] = None
    phase: str = "idle"  # idle | fast | prepare | accept | waiting | done | stalled
    replies: tuple = ()  # (acceptor, vote) pairs for the current classic round
    fast_votes: frozenset = frozenset()
    rejects: frozenset = frozenset()
    accepted: frozenset = frozenset()
    highest_seen: Optional[Ballot] = None
    retries: int = 0
    started: bool = False
    # learner
    committed: Optional[int] = None
    conflict: Optional[int] = None
    last_heartbeat: float = 0.0
    # recovered without stable acceptor state: sit out the current epoch
    amnesiac: bool = False
    stale: int = 0

    @property
    def is_leader(self) -> bool:
        return self.committed == self.cid

    @property
    def highest_promise(self) -> Optional[Ballot]:
        """Highest ballot this acceptor is bound to, by promise or by vote."""
        return _max_ballot(self.promised, self.vote.k if self.vote else None)


def fresh_state(cid: int, epoch: int = 0, stale: int = 0) -> ElectionState:
    return ElectionState(cid=cid, epoch=epoch, stale=stale)


def _send(state, kind, to, now, **kw):
    return Outgoing(ElectionMessage(kind, state.epoch, state.cid, to, send_time=now, **kw))


def _timer(state, kind, delay, now, **kw):
    return Outgoing(ElectionMessage(kind, state.epoch, state.cid, state.cid, send_time=now, **kw), delay)


def _broadcast(state, params, kind, now, include_self=True, **kw):
    return [
        _send(state, kind, to, now, **kw)
        for to in range(params.n)
        if include_self or to != state.cid
    ]


def _max_ballot(*ballots):
    present = [b for b in ballots if b is not None]
    return max(present) if present else None


def step(state: ElectionState, msg: ElectionMessage, now: float, params: ElectionParams,
         rand: float = 0.0) -> tuple[ElectionState, list[Outgoing]]:
    """Apply one delivered message or timer to ``state``.

    ``rand`` is a uniform draw in ``[0, 1)`` supplied by the caller, used
    for start jitter and retry backoff.  Messages from an older epoch are
    dropped and counted in ``state.stale``.
    """
    if msg.epoch < state.epoch:
        if msg.kind == Kind.HB_TICK:
            return state, []  # tick from before an epoch change; a fresh tick is already armed
        return replace(state, stale=state.stale + 1), []
    out: list[Outgoing] = []
    if msg.epoch > state.epoch:
        state, out = _join_epoch(state, msg.epoch, now, params, rand)
    handler = _HANDLERS[msg.kind]
    state, more = handler(state, msg, now, params, rand)
    return state, out + more


def _join_epoch(state, epoch, now, params, rand):
    # a higher epoch means a leader failure was detected somewhere: return to zero
    joined = fresh_state(state.cid, epoch, state.stale)
    return joined, [
        _timer(joined, Kind.START, rand * params.jitter, now),
        _timer(joined, Kind.HB_TICK, params.heartbeat, now),
    ]


def begin(state: ElectionState, now: float, params: ElectionParams, rand: float = 0.0,
          epoch: Optional[int] = None) -> tuple[ElectionState, list[Outgoing]]:
    """Arm the start timer for an election in ``epoch`` (default: the current one)."""
    if epoch is not None and epoch != state.epoch:
        joined, out = _join_epoch(state, epoch, now, params, rand)
        return joined, out[:1]
    return state, [_timer(state, Kind.START, rand * params.jitter, now)]


# -- proposer ----------------------------------------------------------------

def _on_start(state, msg, now, params, rand):
    if state.started or state.committed is not None or state.amnesiac:
        return state, []
    k = ballot_at(now, state.cid)
    state = replace(state, started=True, ballot=k, highest_seen=_max_ballot(state.highest_seen, k))
    retry = _timer(state, Kind.RETRY, params.retry_timeout * (1.0 + rand), now)
    if params.algorithm == VARIANT:
        state = replace(state, phase="fast", fast_votes=frozenset(), rejects=frozenset())
        return state, _broadcast(state, params, Kind.PROPOSE, now, ballot=k, value=state.cid) + [retry]
    state = replace(state, phase="prepare", replies=())
    return state, _broadcast(state, params, Kind.PREPARE, now, ballot=k) + [retry]


def _on_retry(state, msg, now, params, rand):
    if state.committed is not None or state.amnesiac or state.phase == "stalled":
        return state, []
    if state.retries >= params.max_retries:
        return replace(state, phase="stalled"), []
    floor_ts = max(int(round(now * 1e9)), (state.highest_seen.ts + 1) if state.highest_seen else 0)
    b = Ballot(floor_ts, state.cid)
    state = replace(state, ballot=b, phase="prepare", replies=(), accepted=frozenset(),
                    retries=state.retries + 1, started=True,
                    highest_seen=_max_ballot(state.highest_seen, b))
    backoff = params.retry_timeout * (1.0 + rand)
    return state, _broadcast(state, params, Kind.PREPARE, now, ballot=b) + [
        _timer(state, Kind.RETRY, backoff, now)
    ]


def _choose_value(state, params):
    votes = [v for _, v in state.replies if v is not None]
    classic = [v for v in votes if v.round is not None]
    if classic:
        return max(classic, key=lambda v: v.round).value
    if votes:
        counts = Counter(v.value for v in votes)
        unseen = params.n - len(state.replies)
        possible = [val for val, c in counts.items() if c + unseen >= params.fast_quorum]
        if possible:
            return possible[0]
        return max(votes, key=lambda v: v.k).value
    return state.cid


def _on_promise(state, msg, now, params, rand):
    if state.phase == "fast" and msg.ballot == state.ballot:
        votes = state.fast_votes | {msg.sender}
        state = replace(state, fast_votes=votes)
        if len(votes) >= params.fast_quorum:
            return _chosen(state, state.cid, now, params)
        return state, []
    if state.phase == "prepare" and msg.ballot == state.ballot:
        if any(a == msg.sender for a, _ in state.replies):
            return state, []
        replies = state.replies + ((msg.sender, msg.vote),)
        state = replace(state, replies=replies)
        if len(replies) >= params.classic_quorum:
            value = _choose_value(state, params)
            state = replace(state, phase="accept", accepted=frozenset())
            return state, _broadcast(state, params, Kind.ACCEPT, now, ballot=state.ballot, value=value)
    return state, []


def _on_accepted(state, msg, now, params, rand):
    if state.phase != "accept" or msg.ballot != state.ballot:
        return state, []
    accepted = state.accepted | {msg.sender}
    state = replace(state, accepted=accepted)
    if len(accepted) >= params.classic_quorum:
        return _chosen(state, msg.value, now, params)
    return state, []


def _on_reject(state, msg, now, params, rand):
    state = replace(state, highest_seen=_max_ballot(state.highest_seen, msg.ballot))
    if state.phase == "fast" and msg.value == state.cid:
        rejects = state.rejects | {msg.sender}
        state = replace(state, rejects=rejects)
        if len(rejects) > params.n - params.fast_quorum:
            state = replace(state, phase="waiting")
    elif state.phase in ("prepare", "accept") and msg.ballot is not None and msg.ballot > state.ballot:
        state = replace(state, phase="waiting")
    return state, []


def _chosen(state, value, now, params):
    state = replace(state, phase="done")
    state = _learn(state, value, now)
    return state, _broadcast(state, params, Kind.COMMIT, now, include_self=False, value=value)


# -- learner -----------------------------------------------------------------

def _learn(state, value, now):
    if state.committed is None:
        return replace(state, committed=value, last_heartbeat=now, phase="done", amnesiac=False)
    if state.committed != value:
        return replace(state, conflict=value)
    return state


def _on_commit(state, msg, now, params, rand):
    return _learn(state, msg.value, now), []


def _on_heartbeat(state, msg, now, params, rand):
    if state.committed is None:
        # only a committed leader emits heartbeats for its epoch
        return _learn(state, msg.sender, now), []
    if msg.sender == state.committed:
        return replace(state, last_heartbeat=now), []
    return state, []


def _on_hb_tick(state, msg, now, params, rand):
    out = [_timer(state, Kind.HB_TICK, params.heartbeat, now)]
    if state.committed is None or state.amnesiac:
        return state, out
    if state.is_leader:
        return state, out + _broadcast(state, params, Kind.HEARTBEAT, now, include_self=False)
    if now - state.last_heartbeat > (params.missed_heartbeats + 0.5) * params.heartbeat:
        return _join_epoch(state, state.epoch + 1, now, params, rand)
    return state, out


# -- acceptor ----------------------------------------------------------------

def _already_decided(state, msg, now):
    if state.committed is not None and msg.sender != state.cid:
        return [_send(state, Kind.COMMIT, msg.sender, now, value=state.committed)]
    return None


def _on_propose(state, msg, now, params, rand):
    decided = _already_decided(state, msg, now)
    if decided is not None or state.amnesiac or state.committed is not None:
        return state, decided or []
    entry = (msg.ballot, msg.value, msg.sender)
    if state.promised is not None or state.vote is not None:
        highest = _max_ballot(state.promised, state.vote.k if state.vote else None)
        return state, [_send(state, Kind.REJECT, msg.sender, now, ballot=highest, value=msg.value)]
    out = []
    if not state.window_open:
        if params.n == 1:
            delay = 0.0
        elif msg.sender == state.cid:
            # remote proposals need one network hop to catch up with our own
            delay = params.latency + params.window
        else:
            delay = params.window
        out.append(_timer(state, Kind.WINDOW, delay, now))
    return replace(state, buffer=state.buffer + (entry,), window_open=True), out


def _on_window(state, msg, now, params, rand):
    if not state.window_open:
        return state, []
    buffered = state.buffer
    state = replace(state, buffer=(), window_open=False)
    if state.committed is not None:
        return state, [
            _send(state, Kind.COMMIT, s, now, value=state.committed) for _, _, s in buffered if s != state.cid
        ]
    if state.promised is not None or state.vote is not None:
        highest = _max_ballot(state.promised, state.vote.k if state.vote else None)
        return state, [_send(state, Kind.REJECT, s, now, ballot=highest, value=v) for _, v, s in buffered]
    k, v, sender = max(buffered)
    state = replace(state, vote=Vote(None, v, k))
    out = [_send(state, Kind.PROMISE, sender, now, ballot=k, value=v)]
    out += [_send(state, Kind.REJECT, s, now, ballot=k, value=ov) for kk, ov, s in buffered if kk != k]
    return state, out


def _on_prepare(state, msg, now, params, rand):
    decided = _already_decided(state, msg, now)
    if decided is not None:
        return state, decided
    if state.amnesiac or state.committed is not None:
        return state, []
    if state.promised is None or msg.ballot > state.promised:
        state = replace(state, promised=msg.ballot)
        return state, [_send(state, Kind.PROMISE, msg.sender, now, ballot=msg.ballot, vote=state.vote)]
    return state, [_send(state, Kind.REJECT, msg.sender, now, ballot=state.promised)]


def _on_accept(state, msg, now, params, rand):
    decided = _already_decided(state, msg, now)
    if decided is not None:
        return state, decided
    if state.amnesiac or state.committed is not None:
        return state, []
    if state.promised is None or msg.ballot >= state.promised:
        state = replace(state, promised=msg.ballot, vote=Vote(msg.ballot, msg.value, msg.ballot))
        return state, [_send(state, Kind.ACCEPTED, msg.sender, now, ballot=msg.ballot, value=msg.value)]
    return state, [_send(state, Kind.REJECT, msg.sender, now, ballot=state.promised)]


_HANDLERS = {
    Kind.START: _on_start,
    Kind.RETRY: _on_retry,
    Kind.PROPOSE: _on_propose,
    Kind.WINDOW: _on_window,
    Kind.PREPARE: _on_prepare,
    Kind.PROMISE: _on_promise,
    Kind.ACCEPT: _on_accept,
    Kind.ACCEPTED: _on_accepted,
    Kind.REJECT: _on_reject,
    Kind.COMMIT: _on_commit,
    Kind.HEARTBEAT: _on_heartbeat,
    Kind.HB_TICK: _on_hb_tick,
}


# -- harness-level operations --------------------------------------------------

@dataclass
class ElectionOutcome:
    algorithm: str
    leader: Optional[int]
    election_time: Optional[float]
    message_count: int
    epoch: int = 0
    status: str = "committed"  # committed | no_quorum | stalled
    commits: dict = field(default_factory=dict)


def start_election(cluster, trigger_time: float = 0.0, algorithm: str = VARIANT, **kwargs) -> ElectionOutcome:
    """Run one election on a fresh simulated main layer.

    ``cluster`` is an iterable of main-controller ids; remaining keyword
    arguments are passed to :func:`sdiotsim.simnet.run_election`.
    """
    from .simnet import run_election

    ids = sorted(cluster)
    if not ids:
        raise NoLiveControllers("no live main controllers")
    return run_election(ids, trigger_time=trigger_time, algorithm=algorithm, **kwargs)


def run_baseline_paxos(cluster, trigger_time: float = 0.0, **kwargs) -> ElectionOutcome:
    return start_election(cluster, trigger_time, algorithm=BASELINE, **kwargs)


def on_leader_failure(states: dict, failed: int, detect_time: float, params: ElectionParams,
                      rands: Optional[dict] = None) -> tuple[dict, list[Outgoing]]:
    """Reset every live controller into a new epoch and arm their start timers.

    A failure of a controller that is not the committed leader changes
    nothing.  ``states`` maps controller id to :class:`ElectionState` and
    must not contain ``failed``.
    """
    leaders = {s.committed for s in states.values() if s.committed is not None}
    if failed not in leaders:
        return dict(states), []
    epoch = max(s.epoch for s in states.values()) + 1
    new_states, out = {}, []
    for cid, st in sorted(states.items()):
        rand = (rands or {}).get(cid, 0.0)
        new_states[cid], more = _join_epoch(st, epoch, detect_time, params, rand)
        out += more
    return new_states, out
