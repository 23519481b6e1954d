"""Evaluation indicators computed from engine traces.

The utilization figures are a proxy: the busy fraction of each simulated
server, not a measured CPU load.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import EmptySeries, NoElectionInTrace
from .kernels import window_busy
from .simnet import DROPPED, SERVED, EventTrace, PacketTable

SECONDS = "seconds"
DIMENSIONLESS = "dimensionless"

CSV_COLUMNS = ("scenario_id", "seed", "algorithm", "controller_id", "time", "value")


@dataclass(frozen=True)
class MetricSeries:
    times: np.ndarray
    values: np.ndarray
    unit: str = SECONDS
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-D arrays of equal length")
        if len(t) > 1 and np.any(np.diff(t) < 0):
            raise ValueError("sample times must be non-decreasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("sample values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def mean(self) -> float:
        if not len(self):
            raise EmptySeries(f"series {self.label!r} is empty")
        return float(np.mean(self.values))

    def after(self, t0: float) -> "MetricSeries":
        keep = self.times >= t0
        return MetricSeries(self.times[keep], self.values[keep], self.unit, self.label)


def _table(trace) -> PacketTable:
    return trace.packets if isinstance(trace, EventTrace) else trace


def response_times(trace, warmup: float = 0.0) -> MetricSeries:
    """Completion minus emission for every served Packet_in emitted at or after ``warmup``."""
    p = _table(trace)
    keep = p.served_mask & (p.emit >= warmup)
    comp = p.completion[keep]
    resp = comp - p.emit[keep]
    order = np.argsort(comp, kind="stable")
    return MetricSeries(comp[order], resp[order], SECONDS, "response_time")


def std_dev(series) -> float:
    """Population standard deviation (divisor ``n``)."""
    values = series.values if isinstance(series, MetricSeries) else np.asarray(series, dtype=float)
    if len(values) == 0:
        raise EmptySeries("standard deviation of an empty series")
    return float(np.sqrt(np.mean((values - values.mean()) ** 2)))


def busy_intervals(trace, controller: int):
    """Sorted service intervals of ``controller``, clipped at the horizon or a crash."""
    p = _table(trace)
    mine = p.controller == controller
    served = mine & (p.status == SERVED) & (p.start < p.horizon)
    cut = mine & (p.status == DROPPED) & np.isfinite(p.start) & (p.start < p.drop_time)
    starts = np.concatenate((p.start[served], p.start[cut]))
    ends = np.concatenate((np.minimum(p.completion[served], p.horizon), p.drop_time[cut]))
    order = np.argsort(starts, kind="stable")
    return starts[order], ends[order]


def utilization_series(trace, window: float, n_controllers: Optional[int] = None,
                       t0: float = 0.0) -> dict[int, MetricSeries]:
    """Busy fraction per controller per window of ``window`` seconds starting at ``t0``."""
    if not window > 0:
        raise ValueError("window must be positive")
    p = _table(trace)
    if n_controllers is None:
        n_controllers = int(p.controller.max()) + 1 if len(p) else 0
    n_windows = int(math.floor((p.horizon - t0) / window + 1e-9))
    ends = t0 + window * np.arange(1, n_windows + 1)
    out = {}
    for c in range(n_controllers):
        s, e = busy_intervals(p, c)
        busy = window_busy(s, e, t0, window, n_windows) if n_windows > 0 else np.empty(0)
        out[c] = MetricSeries(ends, np.clip(busy / window, 0.0, 1.0), DIMENSIONLESS, f"utilization_c{c}")
    return out


@dataclass
class UtilizationSummary:
    per_controller_mean: np.ndarray
    dispersion: float  # mean over windows of the cross-controller population std
    window: float

    def as_dict(self):
        return {"mean": [float(x) for x in self.per_controller_mean], "dispersion": self.dispersion}


def utilization_summary(series: dict[int, MetricSeries], window: float) -> UtilizationSummary:
    if not series or not len(next(iter(series.values()))):
        raise EmptySeries("no utilization windows")
    mat = np.vstack([series[c].values for c in sorted(series)])
    per_window_std = mat.std(axis=0)  # population std across controllers
    return UtilizationSummary(mat.mean(axis=1), float(per_window_std.mean()), window)


@dataclass
class ElectionReport:
    leader: Optional[int]
    election_time: float
    message_count: int
    elections: list = field(default_factory=list)
    per_algorithm: dict = field(default_factory=dict)


def election_report(trace) -> ElectionReport:
    """Completed elections in ``trace`` (trigger to last live commit), grouped by algorithm."""
    done = [r.detail for r in trace.records if r.kind == "ElectionComplete"]
    if not done:
        raise NoElectionInTrace("trace contains no completed election")
    groups: dict[str, list] = {}
    for e in done:
        groups.setdefault(e["algorithm"], []).append(e)
    per_alg = {
        alg: {
            "count": len(es),
            "mean_election_time": float(np.mean([e["election_time"] for e in es])),
            "mean_messages": float(np.mean([e["messages"] for e in es])),
        }
        for alg, es in groups.items()
    }
    first = done[0]
    return ElectionReport(first["leader"], first["election_time"], first["messages"], done, per_alg)


def ls_slope(x, y) -> float:
    """Least-squares slope of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2:
        return 0.0
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


# -- CSV -----------------------------------------------------------------------

def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, rows: Iterable, columns=CSV_COLUMNS):
    """Write rows (tuples in ``columns`` order); floats use their shortest round-trip repr."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
