"""Experiment driver: replications, paired comparisons and CSV output."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .errors import EmptySeries, InvariantViolation
from .metrics import CSV_COLUMNS, ls_slope, std_dev, write_csv
from .scenario import ScenarioConfig, output_directory
from .simnet import Engine, EngineConfig, EventTrace, run_election

log = logging.getLogger(__name__)

AXES = ("election_algorithm", "balancer_on_off", "rate_sweep")
SUMMARY_COLUMNS = ("scenario_id", "seed", "algorithm", "metric", "value")
COMPARE_COLUMNS = ("scenario_id", "seed", "axis", "arm", "x", "metric", "value")


@dataclass
class Replication:
    scenario: str
    seed: int
    algorithm: str
    balancer: bool
    scale: float = 1.0
    summary: dict = field(default_factory=dict)
    response_windows: list = field(default_factory=list)  # (time, mean response)
    utilization: dict = field(default_factory=dict)  # controller -> (times, values)
    elections: list = field(default_factory=list)
    migrations: list = field(default_factory=list)
    trace: Optional[EventTrace] = None


def replication_seed(seed: int, replication: int, replications: int) -> int:
    return seed * replications + replication


def build_engine(cfg: ScenarioConfig, seed: int, algorithm: Optional[str] = None,
                 balancer: Optional[bool] = None, scale: float = 1.0, record_messages: bool = True) -> Engine:
    e = cfg.election
    ec = EngineConfig(ctrl_to_ctrl_latency=e.latency, loss_probability=e.loss_probability, seed=seed,
                      horizon=cfg.run.horizon)
    topo = cfg.build_topology()
    eng = Engine(
        ec,
        topology=topo,
        traffic=cfg.traffic_profile(scale),
        assignment=cfg.initial_assignment(topo),
        t_s=cfg.constants.t_s,
        t_d=cfg.constants.t_d,
        balancer=cfg.balancer_params(balancer),
        election=cfg.election_params(algorithm),
        record_messages=record_messages,
    )
    for f in cfg.schedule["failures"]:
        eng.inject_failure(f["controller"], f["at"])
    for r in cfg.schedule["recoveries"]:
        eng.inject_recovery(r["controller"], r["at"])
    if e.trigger_time <= cfg.run.horizon:
        eng.main.start(e.trigger_time)
    return eng


def run_replication(cfg: ScenarioConfig, seed: int, algorithm: Optional[str] = None,
                    balancer: Optional[bool] = None, scale: float = 1.0, keep_trace: bool = False,
                    record_messages: bool = True) -> Replication:
    alg = algorithm or cfg.algorithms[0]
    on = cfg.balancer.enabled if balancer is None else balancer
    rep = Replication(cfg.name, seed, alg, on, scale)
    if cfg.run.horizon <= 0:
        rep.summary = {"generated": 0, "served": 0, "dropped": 0, "queued": 0, "warning": "zero horizon"}
        return rep
    eng = build_engine(cfg, seed, alg, on, scale, record_messages=record_messages or keep_trace)
    trace = eng.run_until(cfg.run.horizon)
    if eng.main.violations:
        raise InvariantViolation(f"{cfg.name} seed {seed}: " + "; ".join(eng.main.violations))
    warm = min(cfg.run.warmup, cfg.run.horizon)
    window = cfg.run.utilization_window
    resp = metrics.response_times(trace, warmup=warm)
    util = metrics.utilization_series(trace, window, eng.base.topology.n, t0=warm)
    s = dict(trace.summary)
    s["response_mean"] = float(resp.values.mean()) if len(resp) else float("nan")
    s["response_std"] = std_dev(resp) if len(resp) else float("nan")
    try:
        us = metrics.utilization_summary(util, window)
        s["util_dispersion"] = us.dispersion
        for c, mu in enumerate(us.per_controller_mean):
            s[f"util_mean_c{c}"] = float(mu)
    except EmptySeries:
        s["util_dispersion"] = float("nan")
    rep.summary = s
    rep.response_windows = _windowed_mean(resp, warm, window, cfg.run.horizon)
    rep.utilization = {c: (ser.times, ser.values) for c, ser in util.items()}
    rep.elections = [r.detail for r in trace.records if r.kind == "ElectionComplete"]
    rep.migrations = list(eng.base.plans)
    if keep_trace:
        rep.trace = trace
    return rep


def _windowed_mean(series, t0, window, horizon):
    out = []
    if not len(series):
        return out
    k = np.floor((series.times - t0) / window).astype(int)
    n_windows = int(np.floor((horizon - t0) / window + 1e-9))
    for w in range(n_windows):
        vals = series.values[k == w]
        if len(vals):
            out.append((t0 + (w + 1) * window, float(vals.mean())))
    return out


# -- run ------------------------------------------------------------------------

@dataclass
class RunReport:
    scenario: str
    replications: list
    aggregate: dict
    out_dir: Optional[Path] = None
    files: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def text(self) -> str:
        lines = [f"scenario {self.scenario}: {len(self.replications)} replication(s)"]
        for w in self.warnings:
            lines.append(f"warning: {w}")
        for alg, stats in sorted(self.aggregate.items()):
            lines.append(f"[{alg}]")
            for metric, (mean, sd) in sorted(stats.items()):
                lines.append(f"  {metric:<22} mean={mean:.6g} std={sd:.6g}")
        return "\n".join(lines)


def _job(args):
    cfg, seed, alg, keep = args
    return run_replication(cfg, seed, alg, keep_trace=keep)


def _map(jobs, workers):
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


def run_scenario(cfg: ScenarioConfig, seeds: Optional[list] = None, out_dir=None, dump_trace: Optional[bool] = None,
                 workers: int = 1, write: bool = True) -> RunReport:
    """Run every seed (times replications, times algorithm) and write the metric CSVs."""
    seeds = cfg.seeds if seeds is None else list(seeds)
    dump = cfg.output.dump_trace if dump_trace is None else dump_trace
    reps_per_seed = cfg.run.replications
    warnings = list(cfg.warnings)
    if cfg.run.horizon <= 0:
        warnings.append("horizon is 0: nothing simulated, metrics are empty")
    jobs = []
    for seed in seeds:
        for r in range(reps_per_seed):
            for alg in cfg.algorithms:
                jobs.append((cfg, replication_seed(seed, r, reps_per_seed), alg, dump))
    reps = _map(jobs, workers)
    report = RunReport(cfg.name, reps, aggregate(reps), warnings=warnings)
    if write:
        out = output_directory(cfg, out_dir) / cfg.name
        report.out_dir = out
        report.files = write_run_outputs(report, out, dump)
    return report


def aggregate(reps) -> dict:
    """Mean and population standard deviation of every numeric summary metric, per algorithm."""
    by_alg: dict[str, dict[str, list]] = {}
    for rep in reps:
        bucket = by_alg.setdefault(rep.algorithm, {})
        for k, v in rep.summary.items():
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                bucket.setdefault(k, []).append(float(v))
        if rep.elections:
            bucket.setdefault("election_time", []).append(float(rep.elections[0]["election_time"]))
    out = {}
    for alg, stats in by_alg.items():
        out[alg] = {}
        for k, vals in stats.items():
            vals = [v for v in vals if np.isfinite(v)]
            if vals:
                out[alg][k] = (float(np.mean(vals)), std_dev(vals))
    return out


def _rep_rows(rep):
    sid, seed, alg = rep.scenario, rep.seed, rep.algorithm
    response = [(sid, seed, alg, "", t, v) for t, v in rep.response_windows]
    util = [
        (sid, seed, alg, c, float(t), float(v))
        for c, (ts, vs) in sorted(rep.utilization.items())
        for t, v in zip(ts, vs)
    ]
    elections = [(sid, seed, alg, e["leader"], float(e["trigger"]), float(e["election_time"])) for e in rep.elections]
    summary = [(sid, seed, alg, k, v) for k, v in rep.summary.items() if not isinstance(v, (list, dict))]
    migrations = [
        (sid, seed, alg, m["to"], float(m["time"]), float(m["rate"])) for m in rep.migrations
    ]
    return {"response_time": response, "utilization": util, "election": elections, "migration": migrations,
            "summary": summary}


def write_run_outputs(report: RunReport, out: Path, dump_trace: bool) -> list:
    out.mkdir(parents=True, exist_ok=True)
    merged: dict[str, list] = {}
    files = []
    for rep in report.replications:
        rows = _rep_rows(rep)
        rep_dir = out / "replications" / f"seed_{rep.seed}_{rep.algorithm}"
        rep_dir.mkdir(parents=True, exist_ok=True)
        for name, rs in rows.items():
            cols = SUMMARY_COLUMNS if name == "summary" else CSV_COLUMNS
            write_csv(rep_dir / f"{name}.csv", rs, cols)
            merged.setdefault(name, []).extend(rs)
        if dump_trace and rep.trace is not None:
            rep.trace.write(rep_dir / "trace.tsv", packets=True)
    for name, rs in merged.items():
        cols = SUMMARY_COLUMNS if name == "summary" else CSV_COLUMNS
        path = out / f"{name}.csv"
        write_csv(path, rs, cols)
        files.append(path)
    agg_rows = [
        (report.scenario, "", alg, f"{metric}_{stat}", val)
        for alg, stats in sorted(report.aggregate.items())
        for metric, pair in sorted(stats.items())
        for stat, val in zip(("mean", "std"), pair)
    ]
    path = out / "aggregate.csv"
    write_csv(path, agg_rows, SUMMARY_COLUMNS)
    files.append(path)
    with open(out / "report.json", "w") as fh:
        json.dump({"scenario": report.scenario, "warnings": report.warnings,
                   "aggregate": {a: {k: list(v) for k, v in s.items()} for a, s in sorted(report.aggregate.items())}},
                  fh, indent=2, sort_keys=True)
    files.append(out / "report.json")
    return files


# -- compare ----------------------------------------------------------------------

@dataclass
class ComparisonReport:
    scenario: str
    axis: str
    rows: list
    summary: dict
    out_dir: Optional[Path] = None

    def text(self) -> str:
        lines = [f"scenario {self.scenario}: comparison along {self.axis}"]
        for k, v in self.summary.items():
            lines.append(f"  {k:<30} {v:.6g}" if isinstance(v, float) else f"  {k:<30} {v}")
        return "\n".join(lines)


def compare(cfg: ScenarioConfig, axis: str, seeds: Optional[list] = None, out_dir=None,
            write: bool = True) -> ComparisonReport:
    """Matched-seed comparison along ``axis``; both arms share every random stream."""
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}; expected one of {', '.join(AXES)}")
    seeds = cfg.seeds if seeds is None else list(seeds)
    if axis == "election_algorithm":
        rows, summary = _compare_elections(cfg, seeds)
    elif axis == "balancer_on_off":
        rows, summary = _compare_balancer(cfg, seeds, [1.0])
    else:
        rows, summary = _compare_balancer(cfg, seeds, [float(r) for r in cfg.sweep.rates])
    report = ComparisonReport(cfg.name, axis, rows, summary)
    if write:
        out = output_directory(cfg, out_dir) / cfg.name
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / f"compare_{axis}.csv", rows, COMPARE_COLUMNS)
        with open(out / f"compare_{axis}.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        report.out_dir = out
    return report


def _compare_elections(cfg, seeds):
    e = cfg.election
    n = len(cfg.topology["main_controllers"])
    kw = dict(latency=e.latency, loss=e.loss_probability, jitter=e.jitter, window=e.window,
              retry_timeout=e.retry_timeout, max_retries=e.max_retries)
    rows = []
    times = {"variant": [], "baseline": []}
    msgs = {"variant": [], "baseline": []}
    same_leader = 0
    for seed in seeds:
        leaders = {}
        for alg in ("variant", "baseline"):
            o = run_election(range(n), e.trigger_time, alg, seed=seed, **kw)
            u = run_election(range(n), e.trigger_time, alg, seed=seed, proposers=[n - 1], **kw)
            leaders[alg] = o.leader
            if o.election_time is not None:
                times[alg].append(o.election_time)
                rows.append((cfg.name, seed, "election_algorithm", alg, "", "election_time", o.election_time))
            rows.append((cfg.name, seed, "election_algorithm", alg, "", "messages", float(o.message_count)))
            rows.append((cfg.name, seed, "election_algorithm", alg, "", "uncontested_messages",
                         float(u.message_count)))
            msgs[alg].append(u.message_count)
        same_leader += leaders["variant"] == leaders["baseline"]
    summary = {
        "variant_mean_election_time": float(np.mean(times["variant"])) if times["variant"] else float("nan"),
        "baseline_mean_election_time": float(np.mean(times["baseline"])) if times["baseline"] else float("nan"),
        "variant_uncontested_messages": float(np.mean(msgs["variant"])),
        "baseline_uncontested_messages": float(np.mean(msgs["baseline"])),
        "same_leader_fraction": same_leader / max(1, len(seeds)),
        "seeds": len(seeds),
    }
    return rows, summary


def _compare_balancer(cfg, seeds, rates):
    rows = []
    curves = {"on": [], "off": []}
    disp = {"on": [], "off": []}
    for rate in rates:
        per_arm = {"on": [], "off": []}
        for seed in seeds:
            for arm in ("off", "on"):
                rep = run_replication(cfg, seed, cfg.algorithms[0], balancer=arm == "on", scale=rate,
                                      record_messages=False)
                s = rep.summary
                per_arm[arm].append(s["response_std"])
                disp[arm].append(s["util_dispersion"])
                for metric in ("response_std", "response_mean", "util_dispersion"):
                    rows.append((cfg.name, seed, "balancer", f"balancer_{arm}", rate, metric, float(s[metric])))
        for arm in ("on", "off"):
            curves[arm].append(float(np.mean(per_arm[arm])))
    summary = {
        "rates": rates,
        "response_std_on": curves["on"],
        "response_std_off": curves["off"],
        "slope_on": ls_slope(rates, curves["on"]),
        "slope_off": ls_slope(rates, curves["off"]),
        "util_dispersion_on": float(np.mean(disp["on"])),
        "util_dispersion_off": float(np.mean(disp["off"])),
        "seeds": len(seeds),
    }
    return rows, summary
