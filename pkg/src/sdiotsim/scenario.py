"""Scenario files: YAML parsing, schema validation and defaults.

Every section is optional except ``topology``.  Unknown keys are errors so
that a typo never silently falls back to a default.  See the README for
the full key table.
"""

from __future__ import annotations

import copy
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .balancer import BalancerParams
from .election import ALGORITHMS, ElectionParams
from .errors import ParseError, SchemaError, UnknownKey
from .topology import AssignmentMatrix, ControllerId, Topology, build_topology, initial_assignment
from .traffic import TrafficProfile, profile_from_dict, scaled

SCENARIO_DIR = Path(__file__).with_name("scenarios")
BUNDLED = ("sdiot_sectionV", "toy_2x3", "failover")


@dataclass
class Constants:
    t_s: float = 0.001
    t_d: float = 0.001


@dataclass
class BalancerSection:
    enabled: bool = False
    p_th: float = 1000.0
    idle_fraction: float = 0.5
    evaluation_period: float = 0.1
    migration: str = "excess"
    load_window: float = 1.0
    objective_guard: bool = True


@dataclass
class ElectionSection:
    algorithm: str = "variant"  # variant | baseline | both
    latency: float = 0.02
    jitter: float = 0.001
    window: float = 0.002
    heartbeat: float = 0.05
    missed_heartbeats: int = 3
    loss_probability: float = 0.0
    retry_timeout: float = 0.2
    max_retries: int = 50
    trigger_time: float = 0.0


@dataclass
class RunSection:
    horizon: float = 10.0
    seeds: Any = 10  # count (seeds 0..k-1) or explicit list
    replications: int = 1
    warmup: float = 1.0
    utilization_window: float = 1.0


@dataclass
class SweepSection:
    rates: list = field(default_factory=lambda: [1.0])


@dataclass
class OutputSection:
    directory: str = "out"
    dump_trace: bool = False


_TOPOLOGY_KEYS = {"main_controllers", "base_controllers", "switches", "links", "main_base_delay", "layout"}
_LAYOUT_KEYS = {"regions", "switches_per_region", "capacity", "local_delay", "ring_delays"}
_TRAFFIC_KEYS = {"default", "switches", "scale"}
_SCHEDULE_KEYS = {"failures", "recoveries"}
_TOP_KEYS = {"name", "description", "topology", "traffic", "constants", "balancer", "election",
             "schedule", "run", "sweep", "output"}


@dataclass
class ScenarioConfig:
    name: str
    topology: dict
    traffic: dict
    constants: Constants = field(default_factory=Constants)
    balancer: BalancerSection = field(default_factory=BalancerSection)
    election: ElectionSection = field(default_factory=ElectionSection)
    schedule: dict = field(default_factory=lambda: {"failures": [], "recoveries": []})
    run: RunSection = field(default_factory=RunSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)
    description: str = ""
    warnings: list = field(default_factory=list)

    # -- derived objects ------------------------------------------------------

    def build_topology(self) -> Topology:
        return build_topology(self.topology)

    def initial_assignment(self, topology: Optional[Topology] = None) -> AssignmentMatrix:
        return initial_assignment(self.topology, topology or self.build_topology())

    def traffic_profile(self, scale: float = 1.0) -> TrafficProfile:
        m = self.n_switches
        default = self.traffic.get("default", {"kind": "poisson", "rate": 100.0})
        per = {int(s["switch"]): s for s in self.traffic.get("switches", [])}
        k = float(self.traffic.get("scale", 1.0)) * scale
        profiles = []
        for j in range(m):
            p = profile_from_dict(per.get(j, default), f"traffic.switches[{j}]")
            profiles.append(scaled(p, k))
        return TrafficProfile(tuple(profiles))

    def balancer_params(self, enabled: Optional[bool] = None) -> Optional[BalancerParams]:
        b = self.balancer
        return BalancerParams(
            p_th=b.p_th, idle_fraction=b.idle_fraction, evaluation_period=b.evaluation_period,
            enabled=b.enabled if enabled is None else enabled, migration=b.migration,
            load_window=b.load_window, objective_guard=b.objective_guard,
        )

    def election_params(self, algorithm: Optional[str] = None) -> ElectionParams:
        e = self.election
        alg = algorithm or (e.algorithm if e.algorithm != "both" else "variant")
        return ElectionParams(
            algorithm=alg, n=len(self.topology["main_controllers"]), latency=e.latency, jitter=e.jitter,
            window=e.window, retry_timeout=e.retry_timeout, max_retries=e.max_retries,
            heartbeat=e.heartbeat, missed_heartbeats=e.missed_heartbeats,
        )

    @property
    def algorithms(self) -> tuple:
        return ALGORITHMS if self.election.algorithm == "both" else (self.election.algorithm,)

    @property
    def n_switches(self) -> int:
        sw = self.topology["switches"]
        return sw if isinstance(sw, int) else len(sw)

    @property
    def seeds(self) -> list[int]:
        s = self.run.seeds
        return list(range(s)) if isinstance(s, int) else [int(x) for x in s]

    def with_overrides(self, **sections) -> "ScenarioConfig":
        """Copy with dataclass sections patched, e.g. ``with_overrides(balancer={"enabled": True})``."""
        new = copy.deepcopy(self)
        for name, patch in sections.items():
            sec = getattr(new, name)
            if isinstance(sec, dict):
                sec.update(patch)
            else:
                for k, v in patch.items():
                    setattr(sec, k, v)
        return new

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "topology": copy.deepcopy(self.topology),
            "traffic": copy.deepcopy(self.traffic),
            "constants": asdict(self.constants),
            "balancer": asdict(self.balancer),
            "election": asdict(self.election),
            "schedule": copy.deepcopy(self.schedule),
            "run": asdict(self.run),
            "sweep": asdict(self.sweep),
            "output": asdict(self.output),
        }


# -- parsing -----------------------------------------------------------------------

def resolve_scenario_path(ref) -> Path:
    """A path, or the name of a bundled scenario."""
    p = Path(ref)
    if p.exists():
        return p
    bundled = SCENARIO_DIR / f"{ref}.yaml"
    if bundled.exists():
        return bundled
    raise ParseError(f"scenario file not found: {ref}")


def parse_scenario(path) -> ScenarioConfig:
    p = resolve_scenario_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {p}: {exc}") from None
    return parse_scenario_text(text, default_name=p.stem)


def parse_scenario_text(text: str, default_name: str = "scenario") -> ScenarioConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ParseError(f"invalid YAML: {exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise SchemaError("<root>", "scenario must be a mapping")
    return scenario_from_dict(raw, default_name)


def _check_keys(mapping, allowed, path):
    if not isinstance(mapping, dict):
        raise SchemaError(path, "expected a mapping")
    for k in mapping:
        if k not in allowed:
            raise UnknownKey(f"{path}.{k}" if path else str(k))


def _section(cls, raw, path):
    if raw is None:
        return cls()
    allowed = {f.name for f in fields(cls)}
    _check_keys(raw, allowed, path)
    defaults = cls()
    values = {}
    for f in fields(cls):
        if f.name not in raw:
            continue
        v = raw[f.name]
        want = getattr(defaults, f.name)
        values[f.name] = _coerce(v, want, f"{path}.{f.name}")
    return cls(**values)


def _coerce(v, like, path):
    if isinstance(like, bool):
        if not isinstance(v, bool):
            raise SchemaError(path, f"expected true/false, got {v!r}")
        return v
    if path.endswith(".seeds"):
        return v  # count or list, checked in _validate
    if type(like) is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise SchemaError(path, f"expected an integer, got {v!r}")
        return v
    if isinstance(like, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(path, f"expected a number, got {v!r}")
        if not math.isfinite(float(v)):
            raise SchemaError(path, "must be finite")
        return float(v)
    if isinstance(like, str):
        if not isinstance(v, str):
            raise SchemaError(path, f"expected a string, got {v!r}")
        return v
    return v


def _expand_layout(layout, path):
    _check_keys(layout, _LAYOUT_KEYS, path)
    try:
        regions = int(layout["regions"])
        per = int(layout["switches_per_region"])
    except KeyError as exc:
        raise SchemaError(f"{path}.{exc.args[0]}", "required") from None
    capacity = layout.get("capacity", 1000.0)
    caps = capacity if isinstance(capacity, list) else [capacity] * regions
    if len(caps) != regions:
        raise SchemaError(f"{path}.capacity", "need one capacity per region")
    local = float(layout.get("local_delay", 0.001))
    ring = [float(x) for x in layout.get("ring_delays", [0.002])]
    base = [{"id": i, "capacity": float(c)} for i, c in enumerate(caps)]
    switches, links = [], []
    for r in range(regions):
        for k in range(per):
            j = r * per + k
            switches.append({"id": j, "master": r})
            links.append([f"s{j}", f"c{r}", local])
    if regions > 1:
        pairs = [(r, (r + 1) % regions) for r in range(regions if regions > 2 else 1)]
        for idx, (a, b) in enumerate(pairs):
            links.append([f"c{a}", f"c{b}", ring[idx % len(ring)]])
    return base, switches, links


def _topology_section(raw):
    path = "topology"
    if raw is None:
        raise SchemaError(path, "required section missing")
    _check_keys(raw, _TOPOLOGY_KEYS, path)
    topo = {k: copy.deepcopy(v) for k, v in raw.items() if k != "layout"}
    if "layout" in raw:
        if any(k in raw for k in ("base_controllers", "switches", "links")):
            raise SchemaError(path, "layout cannot be combined with explicit controllers, switches or links")
        topo["base_controllers"], topo["switches"], topo["links"] = _expand_layout(raw["layout"], f"{path}.layout")
    mains = topo.get("main_controllers", 3)
    if isinstance(mains, int) and not isinstance(mains, bool):
        if mains < 1:
            raise SchemaError(f"{path}.main_controllers", "need at least one main controller")
        mains = list(range(mains))
    elif not isinstance(mains, list):
        raise SchemaError(f"{path}.main_controllers", "expected a count or a list of ids")
    if sorted(mains) != list(range(len(mains))):
        raise SchemaError(f"{path}.main_controllers", "ids must be dense in [0, n)")
    topo["main_controllers"] = mains
    base = topo.get("base_controllers")
    if isinstance(base, dict):
        _check_keys(base, {"count", "capacity"}, f"{path}.base_controllers")
        base = [{"id": i, "capacity": float(base.get("capacity", 1000.0))} for i in range(int(base["count"]))]
    if not isinstance(base, list) or not base:
        raise SchemaError(f"{path}.base_controllers", "expected a non-empty list")
    for k, b in enumerate(base):
        _check_keys(b, {"id", "capacity"}, f"{path}.base_controllers[{k}]")
        if "id" not in b:
            raise SchemaError(f"{path}.base_controllers[{k}].id", "required")
        b.setdefault("capacity", 1000.0)
    topo["base_controllers"] = base
    sw = topo.get("switches")
    if sw is None:
        raise SchemaError(f"{path}.switches", "required")
    if isinstance(sw, list):
        for k, s in enumerate(sw):
            if isinstance(s, dict):
                _check_keys(s, {"id", "master", "slaves"}, f"{path}.switches[{k}]")
    topo.setdefault("links", [])
    for k, link in enumerate(topo["links"]):
        if not (isinstance(link, list) and len(link) == 3):
            raise SchemaError(f"{path}.links[{k}]", "expected [endpoint, endpoint, delay]")
    topo.setdefault("main_base_delay", 0.0)
    return topo


def _traffic_section(raw, path="traffic"):
    if raw is None:
        raw = {}
    _check_keys(raw, _TRAFFIC_KEYS, path)
    out = {"default": raw.get("default", {"kind": "poisson", "rate": 100.0}),
           "switches": list(raw.get("switches", [])), "scale": float(raw.get("scale", 1.0))}
    profile_from_dict(out["default"], f"{path}.default")
    for k, s in enumerate(out["switches"]):
        if not isinstance(s, dict) or "switch" not in s:
            raise SchemaError(f"{path}.switches[{k}]", "each override needs a 'switch' id")
        profile_from_dict(s, f"{path}.switches[{k}]")
    return out


def _schedule_section(raw, path="schedule"):
    if raw is None:
        raw = {}
    _check_keys(raw, _SCHEDULE_KEYS, path)
    out = {}
    for key in ("failures", "recoveries"):
        items = []
        for k, item in enumerate(raw.get(key, []) or []):
            _check_keys(item, {"controller", "at"}, f"{path}.{key}[{k}]")
            ref = str(item.get("controller", ""))
            if ref != "main:leader":
                ControllerId.parse(ref)
            at = item.get("at")
            if isinstance(at, bool) or not isinstance(at, (int, float)) or at < 0:
                raise SchemaError(f"{path}.{key}[{k}].at", "expected a non-negative time")
            items.append({"controller": ref, "at": float(at)})
        out[key] = items
    return out


def scenario_from_dict(raw: dict, default_name: str = "scenario") -> ScenarioConfig:
    _check_keys(raw, _TOP_KEYS, "")
    cfg = ScenarioConfig(
        name=str(raw.get("name", default_name)),
        description=str(raw.get("description", "")),
        topology=_topology_section(raw.get("topology")),
        traffic=_traffic_section(raw.get("traffic")),
        constants=_section(Constants, raw.get("constants"), "constants"),
        balancer=_section(BalancerSection, raw.get("balancer"), "balancer"),
        election=_section(ElectionSection, raw.get("election"), "election"),
        schedule=_schedule_section(raw.get("schedule")),
        run=_section(RunSection, raw.get("run"), "run"),
        sweep=_section(SweepSection, raw.get("sweep"), "sweep"),
        output=_section(OutputSection, raw.get("output"), "output"),
    )
    _validate(cfg)
    return cfg


def _validate(cfg: ScenarioConfig):
    e, b, r = cfg.election, cfg.balancer, cfg.run
    if e.algorithm not in ALGORITHMS + ("both",):
        raise SchemaError("election.algorithm", f"expected variant, baseline or both, got {e.algorithm!r}")
    if not 0 <= e.loss_probability < 1:
        raise SchemaError("election.loss_probability", "must lie in [0, 1)")
    if b.migration not in ("excess", "full"):
        raise SchemaError("balancer.migration", "expected 'excess' or 'full'")
    try:
        cfg.balancer_params()
    except ValueError as exc:
        raise SchemaError("balancer", str(exc)) from None
    if r.horizon < 0:
        raise SchemaError("run.horizon", "must be non-negative")
    if not (isinstance(r.seeds, int) and r.seeds >= 0) and not (
        isinstance(r.seeds, list) and all(isinstance(s, int) and s >= 0 for s in r.seeds)
    ):
        raise SchemaError("run.seeds", "expected a count or a list of non-negative integers")
    if r.replications < 1:
        raise SchemaError("run.replications", "must be at least 1")
    if not r.utilization_window > 0:
        raise SchemaError("run.utilization_window", "must be positive")
    if not cfg.sweep.rates or any(not isinstance(x, (int, float)) or x <= 0 for x in cfg.sweep.rates):
        raise SchemaError("sweep.rates", "expected a non-empty list of positive scale factors")
    topo = cfg.build_topology()
    cfg.initial_assignment(topo)
    if len(cfg.traffic_profile()) != topo.m:
        raise SchemaError("traffic", "profile count does not match the switch count")
    for k, s in enumerate(cfg.traffic["switches"]):
        if not 0 <= int(s["switch"]) < topo.m:
            raise SchemaError(f"traffic.switches[{k}].switch", f"unknown switch {s['switch']}")
    cfg.warnings = stability_warnings(cfg, topo)


def stability_warnings(cfg: ScenarioConfig, topo: Optional[Topology] = None) -> list[str]:
    """Controllers whose configured mean utilization reaches 1 under the initial assignment."""
    topo = topo or cfg.build_topology()
    rates = cfg.traffic_profile().mean_rates()
    lam = cfg.initial_assignment(topo).shares() @ rates
    out = []
    for i, (l, mu) in enumerate(zip(lam, topo.capacity)):
        if l >= mu:
            out.append(f"base controller {i} is configured unstable: rho = {l / mu:.3f} >= 1")
    return out


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def output_directory(cfg: ScenarioConfig, override: Optional[str] = None) -> Path:
    """CLI flag beats the ``SDIOTSIM_OUT_DIR`` environment variable, which beats the file."""
    return Path(override or os.environ.get("SDIOTSIM_OUT_DIR") or cfg.output.directory)
