"""Packet_in request processes emitted by switches.

Three profile families are supported: constant spacing, Poisson, and an
on/off process that is Poisson inside periodic on-windows.  Each switch
draws from its own seeded stream so adding a switch never perturbs the
others.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Union

import numpy as np

from .errors import SchemaError

NEVER = math.inf

# spawn-key domains for independent random streams
STREAM_ARRIVALS = 1
STREAM_WORK = 2


@dataclass(frozen=True)
class Constant:
    rate: float
    phase: float = 0.0

    def __post_init__(self):
        _check_rate(self.rate)


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        _check_rate(self.rate)


@dataclass(frozen=True)
class OnOff:
    on_rate: float
    on_duration: float
    off_duration: float
    phase: float = 0.0

    def __post_init__(self):
        _check_rate(self.on_rate)
        if not (self.on_duration > 0 and self.off_duration > 0):
            raise ValueError("on/off durations must be positive")

    @property
    def cycle(self) -> float:
        return self.on_duration + self.off_duration

    def _on_measure(self, x):
        # on-time accumulated over [phase, phase + x], extended periodically
        cycles = np.floor(x / self.cycle)
        return cycles * self.on_duration + np.minimum(x - cycles * self.cycle, self.on_duration)

    def on_time(self, t):
        """Total on-window time inside ``[0, t]``."""
        return self._on_measure(np.asarray(t, dtype=float) - self.phase) - self._on_measure(-self.phase)

    def wall_time(self, u):
        """Inverse of :meth:`on_time`: wall-clock instant after ``u`` seconds of on-time."""
        g = np.asarray(u, dtype=float) + self._on_measure(-self.phase)
        cycles = np.floor(g / self.on_duration)
        return cycles * self.cycle + (g - cycles * self.on_duration) + self.phase


Profile = Union[Constant, Poisson, OnOff]


def _check_rate(rate):
    if not (math.isfinite(rate) and rate >= 0):
        raise ValueError(f"rate must be finite and non-negative, got {rate}")


def rate_at(profile: Profile, t: float) -> float:
    if isinstance(profile, (Constant, Poisson)):
        return float(profile.rate)
    x = (t - profile.phase) % profile.cycle
    return float(profile.on_rate) if x < profile.on_duration else 0.0


def mean_rate(profile: Profile) -> float:
    if isinstance(profile, OnOff):
        return profile.on_rate * profile.on_duration / profile.cycle
    return float(profile.rate)


def expected_count(profile: Profile, t0: float, t1: float) -> float:
    """Exact integral of the rate function over ``[t0, t1]``."""
    if t1 <= t0:
        return 0.0
    if isinstance(profile, OnOff):
        return float(profile.on_rate * (profile.on_time(t1) - profile.on_time(t0)))
    return float(profile.rate) * (t1 - t0)


def scaled(profile: Profile, k: float) -> Profile:
    if isinstance(profile, OnOff):
        return replace(profile, on_rate=profile.on_rate * k)
    return replace(profile, rate=profile.rate * k)


def profile_from_dict(spec: Mapping, path: str = "traffic") -> Profile:
    spec = dict(spec)
    kind = spec.pop("kind", "poisson")
    spec.pop("switch", None)
    try:
        if kind == "constant":
            return Constant(**spec)
        if kind == "poisson":
            return Poisson(**spec)
        if kind == "onoff":
            return OnOff(**spec)
    except TypeError as exc:
        raise SchemaError(path, f"bad fields for {kind} profile ({exc})") from None
    except ValueError as exc:
        raise SchemaError(path, str(exc)) from None
    raise SchemaError(f"{path}.kind", f"unknown profile kind {kind!r}")


def profile_to_dict(profile: Profile) -> dict:
    kind = {Constant: "constant", Poisson: "poisson", OnOff: "onoff"}[type(profile)]
    out = {"kind": kind}
    out.update({k: float(v) for k, v in profile.__dict__.items()})
    return out


@dataclass(frozen=True)
class TrafficProfile:
    """Per-switch emission profiles; ``f_ij`` is the rate of switch ``j``."""

    profiles: tuple

    def rate(self, i: int, j: int, t: float) -> float:
        return rate_at(self.profiles[j], t)

    def __len__(self):
        return len(self.profiles)

    def scaled(self, k: float) -> "TrafficProfile":
        return TrafficProfile(tuple(scaled(p, k) for p in self.profiles))

    def mean_rates(self) -> np.ndarray:
        return np.array([mean_rate(p) for p in self.profiles])


def stream_rng(seed, domain: int, index: int) -> np.random.Generator:
    """Independent generator for ``(domain, index)`` under a base seed."""
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (domain, index))
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(domain, index))
    return np.random.default_rng(ss)


@dataclass(frozen=True)
class GeneratorState:
    profile: Profile
    rng_state: dict

    @classmethod
    def create(cls, profile: Profile, seed, index: int = 0) -> "GeneratorState":
        return cls(profile, stream_rng(seed, STREAM_ARRIVALS, index).bit_generator.state)


def next_arrival(state: GeneratorState, now: float) -> tuple[float, GeneratorState]:
    """Next emission after ``now``; returns :data:`NEVER` for a silent profile."""
    profile = state.profile
    if isinstance(profile, Constant):
        if profile.rate == 0:
            return NEVER, state
        return now + 1.0 / profile.rate, state
    rate = profile.rate if isinstance(profile, Poisson) else profile.on_rate
    if rate == 0:
        return NEVER, state
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = state.rng_state
    gap = rng.standard_exponential() / rate
    new_state = GeneratorState(profile, rng.bit_generator.state)
    if isinstance(profile, Poisson):
        return now + gap, new_state
    return float(profile.wall_time(profile.on_time(now) + gap)), new_state


class ArrivalStream:
    """Vectorised emission times for one switch, consumed in time order.

    ``take(t_end)`` returns all not-yet-returned emissions strictly before
    ``t_end``.  The sequence matches iterating :func:`next_arrival` from
    ``t = 0`` (up to rounding) and does not depend on how the horizon is
    sliced.
    """

    _CHUNK = 256

    def __init__(self, profile: Profile, seed, index: int):
        self.profile = profile
        self._rng = stream_rng(seed, STREAM_ARRIVALS, index)
        self._k = 1  # constant-rate grid index
        self._clock = 0.0  # Poisson: absolute time; on/off: on-time coordinate
        self._pending = np.empty(0)

    def _rate(self):
        p = self.profile
        return p.on_rate if isinstance(p, OnOff) else p.rate

    def take(self, t_end: float) -> np.ndarray:
        p = self.profile
        if self._rate() == 0:
            return np.empty(0)
        if isinstance(p, Constant):
            hi = math.ceil((t_end - p.phase) * p.rate)  # first index not taken
            if hi <= self._k:
                return np.empty(0)
            ks = np.arange(self._k, hi, dtype=float)
            times = p.phase + ks / p.rate
            keep = times < t_end
            times = times[keep]
            self._k += len(times)
            return times
        limit = t_end if isinstance(p, Poisson) else float(p.on_time(t_end))
        rate = self._rate()
        parts = []
        pending = self._pending
        while True:
            if len(pending) == 0:
                need = max(self._CHUNK, int(rate * max(limit - self._clock, 0.0) * 1.1) + 16)
                gaps = self._rng.standard_exponential(need) / rate
                pending = np.cumsum(np.concatenate(([self._clock], gaps)))[1:]
                self._clock = float(pending[-1])
            cut = int(np.searchsorted(pending, limit, side="left"))
            parts.append(pending[:cut])
            pending = pending[cut:]
            if len(pending):
                break
        self._pending = pending
        out = np.concatenate(parts) if parts else np.empty(0)
        if isinstance(p, OnOff):
            out = p.wall_time(out)
        return out
