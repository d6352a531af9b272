"""Failure detection: heartbeat monitors, oracle detection, and the
closed-form lower bound on detection accuracy.

A heartbeat detector sends beacons to overlay successors every
``hb_period`` and suspects a predecessor after ``timeout`` of silence.
Completeness is automatic (a crashed server stops beating); accuracy
is probabilistic and depends on the delay distribution.  When a
suspicion turns out false (a beacon arrives from a suspected peer)
the timeout is scaled up by ``escalation_factor``, which makes the
detector eventually accurate.

``accuracy_probability`` evaluates the closed-form lower bound on the
probability that no live server is falsely suspected anywhere in the
system: a monitor missing every one of the k = floor(timeout/period)
beacons inside one timeout window has probability at most
``prod_k Pr[T > timeout - k*period]``, and there are n*d monitored
links.  Beacon losses are treated as independent; that assumption is
inherited from the bound, not validated here.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from enum import Enum


class FdError(ValueError):
    pass


class FdMode(Enum):
    ORACLE = "oracle"
    HEARTBEAT = "heartbeat"


@dataclass
class FdConfig:
    hb_period: float
    timeout: float
    mode: FdMode = FdMode.HEARTBEAT
    escalation_factor: float = 2.0

    def __post_init__(self):
        if self.hb_period <= 0:
            raise FdError("heartbeat period must be positive")
        if self.mode is FdMode.HEARTBEAT and self.timeout < self.hb_period:
            raise FdError("timeout must be at least the heartbeat period")
        if self.escalation_factor < 1.0:
            raise FdError("escalation factor must be >= 1")


# -- delay models ------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise FdError("delays must be non-negative")

    def sampler(self, seed: int):
        v = self.value
        while True:
            yield v

    def tail(self, t: float) -> float:
        return 1.0 if t < self.value else 0.0


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise FdError("need 0 <= lo <= hi")

    def sampler(self, seed: int):
        rng = random.Random(seed)
        while True:
            yield rng.uniform(self.lo, self.hi)

    def tail(self, t: float) -> float:
        if t < self.lo:
            return 1.0
        if t >= self.hi:
            return 0.0
        return (self.hi - t) / (self.hi - self.lo)


@dataclass(frozen=True)
class Exponential:
    mean: float

    def __post_init__(self):
        if self.mean <= 0:
            raise FdError("mean delay must be positive")

    def sampler(self, seed: int):
        rng = random.Random(seed)
        while True:
            yield rng.expovariate(1.0 / self.mean)

    def tail(self, t: float) -> float:
        if t <= 0:
            return 1.0
        return math.exp(-t / self.mean)


DelayModel = Constant | Uniform | Exponential


def parse_delay(spec: str) -> DelayModel:
    """Parse "const:50us", "uniform:10us:90us" or "exp:10ms"."""
    from allconcur.units import parse_duration

    kind, _, rest = spec.partition(":")
    parts = rest.split(":") if rest else []
    if kind in ("const", "constant") and len(parts) == 1:
        return Constant(parse_duration(parts[0]))
    if kind == "uniform" and len(parts) == 2:
        return Uniform(parse_duration(parts[0]), parse_duration(parts[1]))
    if kind == "exp" and len(parts) == 1:
        return Exponential(parse_duration(parts[0]))
    raise FdError(f"bad delay spec {spec!r}")


# -- monitoring --------------------------------------------------------------


def monitor_step(now: float, last_heard: dict[int, float], cfg: FdConfig):
    """Predecessors silent for longer than the configured timeout."""
    return sorted(p for p, t in last_heard.items() if now - t > cfg.timeout)


@dataclass
class HeartbeatMonitor:
    """Per-server heartbeat bookkeeping for one protocol participant.

    Tracks the last beacon per predecessor, reports fresh suspicions,
    and escalates the timeout when a suspicion is contradicted by a
    later beacon (the eventually-accurate regime).
    """

    cfg: FdConfig
    predecessors: tuple
    start: float = 0.0
    timeout: float = field(init=False)
    last_heard: dict = field(init=False)
    suspected: set = field(init=False, default_factory=set)
    false_suspicions: int = field(init=False, default=0)

    def __post_init__(self):
        self.timeout = self.cfg.timeout
        self.last_heard = {p: self.start for p in self.predecessors}

    def beacon(self, sender: int, now: float):
        if sender not in self.last_heard:
            return
        self.last_heard[sender] = now
        if sender in self.suspected:
            # falsely suspected a live peer: back off before re-suspecting
            self.suspected.discard(sender)
            self.false_suspicions += 1
            self.timeout *= self.cfg.escalation_factor

    def check(self, now: float):
        """Return predecessors that newly exceeded the timeout."""
        fresh = []
        for p, t in self.last_heard.items():
            if p not in self.suspected and now - t > self.timeout:
                self.suspected.add(p)
                fresh.append(p)
        return sorted(fresh)

    def forget(self, server: int):
        self.last_heard.pop(server, None)
        self.suspected.discard(server)


# -- accuracy bound ----------------------------------------------------------


def accuracy_probability(cfg: FdConfig, n: int, d: int, tail) -> float:
    """Lower bound on the probability that no live server is suspected.

    ``tail(t)`` must give Pr[delay > t].  With no beacon fitting inside
    the timeout window (timeout < period) the bound is vacuous (0).
    """
    if cfg.hb_period <= 0 or cfg.timeout <= 0:
        raise FdError("periods must be positive")
    beats = int(cfg.timeout / cfg.hb_period)
    miss_all = 1.0
    for k in range(1, beats + 1):
        p = tail(cfg.timeout - k * cfg.hb_period)
        if not 0.0 <= p <= 1.0:
            raise FdError(f"tail function returned {p} outside [0, 1]")
        miss_all *= p
    return (1.0 - miss_all) ** (n * d)
