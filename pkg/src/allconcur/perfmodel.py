"""Closed-form LogP and probabilistic performance models.

Latency and work estimates for one agreement round over an overlay of
degree d and diameter D, under the LogP parameters L (wire latency),
o (per-message CPU overhead) and g (inter-message gap; carried for
completeness but unused under the usual o > g assumption).  The
estimates are one-sided: simulator traces are checked against them as
bounds, never as equalities.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class LogPParams:
    L: float
    o: float
    g: float = 0.0
    n: int = 0
    d: int = 0
    D: int = 0

    def __post_init__(self):
        if min(self.L, self.o, self.g) < 0:
            raise ValueError("LogP parameters must be non-negative")


def msg_time(p: LogPParams) -> float:
    """Point-to-point message time: L + 2o."""
    return p.L + 2 * p.o


def rbcast_time(p: LogPParams, round_trip: bool = False) -> float:
    """Flooding time over D hops with send-side contention.

    The sender serialises d messages, so the effective send overhead is
    o_s = o + o*(d-1)/2; one hop costs L + o_s + o.  Empty replies flow
    back at the same rate, so the round trip simply doubles the one-way
    estimate.
    """
    if p.D < 1:
        raise ValueError("diameter must be at least 1")
    o_s = p.o + p.o * (p.d - 1) / 2
    one_way = (p.L + o_s + p.o) * p.D
    return 2 * one_way if round_trip else one_way


def work_bound(p: LogPParams) -> float:
    """Lower bound on round time due to per-server work: 2(n-1)do."""
    return 2 * (p.n - 1) * p.d * p.o


def depth_within_faultdiameter_prob(
    n: int, d: int, o: float, mttf: float, rounds: int
) -> float:
    """Probability that `rounds` consecutive rounds keep the dissemination
    depth within the fault diameter (no origin dies mid-fanout).

    Per round the chance is exp(-n*d*o/mttf) under exponential server
    lifetimes; rounds are independent.
    """
    if n <= 0 or d <= 0 or o < 0 or mttf <= 0 or rounds < 0:
        raise ValueError("all parameters must be positive (rounds may be 0)")
    return math.exp(-n * d * o / mttf) ** rounds


def message_counts(n: int, d: int, f: int) -> dict[str, int]:
    """Worst-case per-server receive counts for one round: n*d broadcast
    frames plus f*d^2 failure notifications."""
    if f < 0:
        raise ValueError("f must be non-negative")
    return {"bcast": n * d, "fail": f * d * d}


def model_table(rows) -> str:
    """CSV with one line per (n, d, D): model latency and work bound."""
    out = io.StringIO()
    out.write("n,d,D,model_latency,work_bound\n")
    for p in rows:
        out.write(
            f"{p.n},{p.d},{p.D},{rbcast_time(p, round_trip=True):.9g},"
            f"{work_bound(p):.9g}\n"
        )
    return out.getvalue()
