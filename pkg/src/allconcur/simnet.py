"""Seeded discrete-event simulation of the broadcast protocol.

Drives N state machines over reliable, delayed channels with crash and
partition injection, produces a timestamped trace, and checks the
broadcast properties (integrity, agreement, total order, validity)
plus the analytic bounds on dissemination depth and per-server message
counts.  ``explore`` exhaustively enumerates delivery interleavings
and crash points on small instances as an oracle for the safety
properties.

Virtual time is integer nanoseconds; delay samples are rounded up, so
identical seeds give bit-identical traces on any platform.  Events tie
break on (time, destination server, sequence number).  Channels are
FIFO per directed link; heartbeats travel as independent datagrams.
A crash suppresses all future sends but leaves already-sent messages
in flight; an ``after_sending`` crash cuts the fan-out of one specific
message down to a chosen subset of successors.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field

from allconcur import digraph as dg
from allconcur import fd as fdmod
from allconcur.protocol import (
    Bcast,
    Bwd,
    Config,
    Deliver,
    Fail,
    Fwd,
    Heartbeat,
    Mode,
    Send,
    Server,
    TaggedFailed,
)

NS = 1_000_000_000


def _to_ns(seconds: float) -> int:
    return max(0, math.ceil(seconds * NS))


# -- scenario ----------------------------------------------------------------


@dataclass(frozen=True)
class Crash:
    server: int
    at: int | None = None  # virtual time, ns
    # cut the fan-out of message (round, origin) down to this subset
    after_sending: tuple[int, int] | None = None
    to: frozenset = frozenset()

    def __post_init__(self):
        if (self.at is None) == (self.after_sending is None):
            raise ValueError("crash needs exactly one of at / after_sending")


@dataclass(frozen=True)
class EdgeCut:
    src: int
    dst: int
    at: int = 0


@dataclass
class SimScenario:
    digraph: dg.Digraph
    payloads: dict[int, dict[int, bytes]]  # round -> server -> payload
    rounds: int = 1
    mode: Mode = Mode.PERFECT
    delay: fdmod.DelayModel = fdmod.Constant(50e-6)
    fd: fdmod.FdConfig = field(
        default_factory=lambda: fdmod.FdConfig(
            hb_period=1e-3, timeout=10e-3, mode=fdmod.FdMode.ORACLE
        )
    )
    crashes: tuple = ()
    cuts: tuple = ()
    horizon: int = 60 * NS
    seed: int = 0
    expect_no_delivery: frozenset = frozenset()

    def validate(self):
        n = self.digraph.n
        for c in self.crashes:
            if not 0 <= c.server < n:
                raise ValueError(f"crash references unknown server {c.server}")
            if not set(c.to) <= set(self.digraph.succ[c.server]):
                raise ValueError("after_sending subset must be successors")
        for r, plan in self.payloads.items():
            if not 1 <= r <= self.rounds:
                raise ValueError(f"payload round {r} outside 1..{self.rounds}")
            for s in plan:
                if not 0 <= s < n:
                    raise ValueError(f"payload for unknown server {s}")


# -- trace -------------------------------------------------------------------


@dataclass
class Trace:
    meta: dict
    records: list = field(default_factory=list)
    # server -> round -> ordered batch of (origin, payload)
    deliveries: dict = field(default_factory=dict)
    delivery_times: dict = field(default_factory=dict)
    tagged: dict = field(default_factory=dict)
    broadcasts: set = field(default_factory=set)  # (round, origin)
    crashes: dict = field(default_factory=dict)  # server -> time
    # server -> round -> counts
    bcast_recv: dict = field(default_factory=dict)
    foreign_bcast_recv: dict = field(default_factory=dict)
    fail_recv: dict = field(default_factory=dict)
    depth_hops: dict = field(default_factory=dict)  # server -> max hops
    digraph: dg.Digraph | None = None  # not serialised; used by verify
    verdicts: dict | None = None  # filled in by verify()

    def record(self, t, server, kind, msg_id="", hops=0, round_=0):
        self.records.append(
            {
                "t": t,
                "server": server,
                "kind": kind,
                "msg": msg_id,
                "hops": hops,
                "round": round_,
            }
        )

    def to_jsonl(self) -> str:
        lines = [json.dumps(r, sort_keys=True) for r in self.records]
        summary = {
            "summary": {
                "meta": self.meta,
                "deliveries": {
                    str(s): {
                        str(r): [[o, p.decode("utf-8", "replace")] for o, p in batch]
                        for r, batch in rounds.items()
                    }
                    for s, rounds in sorted(self.deliveries.items())
                },
                "tagged": {
                    str(s): {str(r): list(v) for r, v in rounds.items()}
                    for s, rounds in sorted(self.tagged.items())
                },
                "crashes": {str(s): t for s, t in sorted(self.crashes.items())},
                "depth_hops": {str(s): h for s, h in sorted(self.depth_hops.items())},
            }
        }
        if self.verdicts is not None:
            summary["summary"]["verdicts"] = self.verdicts
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"


def _msg_key(msg):
    if isinstance(msg, Bcast):
        return ("b", msg.round, msg.origin)
    if isinstance(msg, Fail):
        return ("f", msg.round, msg.failed, msg.detector)
    if isinstance(msg, Fwd):
        return ("F", msg.round, msg.origin)
    if isinstance(msg, Bwd):
        return ("B", msg.round, msg.origin)
    return ("h",)


# -- the event loop ----------------------------------------------------------


class _Node:
    __slots__ = (
        "id",
        "server",
        "crashed",
        "crash_trigger",
        "monitor",
        "first_hops",
        "injected",
    )

    def __init__(self, sid, server, monitor):
        self.id = sid
        self.server = server
        self.crashed = False
        self.crash_trigger = None  # (round, origin, subset)
        self.monitor = monitor
        self.first_hops = {}  # msg key -> hops at first receipt
        self.injected = set()  # (suspect, round) already fed to the protocol


class _Sim:
    def __init__(self, scenario: SimScenario):
        scenario.validate()
        self.sc = scenario
        self.g = scenario.digraph
        self.n = self.g.n
        self.now = 0
        self.seq = 0
        self.heap = []
        self.delay_iter = scenario.delay.sampler(scenario.seed ^ 0x5EED)
        self.cuts = {(c.src, c.dst): c.at for c in scenario.cuts}
        self.last_arrival = {}
        self.inflight = 0
        f = len({c.server for c in scenario.crashes})
        self.trace = Trace(
            meta={
                "n": self.n,
                "d": self.g.degree(),
                "rounds": scenario.rounds,
                "mode": scenario.mode.value,
                "seed": scenario.seed,
                "f": f,
                "cuts": len(scenario.cuts),
                "expect_no_delivery": sorted(scenario.expect_no_delivery),
            },
            digraph=self.g,
        )
        hb = scenario.fd.mode is fdmod.FdMode.HEARTBEAT
        self.nodes = []
        for i in range(self.n):
            plan = {
                r: scenario.payloads.get(r, {}).get(i, b"")
                for r in range(2, scenario.rounds + 1)
            }
            server = Server(
                Config(n=self.n, digraph=self.g, me=i, mode=scenario.mode, payloads=plan)
            )
            monitor = None
            if hb:
                monitor = fdmod.HeartbeatMonitor(
                    scenario.fd, predecessors=server.pred[i], start=0.0
                )
            self.nodes.append(_Node(i, server, monitor))
        for c in scenario.crashes:
            if c.at is not None:
                self._push(c.at, c.server, ("crash",))
            else:
                self.nodes[c.server].crash_trigger = (
                    c.after_sending[0],
                    c.after_sending[1],
                    frozenset(c.to),
                )
        round1 = scenario.payloads.get(1, {})
        for i in range(self.n):
            self._push(0, i, ("start", round1.get(i, b"")))
        if hb:
            hb_ns = _to_ns(scenario.fd.hb_period)
            for i in range(self.n):
                self._push(hb_ns, i, ("hb",))
                self._push(hb_ns, i, ("fdcheck",))

    # -- plumbing -----------------------------------------------------

    def _push(self, t, dest, item):
        heapq.heappush(self.heap, (t, dest, self.seq, item))
        self.seq += 1

    def _sample_delay(self) -> int:
        return max(1, _to_ns(next(self.delay_iter)))

    def _send(self, src, dst, msg, hops):
        cut_at = self.cuts.get((src, dst))
        if cut_at is not None and self.now >= cut_at:
            return
        arrival = self.now + self._sample_delay()
        if isinstance(msg, Heartbeat):
            self._push(arrival, dst, ("msg", src, msg, hops))
            return
        key = (src, dst)
        arrival = max(arrival, self.last_arrival.get(key, 0))
        self.last_arrival[key] = arrival
        self.inflight += 1
        self._push(arrival, dst, ("msg", src, msg, hops))

    def _hops_for_send(self, node, msg):
        key = _msg_key(msg)
        got = node.first_hops.get(key)
        return 1 if got is None else got + 1

    def _execute(self, node, effects):
        """Run protocol effects; apply the after_sending crash trigger."""
        queue = deque(effects)
        while queue:
            eff = queue.popleft()
            if isinstance(eff, Send):
                if node.crashed:
                    continue
                trig = node.crash_trigger
                msg = eff.msg
                if (
                    trig is not None
                    and isinstance(msg, Bcast)
                    and (msg.round, msg.origin) == (trig[0], trig[1])
                ):
                    # fan-out is cut: serve the chosen subset, then die
                    if msg.origin == node.id:
                        self.trace.broadcasts.add((msg.round, msg.origin))
                    for rest in [eff, *queue]:
                        if (
                            isinstance(rest, Send)
                            and isinstance(rest.msg, Bcast)
                            and (rest.msg.round, rest.msg.origin) == trig[:2]
                            and rest.to in trig[2]
                        ):
                            self._send(
                                node.id, rest.to, rest.msg, self._hops_for_send(node, rest.msg)
                            )
                    self._crash(node)
                    return
                if isinstance(msg, Bcast) and msg.origin == node.id:
                    self.trace.broadcasts.add((msg.round, msg.origin))
                self._send(node.id, eff.to, msg, self._hops_for_send(node, msg))
            elif isinstance(eff, Deliver):
                self.trace.deliveries.setdefault(node.id, {})[eff.round] = eff.batch
                self.trace.delivery_times.setdefault(node.id, {})[eff.round] = self.now
                self.trace.record(
                    self.now, node.id, "deliver", f"round:{eff.round}", round_=eff.round
                )
            elif isinstance(eff, TaggedFailed):
                self.trace.tagged.setdefault(node.id, {})[eff.round] = eff.servers
                if node.monitor is not None:
                    for s in eff.servers:
                        node.monitor.forget(s)
                self.trace.record(
                    self.now,
                    node.id,
                    "tagged",
                    ",".join(map(str, eff.servers)),
                    round_=eff.round,
                )

    def _crash(self, node):
        if node.crashed:
            return
        node.crashed = True
        node.crash_trigger = None
        self.trace.crashes[node.id] = self.now
        self.trace.record(self.now, node.id, "crash")
        if self.sc.fd.mode is fdmod.FdMode.ORACLE:
            latency = _to_ns(self.sc.fd.timeout)
            for s in self.g.succ[node.id]:
                self._push(self.now + latency, s, ("detect", node.id))

    def _inject_suspicion(self, node, failed):
        server = node.server
        if (failed, server.round) in node.injected:
            return
        if failed not in server.members or failed in server.failed_tags:
            return
        node.injected.add((failed, server.round))
        self.trace.record(self.now, node.id, "suspect", str(failed))
        self._execute(node, server.suspect(failed))

    # -- event handlers -------------------------------------------------

    def _on_msg(self, node, src, msg, hops):
        if isinstance(msg, Heartbeat):
            if node.crashed or node.monitor is None:
                return
            node.monitor.beacon(msg.sender, self.now / NS)
            return
        self.inflight -= 1
        if node.crashed:
            return
        key = _msg_key(msg)
        kind = {"b": "bcast_recv", "f": "fail_recv", "F": "fwd_recv", "B": "bwd_recv"}[
            key[0]
        ]
        rnd = key[1]
        self.trace.record(self.now, node.id, kind, repr(key), hops, rnd)
        if kind == "bcast_recv":
            per = self.trace.bcast_recv.setdefault(node.id, {})
            per[rnd] = per.get(rnd, 0) + 1
            if msg.origin != node.id:
                per = self.trace.foreign_bcast_recv.setdefault(node.id, {})
                per[rnd] = per.get(rnd, 0) + 1
        elif kind == "fail_recv":
            per = self.trace.fail_recv.setdefault(node.id, {})
            per[rnd] = per.get(rnd, 0) + 1
        if key not in node.first_hops:
            node.first_hops[key] = hops
            # dissemination depth covers broadcasts and the notification
            # tail reaching servers that lacked them; echoes back to the
            # originator and the decision probes are separate exchanges
            mine = (key[0] == "b" and msg.origin == node.id) or (
                key[0] == "f" and msg.detector == node.id
            )
            if key[0] in ("b", "f") and not mine:
                prev = self.trace.depth_hops.get(node.id, 0)
                if hops > prev:
                    self.trace.depth_hops[node.id] = hops
        self._execute(node, node.server.handle(src, msg))

    def _on_start(self, node, payload):
        if node.crashed or node.server.broadcast_done:
            return
        self._execute(node, node.server.a_broadcast(payload))

    def _on_hb(self, node):
        if node.crashed:
            return
        beat = Heartbeat(node.id)
        for s in node.server.succ.get(node.id, ()):
            self._send(node.id, s, beat, 0)
        self._push(self.now + _to_ns(self.sc.fd.hb_period), node.id, ("hb",))

    def _on_fdcheck(self, node):
        if node.crashed:
            return
        fresh = node.monitor.check(self.now / NS)
        for p in fresh:
            self._inject_suspicion(node, p)
        # a persisting suspicion must be re-raised once the round advances
        for p in sorted(node.monitor.suspected):
            self._inject_suspicion(node, p)
        self._push(self.now + _to_ns(self.sc.fd.hb_period), node.id, ("fdcheck",))

    def _done(self) -> bool:
        for node in self.nodes:
            if node.crashed or node.server.halted:
                continue
            if node.server.round <= self.sc.rounds:
                return False
        return self.inflight == 0

    def run(self) -> Trace:
        while self.heap:
            t, dest, _, item = self.heap[0]
            if t > self.sc.horizon:
                break
            heapq.heappop(self.heap)
            self.now = t
            node = self.nodes[dest]
            kind = item[0]
            if kind == "msg":
                self._on_msg(node, item[1], item[2], item[3])
            elif kind == "start":
                self._on_start(node, item[1])
            elif kind == "crash":
                self._crash(node)
            elif kind == "detect":
                if not node.crashed and self.nodes[item[1]].crashed:
                    self._inject_suspicion(node, item[1])
            elif kind == "hb":
                self._on_hb(node)
            elif kind == "fdcheck":
                self._on_fdcheck(node)
            if self._done():
                break
        return self.trace


def run(scenario: SimScenario) -> Trace:
    """Simulate one scenario to quiescence or the horizon."""
    return _Sim(scenario).run()


# -- verdicts ----------------------------------------------------------------


@dataclass
class Verdicts:
    integrity: bool = True
    agreement: bool = True
    total_order: bool = True
    validity: bool = True
    depth_bound: bool = True
    bcast_bound: bool = True
    fail_bound: bool = True
    details: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(
            (
                self.integrity,
                self.agreement,
                self.total_order,
                self.validity,
                self.depth_bound,
                self.bcast_bound,
                self.fail_bound,
            )
        )

    def as_dict(self) -> dict:
        return {
            "integrity": self.integrity,
            "agreement": self.agreement,
            "total_order": self.total_order,
            "validity": self.validity,
            "depth_bound": self.depth_bound,
            "bcast_bound": self.bcast_bound,
            "fail_bound": self.fail_bound,
            "ok": self.ok,
        }


def verify(trace: Trace, depth_limit: int | None = None) -> Verdicts:
    """Check the broadcast properties and analytic bounds on a trace.

    ``depth_limit`` overrides the f + delta_hat depth bound (pass a
    precomputed value to avoid re-running the flow solver per trace).
    """
    v = Verdicts()
    meta = trace.meta
    n, d, f = meta["n"], meta["d"], meta["f"]
    rounds = meta["rounds"]

    # integrity: at most one delivery per (server, round); every delivered
    # message was actually broadcast by its origin in that round
    for s, per_round in trace.deliveries.items():
        for r, batch in per_round.items():
            origins = [o for o, _ in batch]
            if len(set(origins)) != len(origins):
                v.integrity = False
                v.details.append(f"server {s} round {r}: duplicate origins")
            for o in origins:
                if (r, o) not in trace.broadcasts:
                    v.integrity = False
                    v.details.append(f"server {s} delivered unbroadcast ({r},{o})")

    # agreement and total order: identical ordered batches per round
    for r in range(1, rounds + 1):
        batches = {
            s: per.get(r) for s, per in trace.deliveries.items() if per.get(r)
        }
        if not batches:
            continue
        ref = None
        for s, batch in sorted(batches.items()):
            if ref is None:
                ref = batch
            elif set(batch) != set(ref):
                v.agreement = False
                v.details.append(f"round {r}: server {s} batch set differs")
            elif batch != ref:
                v.total_order = False
                v.details.append(f"round {r}: server {s} batch order differs")

    # validity: servers that never crashed deliver every planned round
    for s in range(n):
        if s in trace.crashes or s in set(meta.get("expect_no_delivery", ())):
            continue
        got = trace.deliveries.get(s, {})
        for r in range(1, rounds + 1):
            if r not in got:
                v.validity = False
                v.details.append(f"server {s} never delivered round {r}")

    # dissemination depth against f + delta_hat
    max_depth = max(trace.depth_hops.values(), default=0)
    if depth_limit is None and trace.digraph is not None and trace.digraph.n <= 64:
        if f < dg.vertex_connectivity(trace.digraph):
            _, delta_hat = dg.fault_diameter_estimate(trace.digraph, f)
            depth_limit = f + delta_hat
    if depth_limit is not None and max_depth > depth_limit:
        v.depth_bound = False
        v.details.append(f"depth {max_depth} exceeds bound {depth_limit}")

    # per-round message-count bounds; the exact foreign count only holds
    # for uncut fault-free runs driven to quiescence
    exact = f == 0 and meta.get("cuts", 0) == 0
    for s in range(n):
        for r, count in trace.foreign_bcast_recv.get(s, {}).items():
            if count > n * d:
                v.bcast_bound = False
                v.details.append(f"server {s} round {r}: {count} bcast receives")
            if exact and s not in trace.crashes and count != (n - 1) * d:
                v.bcast_bound = False
                v.details.append(
                    f"server {s} round {r}: {count} != (n-1)d foreign receives"
                )
        for r, count in trace.fail_recv.get(s, {}).items():
            if count > f * d * d:
                v.fail_bound = False
                v.details.append(f"server {s} round {r}: {count} fail receives")
    trace.verdicts = v.as_dict()
    return v


# -- exhaustive exploration ---------------------------------------------------


@dataclass
class ExploreResult:
    executions: int
    states: int
    violations: list
    complete: bool
    # distinct quiescent outcomes: ((server, delivered-origins | None), ...)
    outcomes: set = field(default_factory=set)

    @property
    def ok(self) -> bool:
        return not self.violations and self.complete


def _snapshot_server(s: Server):
    key = s.__dict__.get("_snap")
    if key is None:
        # servers are never mutated once parked in a state, so the
        # canonical form can be cached on the object
        key = (
            s.round,
            tuple(s.members),
            tuple(sorted(s.known.items())),
            tuple(sorted(s.sent)),
            tuple((k, tuple(sorted(v))) for k, v in sorted(s.fails.items())),
            tuple(
                (
                    m,
                    tuple(sorted(t.verts)),
                    tuple(sorted((u, tuple(sorted(vs))) for u, vs in t.out.items())),
                )
                for m, t in sorted(s.tracking.items())
            ),
            s.broadcast_done,
            tuple(sorted(s.suspected)),
            tuple(sorted(s.failed_tags)),
            s.halted,
            s.delivered,
            tuple(s._buffer),
        )
        s._snap = key
    return key


def explore(
    graph: dg.Digraph,
    f: int = 0,
    bound: int = 4_000_000,
    payloads: dict[int, bytes] | None = None,
    reduce: bool = True,
) -> ExploreResult:
    """Exhaustively check one round over all delivery interleavings.

    Enumerates every order of per-link message deliveries, every crash
    point (any ``f`` servers, cutting any prefix of any fan-out), and
    every timing of the resulting failure detections, with memoised
    state hashing.  Safety (integrity, set agreement, order) must hold
    at every quiescent state; termination must hold whenever fewer than
    k servers crashed.  The visited-state count is capped by ``bound``.

    With ``reduce`` set, only the lowest-id server with enabled actions
    is expanded at each state.  That is sound for the checked
    properties: servers interact solely through per-link FIFO queues
    (sends to crashed servers vanish, crashes purge the victim's input
    queues), so actions at distinct servers commute and never disable
    one another, and every property is a function of quiescent states.
    """
    n = graph.n
    if n > 5:
        raise ValueError("exhaustive exploration is limited to n <= 5")
    k_graph = dg.vertex_connectivity(graph)
    if f >= k_graph:
        raise ValueError("need f < k(G) for the termination check")
    payloads = payloads or {i: bytes([65 + i]) for i in range(n)}

    servers0 = []
    for i in range(n):
        s = Server(Config(n=n, digraph=graph, me=i, mode=Mode.PERFECT))
        s.history = {}
        servers0.append(s)

    dead = ("dead",)

    def encode(servers, links, crashed, detects, budget):
        return (
            tuple(
                dead if i in crashed else _snapshot_server(s)
                for i, s in enumerate(servers)
            ),
            tuple(sorted(links.items())),
            tuple(sorted(detects)),
            budget,
        )

    initial = (tuple(servers0), {}, frozenset(), frozenset(), f)
    seen = {encode(*initial)}
    stack = [initial]
    quiescent = 0
    violations = []
    outcomes = set()
    complete = True

    def enabled_actions(servers, links, crashed, detects):
        acts = []
        for i in range(n):
            if i in crashed:
                continue
            s = servers[i]
            if not s.halted and s.round == 1 and not s.broadcast_done:
                acts.append(("start", i, i))
            for (src, dst), q in links.items():
                if dst == i and q:
                    acts.append(("recv", src, i))
            for j in sorted(crashed):
                if (j, i) not in detects and j in s.members and i in s.succ.get(j, ()):
                    acts.append(("detect", j, i))
        return acts

    def check_terminal(servers, crashed, budget):
        delivered = {
            i: servers[i].history[1]
            for i in range(n)
            if i not in crashed and 1 in servers[i].history
        }
        outcomes.add(
            tuple(
                (i, tuple(o for o, _ in delivered[i]) if i in delivered else None)
                for i in range(n)
                if i not in crashed
            )
        )
        ref = None
        for i, batch in sorted(delivered.items()):
            for o, _ in batch:
                if "bcast" not in servers[o].history:
                    violations.append(f"delivered message of silent origin {o}")
            if ref is None:
                ref = batch
            elif batch != ref:
                violations.append(f"batch mismatch at server {i}: {batch} vs {ref}")
        if f - budget < k_graph:
            for i in range(n):
                if i not in crashed and 1 not in servers[i].history:
                    violations.append(f"server {i} failed to terminate")

    while stack and not violations:
        if len(seen) > bound:
            complete = False
            break
        state = stack.pop()
        while True:
            servers, links, crashed, detects, budget = state
            acts = enabled_actions(servers, links, crashed, detects)
            if not acts:
                quiescent += 1
                check_terminal(servers, crashed, budget)
                break
            if reduce:
                target = min(a[2] for a in acts)
                acts = [a for a in acts if a[2] == target]
            if len(acts) == 1 and budget == 0:
                # forced move: chain it without a stack round-trip
                (state,) = _apply_action(
                    servers, links, crashed, detects, budget, acts[0], payloads
                )
                key = encode(*state)
                if key in seen:
                    break
                seen.add(key)
                continue
            for act in acts:
                for st in _apply_action(
                    servers, links, crashed, detects, budget, act, payloads
                ):
                    key = encode(*st)
                    if key not in seen:
                        seen.add(key)
                        stack.append(st)
            break
    return ExploreResult(quiescent, len(seen), violations, complete, outcomes)


def _apply_action(servers, links, crashed, detects, budget, act, payloads):
    # only the acting server changes: everything else is shared
    # structurally between states (parked servers are never mutated)
    kind, x, actor = act
    srv = servers[actor].clone()
    srv.history = dict(servers[actor].history)
    if kind == "start":
        work_links = links
        effects = srv.a_broadcast(payloads[actor])
    elif kind == "recv":
        q = links[(x, actor)]
        work_links = dict(links)
        if len(q) > 1:
            work_links[(x, actor)] = q[1:]
        else:
            del work_links[(x, actor)]
        effects = srv.handle(x, q[0])
    else:  # detect
        work_links = links
        detects = detects | {(x, actor)}
        effects = srv.suspect(x)

    sends = []
    for eff in effects:
        if isinstance(eff, Send):
            sends.append(eff)
            if isinstance(eff.msg, Bcast) and eff.msg.origin == actor:
                srv.history["bcast"] = True
        elif isinstance(eff, Deliver):
            srv.history[eff.round] = eff.batch

    new_servers = servers[:actor] + (srv,) + servers[actor + 1 :]
    out = []
    if budget > 0:
        # the actor may also crash after any prefix of this fan-out;
        # the dead server's object is shared too (it acts no more)
        dead = crashed | {actor}
        base = {k: v for k, v in work_links.items() if k[1] != actor}
        for keep in range(len(sends) + 1):
            lk = _enqueue(base, dead, actor, sends[:keep])
            out.append((new_servers, lk, dead, detects, budget - 1))
    out.append(
        (new_servers, _enqueue(work_links, crashed, actor, sends), crashed, detects, budget)
    )
    return out


def _enqueue(links, crashed, src, sends):
    if not sends:
        return links
    links = dict(links)
    for eff in sends:
        if eff.to in crashed:
            continue
        links[(src, eff.to)] = links.get((src, eff.to), ()) + (eff.msg,)
    return links
