"""Per-server state machine for leaderless concurrent atomic broadcast.

Every server broadcasts one (possibly empty) message per round over a
regular overlay digraph and relays everything it receives; a round
ends when the server can prove it has every message any non-crashed
server has.  That proof is kept in one tracking digraph per origin:
the set of servers that may still hold that origin's message, grown
and pruned by failure notifications.  When every tracking digraph is
empty, the known messages are delivered in deterministic order
(sorted by origin id) and the round advances.

The machine is pure and transport-agnostic: inputs are messages plus
the identity of the link they arrived on, outputs are ``Send`` /
``Deliver`` / ``TaggedFailed`` effects.  It never performs I/O, so a
driver (simulator or socket transport) owns all timing and delivery.

Failure handling per notification ``(failed, detector)``, in order:
relay it, record it, then for every tracking digraph containing
``failed``: on the first notification, add ``failed``'s overlay
successors except the detector (expanding transitively through
servers already known to have failed, minus their recorded
detectors); on later notifications, remove the edge to the detector
and drop vertices no longer reachable from the tracked origin.  A
digraph whose vertices are all known failed is cleared outright.

A notification ``(failed, me)`` comes from the local failure detector.
From then on this server ignores everything but failure notifications
arriving on the link from ``failed`` until the round ends: the
notification promises the detector took nothing further from that
link, and tracking resolution leans on that promise in both detector
regimes.

Rounds are isolated by tagging every message with its round number.
Messages from future rounds are buffered and replayed after the round
advances.  Stale broadcasts are dropped (their round was already
delivered); stale failure notifications about servers still in the
membership are folded into the current round, which doubles as the
round-boundary resend of pending notifications.

Under ``Mode.PERFECT`` the machine delivers as soon as tracking
completes.  Under ``Mode.EVENTUAL`` suspicions may be wrong, so after
tracking completes the server floods a forward probe along the
overlay and a backward probe along its transpose, and delivers only
once it holds both probes from a strict majority of the membership
(counting itself).  At most one partition can assemble such a
majority, which preserves agreement when the overlay is split.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from allconcur.digraph import Digraph, build_complete, build_gs

log = logging.getLogger(__name__)


class Mode(Enum):
    PERFECT = "perfect"
    EVENTUAL = "eventual"


# -- messages and effects ----------------------------------------------------


@dataclass(frozen=True)
class Bcast:
    round: int
    origin: int
    payload: bytes = b""


@dataclass(frozen=True)
class Fail:
    round: int
    failed: int
    detector: int


@dataclass(frozen=True)
class Fwd:
    round: int
    origin: int


@dataclass(frozen=True)
class Bwd:
    round: int
    origin: int


@dataclass(frozen=True)
class Heartbeat:
    sender: int


Message = Bcast | Fail | Fwd | Bwd | Heartbeat


@dataclass(frozen=True)
class Send:
    to: int
    msg: Message


@dataclass(frozen=True)
class Deliver:
    round: int
    batch: tuple  # ((origin, payload), ...) sorted by origin


@dataclass(frozen=True)
class TaggedFailed:
    round: int
    servers: tuple


Effect = Send | Deliver | TaggedFailed


class ProtocolError(Exception):
    """Violation of a protocol precondition or invariant."""


# -- tracking digraphs -------------------------------------------------------


class Tracking:
    """Servers possibly holding one origin's message, plus the suspected
    relay edges between them.  An empty vertex set means resolved."""

    __slots__ = ("verts", "out")

    def __init__(self, origin: int | None):
        self.verts: set[int] = set() if origin is None else {origin}
        self.out: dict[int, set[int]] = {}

    @property
    def resolved(self) -> bool:
        return not self.verts

    def edges(self) -> set[tuple[int, int]]:
        return {(u, v) for u, outs in self.out.items() for v in outs}

    def clear(self):
        self.verts.clear()
        self.out.clear()

    def add_edge(self, u: int, v: int):
        self.out.setdefault(u, set()).add(v)

    def remove_edge(self, u: int, v: int):
        outs = self.out.get(u)
        if outs:
            outs.discard(v)
            if not outs:
                del self.out[u]

    def prune_unreachable(self, origin: int):
        reached = {origin}
        q = deque((origin,))
        while q:
            u = q.popleft()
            for v in self.out.get(u, ()):
                if v not in reached and v in self.verts:
                    reached.add(v)
                    q.append(v)
        dead = self.verts - reached
        if dead:
            self.verts -= dead
            for u in dead:
                self.out.pop(u, None)
            for outs in self.out.values():
                outs -= dead
            self.out = {u: outs for u, outs in self.out.items() if outs}

    def clone(self) -> "Tracking":
        t = Tracking(None)
        t.verts = set(self.verts)
        t.out = {u: set(v) for u, v in self.out.items()}
        return t


# -- the server state machine ------------------------------------------------


@dataclass
class Config:
    n: int
    digraph: Digraph
    me: int
    mode: Mode = Mode.PERFECT
    # payloads staged per round, auto-broadcast when the round opens;
    # round 1 must be started explicitly via a_broadcast (or arrives
    # lazily when a round-1 message is received)
    payloads: dict[int, bytes] = field(default_factory=dict)
    # degree used when a membership change rebuilds the overlay
    rebuild_degree: int | None = None


class Server:
    """One protocol participant.  Feed it messages via :meth:`handle`,
    start a round with :meth:`a_broadcast`, execute the returned effects."""

    def __init__(self, config: Config):
        g = config.digraph
        if config.n != g.n:
            raise ProtocolError(f"config n={config.n} but digraph has n={g.n}")
        if config.n < 2:
            raise ProtocolError("need at least two servers")
        if not 0 <= config.me < config.n:
            raise ProtocolError(f"server id {config.me} out of range")
        if not g.is_simple():
            raise ProtocolError("overlay digraph must be simple")
        self.me = config.me
        self.mode = config.mode
        self.payload_plan = dict(config.payloads)
        self.rebuild_degree = config.rebuild_degree or g.degree()
        self.round = 1
        self.failed_tags: set[int] = set()
        self.halted = False
        self._buffer: list[tuple[int, Message]] = []
        self._set_overlay(list(range(config.n)), g)
        self._reset_round(carry=[], auto_broadcast=False)

    # -- overlay bookkeeping ------------------------------------------

    def _set_overlay(self, members: list[int], g: Digraph):
        members = sorted(members)
        if len(members) != g.n:
            raise ProtocolError("overlay size does not match membership")
        self.members = members
        self._overlay = g
        pos = {m: i for i, m in enumerate(members)}
        self.succ = {m: tuple(members[j] for j in g.succ[pos[m]]) for m in members}
        self.pred = {m: tuple(members[j] for j in g.pred[pos[m]]) for m in members}

    def _reset_round(self, carry, auto_broadcast=True) -> list[Effect]:
        self.known: dict[int, bytes] = {}
        self.sent: set[int] = set()
        self.fails: dict[int, set[int]] = {}
        self.tracking = {
            m: Tracking(None if m == self.me else m) for m in self.members
        }
        self.broadcast_done = False
        self.suspected: set[int] = set()
        self.decided = False
        self.fwd_seen: set[int] = set()
        self.bwd_seen: set[int] = set()
        self.delivered = False
        effects: list[Effect] = []
        if auto_broadcast and self.round in self.payload_plan:
            effects += self.a_broadcast(self.payload_plan[self.round])
        for failed, det in carry:
            if failed in self.members and det not in self.fails.get(failed, ()):
                effects += self._accept_fail(failed, det)
        return effects

    # -- public operations --------------------------------------------

    def a_broadcast(self, payload: bytes = b"") -> list[Effect]:
        """Broadcast this server's message for the current round."""
        if self.halted:
            return []
        if self.broadcast_done:
            raise ProtocolError(f"already broadcast in round {self.round}")
        self.broadcast_done = True
        self.known[self.me] = bytes(payload)
        self.sent.add(self.me)
        msg = Bcast(self.round, self.me, bytes(payload))
        effects: list[Effect] = [Send(s, msg) for s in self.succ[self.me]]
        return effects + self._check_termination()

    def handle(self, sender: int, msg: Message) -> list[Effect]:
        """Process one message delivered on the link from ``sender``."""
        if self.halted or isinstance(msg, Heartbeat):
            return []
        if isinstance(msg, Bcast):
            return self._handle_bcast(sender, msg)
        if isinstance(msg, Fail):
            return self._handle_fail(sender, msg)
        if isinstance(msg, (Fwd, Bwd)):
            return self._handle_probe(sender, msg)
        raise ProtocolError(f"unknown message {msg!r}")

    def suspect(self, failed: int) -> list[Effect]:
        """Local failure-detector input: this server suspects ``failed``."""
        if self.halted or failed == self.me:
            return []
        if failed in self.failed_tags or failed not in self.members:
            return []
        if self.me in self.fails.get(failed, ()):
            return []
        return self._accept_fail(failed, self.me)

    def clone(self) -> "Server":
        """Independent copy sharing only the immutable overlay."""
        c = object.__new__(Server)
        c.me = self.me
        c.mode = self.mode
        c.payload_plan = self.payload_plan
        c.rebuild_degree = self.rebuild_degree
        c.round = self.round
        c.failed_tags = set(self.failed_tags)
        c.halted = self.halted
        c.members = self.members
        c._overlay = self._overlay
        c.succ = self.succ
        c.pred = self.pred
        c.known = dict(self.known)
        c.sent = set(self.sent)
        c.fails = {k: set(v) for k, v in self.fails.items()}
        c.tracking = {m: t.clone() for m, t in self.tracking.items()}
        c.broadcast_done = self.broadcast_done
        c.suspected = set(self.suspected)
        c.decided = self.decided
        c.fwd_seen = set(self.fwd_seen)
        c.bwd_seen = set(self.bwd_seen)
        c.delivered = self.delivered
        c._buffer = list(self._buffer)
        return c

    def reconfigure(self, joins) -> list[Effect]:
        """Apply a membership change at a round boundary.

        The new overlay covers current members plus ``joins``: a regular
        overlay of the configured degree when the size allows, otherwise
        a complete digraph.  Per-round state restarts from scratch; an
        empty change set keeps the current overlay untouched.
        """
        if self.broadcast_done or self.known or self.fails:
            raise ProtocolError("membership changes only at a round boundary")
        joins = set(joins) - set(self.members)
        if not joins:
            return []
        members = sorted(set(self.members) | joins)
        if len(members) < 2:
            raise ProtocolError("membership would drop below two servers")
        d = self.rebuild_degree
        if d >= 3 and len(members) >= 2 * d:
            g = build_gs(len(members), d)
        else:
            g = build_complete(len(members))
        self._set_overlay(members, g)
        return self._reset_round(carry=[])

    # -- receive handlers ----------------------------------------------

    def _handle_bcast(self, sender: int, msg: Bcast) -> list[Effect]:
        if msg.round > self.round:
            self._buffer.append((sender, msg))
            return []
        if msg.round < self.round or msg.origin in self.failed_tags:
            return []
        if sender in self.suspected or msg.origin not in self.tracking:
            return []
        effects: list[Effect] = []
        if not self.broadcast_done:
            effects += self.a_broadcast(self.payload_plan.get(self.round, b""))
            if msg.round != self.round:
                # own broadcast completed the round; msg is stale now
                return effects
        self.known.setdefault(msg.origin, msg.payload)
        for origin in sorted(self.known.keys() - self.sent):
            self.sent.add(origin)
            fwd = Bcast(self.round, origin, self.known[origin])
            effects += [Send(s, fwd) for s in self.succ[self.me]]
        self.tracking[msg.origin].clear()
        return effects + self._check_termination()

    def _handle_fail(self, sender: int, note: Fail) -> list[Effect]:
        if note.failed in self.failed_tags:
            return []
        if note.round > self.round:
            self._buffer.append((sender, note))
            return []
        # stale notifications about live members fold into this round
        if note.failed not in self.members:
            return []
        if note.detector in self.fails.get(note.failed, ()):
            return []
        if (
            note.round == self.round
            and note.detector in self.members
            and note.detector not in self.succ[note.failed]
        ):
            raise ProtocolError(
                f"detector {note.detector} is not a successor of {note.failed}"
            )
        return self._accept_fail(note.failed, note.detector)

    def _accept_fail(self, failed: int, detector: int) -> list[Effect]:
        msg = Fail(self.round, failed, detector)
        effects: list[Effect] = [Send(s, msg) for s in self.succ[self.me]]
        self.fails.setdefault(failed, set()).add(detector)
        if detector == self.me:
            self.suspected.add(failed)
        for origin in self.members:
            g = self.tracking[origin]
            if failed not in g.verts:
                continue
            if not g.out.get(failed):
                # first relevant notification: failed may have relayed the
                # message to any successor except the detector
                queue = deque(
                    (failed, p) for p in self.succ[failed] if p != detector
                )
                while queue:
                    parent, cand = queue.popleft()
                    if cand not in g.verts:
                        g.verts.add(cand)
                        if cand in self.fails:
                            queue.extend(
                                (cand, s)
                                for s in self.succ[cand]
                                if s not in self.fails[cand]
                            )
                    g.add_edge(parent, cand)
            elif detector in g.out.get(failed, ()):
                # detector never got it from failed; cut that edge and drop
                # anything the origin can no longer reach
                g.remove_edge(failed, detector)
                g.prune_unreachable(origin)
            if g.verts and all(v in self.fails for v in g.verts):
                g.clear()
        return effects + self._check_termination()

    def _handle_probe(self, sender: int, probe: Fwd | Bwd) -> list[Effect]:
        if self.mode is Mode.PERFECT:
            log.warning("server %d ignoring partition probe %r", self.me, probe)
            return []
        if probe.round > self.round:
            self._buffer.append((sender, probe))
            return []
        if probe.round < self.round or sender in self.suspected:
            return []
        if probe.origin not in self.tracking:
            return []
        seen = self.fwd_seen if isinstance(probe, Fwd) else self.bwd_seen
        if probe.origin in seen:
            return []
        seen.add(probe.origin)
        relay = self.succ[self.me] if isinstance(probe, Fwd) else self.pred[self.me]
        effects: list[Effect] = [Send(s, probe) for s in relay]
        return effects + self._maybe_deliver()

    # -- termination ----------------------------------------------------

    def _check_termination(self) -> list[Effect]:
        if self.delivered or any(
            not self.tracking[m].resolved for m in self.members
        ):
            return []
        if self.mode is Mode.PERFECT:
            return self._deliver_and_advance()
        effects: list[Effect] = []
        if not self.decided:
            self.decided = True
            self.fwd_seen.add(self.me)
            self.bwd_seen.add(self.me)
            fwd = Fwd(self.round, self.me)
            bwd = Bwd(self.round, self.me)
            effects += [Send(s, fwd) for s in self.succ[self.me]]
            effects += [Send(p, bwd) for p in self.pred[self.me]]
        return effects + self._maybe_deliver()

    def _maybe_deliver(self) -> list[Effect]:
        if self.delivered or not self.decided:
            return []
        quorum = len(self.members) // 2 + 1  # strict majority, self included
        if len(self.fwd_seen & self.bwd_seen) >= quorum:
            return self._deliver_and_advance()
        return []

    def _deliver_and_advance(self) -> list[Effect]:
        self.delivered = True
        batch = tuple((o, self.known[o]) for o in sorted(self.known))
        effects: list[Effect] = [Deliver(self.round, batch)]
        tagged = tuple(m for m in self.members if m not in self.known)
        survivors = [m for m in self.members if m in self.known]
        if tagged:
            effects.append(TaggedFailed(self.round, tagged))
            self.failed_tags.update(tagged)
        carry = [
            (p, det)
            for p, dets in sorted(self.fails.items())
            for det in sorted(dets)
            if p in survivors
        ]
        if self.me not in survivors or len(survivors) < 2:
            self.halted = True
            return effects
        if tagged:
            keep = [self.members.index(m) for m in survivors]
            self._set_overlay(survivors, self._overlay.induced(keep))
        self.round += 1
        buffered, self._buffer = self._buffer, []
        effects += self._reset_round(carry)
        for sender, msg in buffered:
            effects += self.handle(sender, msg)
        return effects + self._check_termination()
