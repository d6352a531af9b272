import pytest

from allconcur.digraph import Digraph, build_binomial, build_complete, build_gs
from allconcur.protocol import (
    Bcast,
    Bwd,
    Config,
    Deliver,
    Fail,
    Fwd,
    Heartbeat,
    Mode,
    ProtocolError,
    Send,
    Server,
    TaggedFailed,
)


def deliveries(effects):
    return [e for e in effects if isinstance(e, Deliver)]


def sends(effects, kind=None):
    out = [e for e in effects if isinstance(e, Send)]
    if kind is not None:
        out = [e for e in out if isinstance(e.msg, kind)]
    return out


def make(n=3, me=0, g=None, mode=Mode.PERFECT, payloads=None):
    g = g or build_complete(n)
    return Server(Config(n=g.n, digraph=g, me=me, mode=mode, payloads=payloads or {}))


class TestInit:
    def test_fresh_tracking(self):
        s = make(n=3, me=0)
        assert s.tracking[0].resolved
        assert s.tracking[1].verts == {1}
        assert s.tracking[2].verts == {2}

    def test_no_delivery_on_fresh_state(self):
        s = make(n=3, me=0)
        assert s._check_termination() == []

    def test_single_server_rejected(self):
        with pytest.raises(ProtocolError):
            Server(Config(n=1, digraph=Digraph([[]]), me=0))

    def test_me_out_of_range(self):
        with pytest.raises(ProtocolError):
            Server(Config(n=3, digraph=build_complete(3), me=3))


class TestBroadcast:
    def test_one_send_per_successor(self):
        g = build_gs(8, 3)
        s = Server(Config(n=8, digraph=g, me=0))
        out = sends(s.a_broadcast(b"x"))
        assert len(out) == 3
        assert sorted(e.to for e in out) == sorted(g.succ[0])

    def test_double_broadcast_rejected(self):
        s = make()
        s.a_broadcast(b"x")
        with pytest.raises(ProtocolError):
            s.a_broadcast(b"y")

    def test_empty_payload_delivered(self):
        a, b = make(n=2), make(n=2, me=1)
        ea = a.a_broadcast(b"")
        eb = b.a_broadcast(b"data")
        out = a.handle(1, eb[0].msg)
        assert deliveries(out)[0].batch == ((0, b""), (1, b"data"))

    def test_two_server_exchange(self):
        a, b = make(n=2), make(n=2, me=1)
        ea = a.a_broadcast(b"x")
        eb = b.a_broadcast(b"y")
        da = deliveries(a.handle(1, eb[0].msg))
        db = deliveries(b.handle(0, ea[0].msg))
        assert da[0].batch == db[0].batch == ((0, b"x"), (1, b"y"))


class TestReceiveBroadcast:
    def test_symmetric_three_servers(self):
        servers = [make(n=3, me=i) for i in range(3)]
        payloads = [b"a", b"b", b"c"]
        outs = {i: servers[i].a_broadcast(payloads[i]) for i in range(3)}
        batches = []
        for i, s in enumerate(servers):
            got = []
            for j in range(3):
                if j == i:
                    continue
                for e in sends(outs[j]):
                    if e.to == i:
                        got += deliveries(s.handle(j, e.msg))
            batches.append(got[-1].batch)
        assert batches[0] == batches[1] == batches[2]
        assert batches[0] == ((0, b"a"), (1, b"b"), (2, b"c"))

    def test_receive_triggers_own_broadcast_first(self):
        s = make(n=3, me=0)
        out = s.handle(1, Bcast(1, 1, b"hi"))
        own = [e for e in sends(out, Bcast) if e.msg.origin == 0]
        assert own, "own message must go out as a reaction"
        assert s.broadcast_done

    def test_duplicate_is_idempotent(self):
        s = make(n=3, me=0)
        s.a_broadcast(b"x")
        first = s.handle(1, Bcast(1, 1, b"one"))
        again = s.handle(2, Bcast(1, 1, b"one"))
        assert sends(first, Bcast)
        assert sends(again, Bcast) == []

    def test_future_round_buffered(self):
        s = make(n=3, me=0)
        assert s.handle(1, Bcast(2, 1, b"later")) == []
        assert s._buffer

    def test_forwards_exactly_once(self):
        s = make(n=4, me=0, g=build_complete(4))
        s.a_broadcast(b"x")
        out1 = s.handle(1, Bcast(1, 1, b"b"))
        fwd1 = [e for e in sends(out1, Bcast) if e.msg.origin == 1]
        assert len(fwd1) == 3  # all successors, origin echo included
        out2 = s.handle(2, Bcast(1, 1, b"b"))
        assert sends(out2) == []


class TestTrackingScript:
    """Scripted tracking-digraph evolution at server 6 of binomial(9)."""

    def setup_method(self):
        self.s = Server(Config(n=9, digraph=build_binomial(9), me=6))

    def test_event_sequence(self):
        s = self.s
        g0, g1 = s.tracking[0], s.tracking[1]

        s.handle(2, Fail(1, 0, 2))
        assert g0.verts == {0, 1, 4, 5, 7, 8}
        assert g0.edges() == {(0, 1), (0, 4), (0, 5), (0, 7), (0, 8)}

        s.handle(5, Fail(1, 0, 5))
        assert g0.verts == {0, 1, 4, 7, 8}
        assert g0.edges() == {(0, 1), (0, 4), (0, 7), (0, 8)}

        s.handle(3, Fail(1, 1, 3))
        assert g1.verts == {0, 1, 2, 4, 5, 6, 7, 8}
        assert g1.edges() == {
            (1, 0), (1, 2), (1, 5), (1, 6), (1, 8),
            (0, 1), (0, 4), (0, 7), (0, 8),
        }
        assert g0.verts == {0, 1, 2, 4, 5, 6, 7, 8}

        s.handle(5, Bcast(1, 1, b"m1"))
        assert g1.resolved
        assert not g0.resolved

    def test_cleared_digraph_never_repopulates(self):
        s = self.s
        s.handle(5, Bcast(1, 1, b"m1"))
        assert s.tracking[1].resolved
        s.handle(3, Fail(1, 1, 3))
        assert s.tracking[1].resolved


class TestFailureHandling:
    def test_forwarded_to_all_successors(self):
        s = make(n=4, g=build_complete(4))
        out = sends(s.handle(1, Fail(1, 3, 1)), Fail)
        assert len(out) == 3

    def test_duplicate_notification_ignored(self):
        s = make(n=4, g=build_complete(4))
        s.handle(1, Fail(1, 3, 1))
        assert s.handle(2, Fail(1, 3, 1)) == []

    def test_invalid_detector_rejected(self):
        g = build_gs(8, 3)
        s = Server(Config(n=8, digraph=g, me=0))
        failed = 5
        non_succ = next(i for i in range(8) if i not in g.succ[failed] and i != failed)
        with pytest.raises(ProtocolError):
            s.handle(1, Fail(1, failed, non_succ))

    def test_all_failed_digraph_cleared(self):
        # every path from a dead origin leads to dead servers only, so the
        # silent server's digraph clears and the round can finish
        s = make(n=3, g=build_complete(3), me=0)
        s.a_broadcast(b"x")
        s.handle(1, Fail(1, 2, 1))  # 2 died, detected by 1
        assert s.tracking[2].verts == {2, 0}
        s.suspect(2)  # removes (2, 0); 2 alone and known dead: cleared
        assert s.tracking[2].resolved
        out = s.handle(1, Bcast(1, 1, b"b"))
        d = deliveries(out)
        assert d and d[0].batch == ((0, b"x"), (1, b"b"))
        tags = [e for e in out if isinstance(e, TaggedFailed)]
        assert tags and tags[0].servers == (2,)
        assert s.round == 2

    def test_notification_about_self_is_survivable(self):
        s = make(n=3, g=build_complete(3), me=0)
        out = s.handle(1, Fail(1, 0, 1))
        assert s.fails == {0: {1}}
        assert not s.halted
        assert sends(out, Fail)


class TestTermination:
    def test_silent_server_tagged(self):
        # three servers; 2 never speaks; both survivors suspect it and
        # exchange notifications until every edge to a live server is cut
        a, b = make(n=3, me=0), make(n=3, me=1)
        ea = a.a_broadcast(b"x")
        eb = b.a_broadcast(b"y")
        a.handle(1, eb[0].msg)
        b.handle(0, ea[0].msg)
        out_a1 = a.suspect(2)
        out_b1 = b.suspect(2)
        assert not deliveries(out_a1) and not deliveries(out_b1)
        out_a2 = a.handle(1, sends(out_b1, Fail)[0].msg)
        out_b2 = b.handle(0, sends(out_a1, Fail)[0].msg)
        da, db = deliveries(out_a2), deliveries(out_b2)
        assert da and db
        assert da[-1].batch == db[-1].batch == ((0, b"x"), (1, b"y"))
        tags = [e for e in out_a2 + out_b2 if isinstance(e, TaggedFailed)]
        assert tags and all(t.servers == (2,) for t in tags)

    def test_no_effects_while_tracking_open(self):
        s = make(n=3, me=0)
        s.a_broadcast(b"x")
        assert not s.delivered

    def test_resend_pending_failures_next_round(self):
        # 2's message is delivered, yet 2 is reported failed in the same
        # round: the notification must be re-sent when round 2 opens, and
        # the fresh tracking digraph for 2 starts expanding immediately
        a = make(n=3, me=0, payloads={2: b"r2"})
        a.a_broadcast(b"x")
        a.handle(1, Bcast(1, 1, b"y"))
        a.handle(1, Fail(1, 2, 1))
        out = a.handle(2, Bcast(1, 2, b"z"))
        d = deliveries(out)
        assert d and [o for o, _ in d[0].batch] == [0, 1, 2]
        assert not [e for e in out if isinstance(e, TaggedFailed)]
        assert a.round == 2
        resent = [e.msg for e in sends(out, Fail) if e.msg.round == 2]
        assert {(m.failed, m.detector) for m in resent} == {(2, 1)}
        assert a.fails == {2: {1}}
        assert a.tracking[2].verts == {2, 0}


class TestRoundIteration:
    def test_two_rounds_via_payload_plan(self):
        plan = {2: b"second"}
        a = make(n=2, me=0, payloads=plan)
        b = make(n=2, me=1, payloads={2: b"other"})
        ea = a.a_broadcast(b"first")
        eb = b.a_broadcast(b"uno")
        out_a = a.handle(1, eb[0].msg)
        assert a.round == 2
        # the advance auto-broadcast round 2
        r2 = [e for e in sends(out_a, Bcast) if e.msg.round == 2]
        assert r2 and r2[0].msg.payload == b"second"
        out_b = b.handle(0, ea[0].msg)
        out_b2 = b.handle(0, r2[0].msg)
        r2b = [e for e in sends(out_b, Bcast) + sends(out_b2, Bcast) if e.msg.round == 2]
        out_a2 = a.handle(1, r2b[0].msg)
        assert deliveries(out_a2)[0].round == 2

    def test_stale_round_dropped(self):
        a = make(n=2, me=0)
        b = make(n=2, me=1)
        ea = a.a_broadcast(b"x")
        a.handle(1, b.a_broadcast(b"y")[0].msg)
        assert a.round == 2
        assert a.handle(1, Bcast(1, 1, b"dup")) == []


class TestPartitionProbes:
    def build_pair(self):
        return (
            make(n=2, me=0, mode=Mode.EVENTUAL),
            make(n=2, me=1, mode=Mode.EVENTUAL),
        )

    def test_probes_emitted_after_decision(self):
        a, b = self.build_pair()
        ea = a.a_broadcast(b"x")
        eb = b.a_broadcast(b"y")
        out = a.handle(1, eb[0].msg)
        assert sends(out, Fwd) and sends(out, Bwd)
        assert not deliveries(out)  # gate not met yet (needs 2 of 2)

    def test_gate_delivers_on_majority(self):
        a, b = self.build_pair()
        ea = a.a_broadcast(b"x")
        eb = b.a_broadcast(b"y")
        out_a = a.handle(1, eb[0].msg)
        out_b = b.handle(0, ea[0].msg)
        got = []
        got += a.handle(1, sends(out_b, Fwd)[0].msg)
        got += a.handle(1, sends(out_b, Bwd)[0].msg)
        assert deliveries(got)
        assert deliveries(got)[0].batch == ((0, b"x"), (1, b"y"))

    def test_probes_ignored_in_perfect_mode(self):
        s = make(n=3, me=0, mode=Mode.PERFECT)
        assert s.handle(1, Fwd(1, 1)) == []
        assert s.handle(1, Bwd(1, 1)) == []

    def test_suspected_predecessor_messages_dropped(self):
        g = build_complete(3)
        s = Server(Config(n=3, digraph=g, me=0, mode=Mode.EVENTUAL))
        s.suspect(1)
        assert s.handle(1, Bcast(1, 1, b"late")) == []
        assert 1 not in s.known
        # failure notifications still flow
        out = s.handle(1, Fail(1, 2, 1))
        assert s.fails.get(2) == {1}


class TestHeartbeatsIgnored:
    def test_noop(self):
        s = make()
        assert s.handle(1, Heartbeat(1)) == []


class TestReconfigure:
    def test_empty_change_keeps_overlay(self):
        s = make(n=4, g=build_complete(4))
        before = s._overlay
        s.reconfigure(set())
        assert s._overlay is before

    def test_join_restores_membership(self):
        servers = [make(n=2, me=i, g=build_complete(2)) for i in range(2)]
        a, b = servers
        ea = a.a_broadcast(b"x")
        a.handle(1, b.a_broadcast(b"y")[0].msg)
        assert a.round == 2
        a.reconfigure({2})
        assert a.members == [0, 1, 2]
        assert a.tracking[2].verts == {2}

    def test_rebuild_uses_regular_overlay_when_large_enough(self):
        g = build_gs(8, 3)
        s = Server(Config(n=8, digraph=g, me=0))
        # force a boundary: fresh server is at one
        s.reconfigure({8, 9, 10, 11})
        assert s._overlay.n == 12
        assert s._overlay.degree() == 3

    def test_mid_round_rejected(self):
        s = make(n=3)
        s.a_broadcast(b"x")
        with pytest.raises(ProtocolError):
            s.reconfigure({5})
