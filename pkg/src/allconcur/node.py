"""Socket transport: one OS process per protocol participant.

Each node keeps one outbound stream per overlay successor and accepts
one inbound stream per predecessor, identified by a heartbeat frame
sent first on every connection.  The protocol core runs confined to
the asyncio event loop: frames from all connections are decoded and
fed to it serially, and the effects it returns are written out
asynchronously, so the core never blocks on I/O.

Failure detection rides the same streams: periodic heartbeat frames
feed per-predecessor monitors, and losing a predecessor's connection
counts as an immediate suspicion.  Deliveries and failure tags are
appended as JSON lines to the output file; the process exits once the
configured number of rounds is delivered (plus a short grace period so
peers can finish draining this node's streams).
"""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

from allconcur import transport
from allconcur.digraph import from_spec
from allconcur.fd import FdConfig, FdMode, HeartbeatMonitor
from allconcur.protocol import (
    Config,
    Deliver,
    Heartbeat,
    Mode,
    ProtocolError,
    Send,
    Server,
    TaggedFailed,
)
from allconcur.units import parse_duration

RETRY_DELAY = 0.1
CONNECT_TIMEOUT = 10.0
LINGER = 0.75


class Node:
    def __init__(self, opts):
        self.id = opts.id
        self.members = opts.members
        g = opts.digraph
        # round 1 included: a peer's message may arrive before our own
        # kick-off, and the reactive broadcast must carry the real payload
        payloads = {
            r: opts.payload(r, self.id).encode() for r in range(1, opts.rounds + 1)
        }
        if opts.crash_at_round is not None:
            payloads = {r: p for r, p in payloads.items() if r < opts.crash_at_round}
        self.core = Server(
            Config(n=g.n, digraph=g, me=self.id, mode=Mode.PERFECT, payloads=payloads)
        )
        self.opts = opts
        self.monitor = None  # built once the event loop clock is running
        self.writers = {}  # successor id -> StreamWriter
        self.out_queue = {s: [] for s in self.core.succ[self.id]}
        self.done = asyncio.Event()
        self.links_ready = asyncio.Event()
        self.gave_up = set()
        self.tagged_out = False
        self.out_fh = open(opts.out, "w", encoding="utf-8") if opts.out else sys.stdout

    def now(self) -> float:
        return asyncio.get_running_loop().time()

    # -- effects --------------------------------------------------------

    def execute(self, effects):
        for eff in effects:
            if isinstance(eff, Send):
                self.dispatch(eff.to, transport.encode(eff.msg))
            elif isinstance(eff, Deliver):
                self.emit(
                    {
                        "round": eff.round,
                        "batch": [
                            [o, p.decode("utf-8", "replace")] for o, p in eff.batch
                        ],
                    }
                )
                crash = self.opts.crash_at_round
                if crash is not None and eff.round == crash - 1:
                    self.out_fh.flush()
                    os._exit(1)  # injected fail-stop: die as round `crash` opens
                if eff.round >= self.opts.rounds:
                    self.done.set()
            elif isinstance(eff, TaggedFailed):
                for s in eff.servers:
                    if self.monitor is not None:
                        self.monitor.forget(s)
                self.emit({"round": eff.round, "tagged": list(eff.servers)})
        if self.core.halted and not self.done.is_set():
            # tagged out of the membership: report and stop
            self.emit({"halted": True, "round": self.core.round})
            self.tagged_out = True
            self.done.set()

    def emit(self, obj):
        if self.out_fh.closed:
            return
        self.out_fh.write(json.dumps(obj, sort_keys=True) + "\n")
        self.out_fh.flush()

    def dispatch(self, to: int, frame: bytes):
        w = self.writers.get(to)
        if w is None:
            if to not in self.gave_up:
                self.out_queue[to].append(frame)
        else:
            try:
                w.write(frame)
            except ConnectionError:
                pass

    # -- connections ----------------------------------------------------

    async def connect_out(self, succ: int):
        # an unreachable successor degrades to a missing link: the peer
        # either comes up late or is dead, and dead peers are the failure
        # detector's job, not ours
        host, port = self.members[succ]
        deadline = self.now() + CONNECT_TIMEOUT
        while True:
            try:
                _, writer = await asyncio.open_connection(host, port)
                break
            except OSError:
                if self.now() > deadline:
                    print(
                        f"node {self.id}: giving up on successor {succ} "
                        f"at {host}:{port}",
                        file=sys.stderr,
                    )
                    self.gave_up.add(succ)
                    self.out_queue[succ].clear()
                    return
                await asyncio.sleep(RETRY_DELAY)
        writer.write(transport.encode(Heartbeat(self.id)))
        for frame in self.out_queue[succ]:
            writer.write(frame)
        self.out_queue[succ].clear()
        self.writers[succ] = writer
        await writer.drain()

    async def serve_in(self, reader, writer):
        # hold inbound traffic (in kernel buffers) until our own outbound
        # links are settled: anything the core emits in reaction must go
        # straight onto an established stream, never into a local queue
        # that an early exit could drop
        await self.links_ready.wait()
        splitter = transport.FrameSplitter()
        sender = None
        try:
            while True:
                data = await reader.read(65536)
                if not data:
                    break
                for msg in splitter.feed(data):
                    if sender is None:
                        if not isinstance(msg, Heartbeat):
                            return  # peers must identify themselves first
                        sender = msg.sender
                        self.monitor.beacon(sender, self.now())
                        continue
                    if isinstance(msg, Heartbeat):
                        self.monitor.beacon(sender, self.now())
                    else:
                        self.execute(self.core.handle(sender, msg))
        except (
            ConnectionError,
            ProtocolError,
            transport.FrameError,
            asyncio.IncompleteReadError,
        ) as exc:
            if not isinstance(exc, ConnectionError):
                print(f"node {self.id}: resetting link from {sender}: {exc}",
                      file=sys.stderr)
        finally:
            writer.close()
            # a vanished predecessor is indistinguishable from a crash
            if (
                sender is not None
                and not self.done.is_set()
                and sender in self.monitor.last_heard
            ):
                self.execute(self.core.suspect(sender))

    async def beat(self):
        frame = transport.encode(Heartbeat(self.id))
        while True:
            for w in self.writers.values():
                try:
                    if not w.is_closing():
                        w.write(frame)
                except ConnectionError:
                    pass
            await asyncio.sleep(self.opts.hb)

    async def watch(self):
        # grace period: peers may still be starting up or connecting, and
        # neither state may be confused with a crash
        await asyncio.sleep(CONNECT_TIMEOUT + self.opts.timeout)
        self.monitor.last_heard = {
            p: max(t, self.now() - self.opts.timeout / 2)
            for p, t in self.monitor.last_heard.items()
        }
        while True:
            await asyncio.sleep(self.opts.hb)
            for p in self.monitor.check(self.now()):
                self.execute(self.core.suspect(p))
            # suspect() dedups, so re-raising keeps later rounds covered
            for p in sorted(self.monitor.suspected):
                self.execute(self.core.suspect(p))

    async def run(self):
        host, port = self.members[self.id]
        server = await asyncio.start_server(self.serve_in, host, port)
        self.monitor = HeartbeatMonitor(
            FdConfig(self.opts.hb, self.opts.timeout, FdMode.HEARTBEAT),
            predecessors=self.core.pred[self.id],
            start=self.now(),
        )
        # beacons must flow while connections are still coming up, or a
        # slow link would get this node falsely suspected
        tasks = [
            asyncio.create_task(self.beat()),
            asyncio.create_task(self.watch()),
        ]
        await asyncio.gather(*(self.connect_out(s) for s in self.core.succ[self.id]))
        self.links_ready.set()
        # kick off round 1 unless a peer's traffic already triggered it
        if self.core.round == 1 and not self.core.broadcast_done:
            self.execute(self.core.a_broadcast(self.opts.payload(1, self.id).encode()))
        await self.done.wait()
        await asyncio.sleep(LINGER)
        for t in tasks:
            t.cancel()
        for w in self.writers.values():
            w.close()
        server.close()
        await server.wait_closed()
        if self.out_fh is not sys.stdout:
            self.out_fh.close()
        return 3 if self.tagged_out else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="allconcur-node",
        description="Run one broadcast participant over TCP streams.",
    )
    ap.add_argument("--id", type=int, required=True)
    ap.add_argument("--members", required=True, help="file of '<id> <host> <port>'")
    ap.add_argument("--graph", required=True, help="complete:N | binomial:N | gs:N:D | @file")
    ap.add_argument("--rounds", type=int, default=1)
    ap.add_argument("--payload-prefix", default="m")
    ap.add_argument("--hb", default="50ms", help="heartbeat period")
    ap.add_argument("--timeout", default="500ms", help="suspicion timeout")
    ap.add_argument("--out", default=None, help="JSONL output path (default stdout)")
    ap.add_argument(
        "--crash-at-round",
        type=int,
        default=None,
        help="fail-stop abruptly when this round opens",
    )
    args = ap.parse_args(argv)

    with open(args.members, encoding="utf-8") as fh:
        args.members = transport.parse_members(fh.read())
    args.digraph = from_spec(args.graph)
    args.hb = parse_duration(args.hb)
    args.timeout = parse_duration(args.timeout)
    prefix = args.payload_prefix
    args.payload = lambda r, s: f"{prefix}-r{r}-s{s}"

    return asyncio.run(Node(args).run())


if __name__ == "__main__":
    sys.exit(main())
