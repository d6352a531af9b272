"""Batch command-line front end: graph construction and analysis,
simulation campaigns, and the closed-form model tables.

Every subcommand is deterministic given its flags and seed (the seed
defaults to the ALLCONCUR_SEED environment variable) and exits 0 only
if everything it was asked to verify passed.  Output is machine
readable: DOT or adjacency text for graphs, JSONL for traces, CSV for
model tables.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor

from allconcur import digraph as dg
from allconcur import fd as fdmod
from allconcur import perfmodel, simnet
from allconcur.protocol import Mode
from allconcur.units import parse_duration, parse_target

NS = simnet.NS


def _seed_default() -> int:
    return int(os.environ.get("ALLCONCUR_SEED", "0"))


def _graph_from_args(args) -> dg.Digraph:
    if getattr(args, "adjacency", None):
        with open(args.adjacency, encoding="utf-8") as fh:
            return dg.from_adjacency(fh.read())
    kind = args.kind
    if kind == "complete":
        return dg.build_complete(args.n)
    if kind == "binomial":
        return dg.build_binomial(args.n)
    if kind == "gs":
        if args.d is None:
            raise SystemExit("gs graphs need --d")
        return dg.build_gs(args.n, args.d)
    raise SystemExit(f"unknown graph kind {kind}")


# -- graph ----------------------------------------------------------------


def cmd_graph_gen(args) -> int:
    g = _graph_from_args(args)
    name = f"{args.kind}_{args.n}" + (f"_{args.d}" if args.d else "")
    text = dg.to_dot(g, name) if args.format == "dot" else dg.to_adjacency(g)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_graph_analyze(args) -> int:
    g = _graph_from_args(args)
    resilience = [args.f] if args.f is not None else []
    sample = args.sample if g.n > 128 else None
    rep = dg.analyze(g, resilience=resilience, sample_pairs=sample, seed=args.seed)
    fields = [
        f"n={rep.n}",
        f"d={rep.d}",
        f"D={rep.diameter}",
        f"DL={rep.moore_lower}",
        f"k={rep.connectivity}",
    ]
    for f in resilience:
        fields.append(f"f={f}")
        fields.append(f"avg_lower={rep.avg_lower[f]}")
        fields.append(f"delta_hat={rep.delta_hat[f]}")
    print(" ".join(fields))
    return 0


# -- sim ------------------------------------------------------------------


def _parse_crash(text: str) -> simnet.Crash:
    # "server@time" or "server@send:round:origin[:to,to,...]"
    server, _, rest = text.partition("@")
    server = int(server)
    if rest.startswith("send:"):
        parts = rest.split(":")
        rnd, origin = int(parts[1]), int(parts[2])
        to = frozenset(int(x) for x in parts[3].split(",")) if len(parts) > 3 else frozenset()
        return simnet.Crash(server=server, after_sending=(rnd, origin), to=to)
    return simnet.Crash(server=server, at=int(parse_duration(rest) * NS))


def scenario_from_json(text: str) -> simnet.SimScenario:
    """Build a scenario from its documented JSON form."""
    doc = json.loads(text)
    spec = doc["digraph"]
    if "adjacency" in spec:
        g = dg.from_adjacency(spec["adjacency"])
    else:
        g = dg.from_spec(
            ":".join(
                str(x)
                for x in (spec["kind"], spec["n"], *([spec["d"]] if "d" in spec else []))
            )
        )
    payloads = {
        int(r): {int(s): p.encode() for s, p in plan.items()}
        for r, plan in doc.get("payloads", {}).items()
    }
    crashes = []
    for c in doc.get("crashes", ()):
        if "at" in c:
            crashes.append(
                simnet.Crash(server=c["server"], at=int(parse_duration(c["at"]) * NS))
            )
        else:
            a = c["after_sending"]
            crashes.append(
                simnet.Crash(
                    server=c["server"],
                    after_sending=(a["round"], a["origin"]),
                    to=frozenset(a.get("to", ())),
                )
            )
    cuts = tuple(
        simnet.EdgeCut(c["from"], c["to"], int(parse_duration(c.get("at", "0s")) * NS))
        for c in doc.get("cuts", ())
    )
    fdspec = doc.get("fd", {})
    fdcfg = fdmod.FdConfig(
        hb_period=parse_duration(fdspec.get("hb", "1ms")),
        timeout=parse_duration(fdspec.get("timeout", "10ms")),
        mode=fdmod.FdMode(fdspec.get("mode", "oracle")),
        escalation_factor=fdspec.get("escalation", 2.0),
    )
    return simnet.SimScenario(
        digraph=g,
        payloads=payloads,
        rounds=doc.get("rounds", 1),
        mode=Mode(doc.get("mode", "perfect")),
        delay=fdmod.parse_delay(doc.get("delay", "const:50us")),
        fd=fdcfg,
        crashes=tuple(crashes),
        cuts=cuts,
        horizon=int(parse_duration(doc.get("horizon", "60s")) * NS),
        seed=doc.get("seed", 0),
        expect_no_delivery=frozenset(doc.get("expect_no_delivery", ())),
    )


def cmd_sim_run(args) -> int:
    if args.scenario:
        with open(args.scenario, encoding="utf-8") as fh:
            sc = scenario_from_json(fh.read())
        if args.seed is not None:
            sc.seed = args.seed
    else:
        if args.n is None and not args.adjacency:
            raise SystemExit("sim run needs either --scenario or --n")
        g = _graph_from_args(args)
        payloads = {
            r: {i: f"r{r}m{i}".encode() for i in range(g.n)}
            for r in range(1, args.rounds + 1)
        }
        sc = simnet.SimScenario(
            digraph=g,
            payloads=payloads,
            rounds=args.rounds,
            mode=Mode(args.mode),
            delay=fdmod.parse_delay(args.delay),
            crashes=tuple(_parse_crash(c) for c in args.crash),
            seed=args.seed if args.seed is not None else _seed_default(),
        )
    trace = simnet.run(sc)
    verdicts = simnet.verify(trace)
    out = trace.to_jsonl()
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(out)
    else:
        sys.stdout.write(out)
    print(json.dumps({"verdicts": verdicts.as_dict()}, sort_keys=True), file=sys.stderr)
    return 0 if verdicts.ok else 1


def random_scenario(
    g: dg.Digraph, seed: int, f_range=None, mode=Mode.PERFECT
) -> simnet.SimScenario:
    """One seeded random crash scenario on g (constant per-run delay)."""
    rng = random.Random(seed)
    k = dg.vertex_connectivity(g)
    if f_range is None:
        f_range = (0, k - 1)
    f = rng.randint(*f_range)
    victims = rng.sample(range(g.n), f)
    delay_us = rng.choice([20, 50, 100, 250])
    crashes = []
    for v in victims:
        if rng.random() < 0.5:
            crashes.append(
                simnet.Crash(server=v, at=rng.randrange(0, 400 * delay_us) * 1000)
            )
        else:
            subset = [s for s in g.succ[v] if rng.random() < 0.5]
            crashes.append(
                simnet.Crash(server=v, after_sending=(1, v), to=frozenset(subset))
            )
    payloads = {1: {i: f"m{i}".encode() for i in range(g.n)}}
    return simnet.SimScenario(
        digraph=g,
        payloads=payloads,
        mode=mode,
        delay=fdmod.Constant(delay_us * 1e-6),
        crashes=tuple(crashes),
        seed=seed,
    )


def cmd_sim_sweep(args) -> int:
    g = _graph_from_args(args)
    k = dg.vertex_connectivity(g)
    limits = {}
    for f in range(k):
        _, dh = dg.fault_diameter_estimate(g, f)
        limits[f] = f + dh
    base = args.seed if args.seed is not None else _seed_default()

    def one(i: int):
        sc = random_scenario(g, seed=base + i)
        tr = simnet.run(sc)
        return simnet.verify(tr, depth_limit=limits[tr.meta["f"]])

    failures = 0
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        for i, v in enumerate(pool.map(one, range(args.count))):
            if not v.ok:
                failures += 1
                print(f"seed {base + i}: {v.details}", file=sys.stderr)
    print(f"scenarios={args.count} failures={failures}")
    return 0 if failures == 0 else 1


def cmd_sim_explore(args) -> int:
    g = _graph_from_args(args)
    res = simnet.explore(g, f=args.f, bound=args.bound)
    status = "all pass" if res.ok else ("VIOLATIONS" if res.violations else "capped")
    print(
        f"executions={res.executions} states={res.states} "
        f"outcomes={len(res.outcomes)}, {status}"
    )
    for v in res.violations[:10]:
        print(f"  {v}", file=sys.stderr)
    return 0 if res.ok else 1


def cmd_sim_verify(args) -> int:
    with open(args.trace, encoding="utf-8") as fh:
        lines = [json.loads(ln) for ln in fh if ln.strip()]
    summary = lines[-1].get("summary")
    if summary is None:
        raise SystemExit("trace file has no summary line")
    trace = simnet.Trace(meta=summary["meta"])
    for s, rounds in summary["deliveries"].items():
        trace.deliveries[int(s)] = {
            int(r): tuple((o, p.encode()) for o, p in batch)
            for r, batch in rounds.items()
        }
    trace.crashes = {int(s): t for s, t in summary["crashes"].items()}
    trace.depth_hops = {int(s): h for s, h in summary["depth_hops"].items()}
    for rec in lines[:-1]:
        kind, server, rnd = rec.get("kind"), rec.get("server"), rec.get("round", 0)
        if kind == "bcast_recv":
            per = trace.bcast_recv.setdefault(server, {})
            per[rnd] = per.get(rnd, 0) + 1
        elif kind == "fail_recv":
            per = trace.fail_recv.setdefault(server, {})
            per[rnd] = per.get(rnd, 0) + 1
    # deliveries parsed from a file cannot be traced back to broadcasts
    trace.broadcasts = {
        (r, o)
        for per in trace.deliveries.values()
        for r, batch in per.items()
        for o, _ in batch
    }
    verdicts = simnet.verify(trace)
    print(json.dumps({"verdicts": verdicts.as_dict()}, sort_keys=True))
    return 0 if verdicts.ok else 1


# -- model ----------------------------------------------------------------


def cmd_model_latency(args) -> int:
    rows = []
    for n, d, dia, _ in dg.GS_REFERENCE_ROWS:
        if args.n and n != args.n:
            continue
        rows.append(
            perfmodel.LogPParams(L=args.L, o=args.o, n=n, d=d, D=dia)
        )
    sys.stdout.write(perfmodel.model_table(rows))
    return 0


def cmd_model_table2(args) -> int:
    print("n,d,D,DL")
    ok = True
    for n, d, dia, low in dg.GS_REFERENCE_ROWS:
        got_d = dg.diameter(dg.build_gs(n, d))
        got_l = dg.moore_lower_bound(n, d)
        ok = ok and got_d == dia and got_l == low
        print(f"{n},{d},{got_d},{got_l}")
    return 0 if ok else 1


def cmd_model_reliability(args) -> int:
    rel = dg.ReliabilityParams(
        mttf=parse_duration(args.mttf), delta=parse_duration(args.delta)
    )
    target = parse_target(args.target)
    if args.d is not None:
        rho = dg.reliability(args.n, args.d, rel.p_f)
        print(f"n={args.n} d={args.d} p_f={rel.p_f:.6g} reliability={rho:.12f}")
        return 0
    d = dg.choose_degree(args.n, target, rel)
    print(f"n={args.n} target={target} p_f={rel.p_f:.6g} d={d}")
    return 0


def cmd_model_accuracy(args) -> int:
    delay = fdmod.parse_delay(args.dist)
    cfg = fdmod.FdConfig(
        hb_period=parse_duration(args.hb),
        timeout=parse_duration(args.to),
        mode=fdmod.FdMode.ORACLE,  # formula evaluation only
    )
    p = fdmod.accuracy_probability(cfg, args.n, args.d, delay.tail)
    print(f"hb={args.hb} to={args.to} n={args.n} d={args.d} accuracy>={p:.9f}")
    return 0


def cmd_model_depth(args) -> int:
    p = perfmodel.depth_within_faultdiameter_prob(
        args.n, args.d, parse_duration(args.o), parse_duration(args.mttf), args.rounds
    )
    print(f"n={args.n} d={args.d} rounds={args.rounds} p={p:.9f}")
    return 0


# -- wiring -----------------------------------------------------------------


def _add_graph_flags(p, required=True):
    p.add_argument("--kind", choices=["complete", "binomial", "gs"], default="gs")
    p.add_argument("--n", type=int, required=required, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--adjacency", default=None, help="read the graph from a file")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="allconcur",
        description="Overlay digraphs, protocol simulation, and models "
        "for leaderless concurrent atomic broadcast.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("graph", help="construct and analyze overlay digraphs")
    gsub = g.add_subparsers(dest="sub", required=True)
    gg = gsub.add_parser("gen", help="emit a digraph as DOT or adjacency text")
    _add_graph_flags(gg)
    gg.add_argument("--format", choices=["dot", "adj"], default="dot")
    gg.add_argument("--out", default=None)
    gg.set_defaults(fn=cmd_graph_gen)
    ga = gsub.add_parser("analyze", help="degree/diameter/connectivity report")
    _add_graph_flags(ga)
    ga.add_argument("--f", type=int, default=None, help="resilience for fault-diameter bounds")
    ga.add_argument("--sample", type=int, default=512, help="pair sample size for n > 128")
    ga.add_argument("--seed", type=int, default=_seed_default())
    ga.set_defaults(fn=cmd_graph_analyze)

    s = sub.add_parser("sim", help="discrete-event protocol simulation")
    ssub = s.add_subparsers(dest="sub", required=True)
    sr = ssub.add_parser("run", help="run one scenario, emit a JSONL trace")
    sr.add_argument("--scenario", default=None, help="scenario JSON file")
    _add_graph_flags(sr, required=False)
    sr.add_argument("--rounds", type=int, default=1)
    sr.add_argument("--mode", choices=["perfect", "eventual"], default="perfect")
    sr.add_argument("--delay", default="const:50us")
    sr.add_argument("--crash", action="append", default=[],
                    help="'server@10ms' or 'server@send:round:origin[:to,...]'")
    sr.add_argument("--seed", type=int, default=None)
    sr.add_argument("--trace", default=None, help="trace output path")
    sr.set_defaults(fn=cmd_sim_run)
    sw = ssub.add_parser("sweep", help="randomized crash campaign")
    _add_graph_flags(sw)
    sw.add_argument("--count", type=int, default=100)
    sw.add_argument("--seed", type=int, default=None)
    sw.add_argument("--jobs", type=int, default=4)
    sw.set_defaults(fn=cmd_sim_sweep)
    se = ssub.add_parser("explore", help="exhaustive interleaving check")
    _add_graph_flags(se)
    se.add_argument("--f", type=int, default=0)
    se.add_argument("--bound", type=int, default=4_000_000)
    se.set_defaults(fn=cmd_sim_explore)
    sv = ssub.add_parser("verify", help="re-check verdicts on a saved trace")
    sv.add_argument("--trace", required=True)
    sv.set_defaults(fn=cmd_sim_verify)

    m = sub.add_parser("model", help="closed-form tables")
    msub = m.add_subparsers(dest="sub", required=True)
    ml = msub.add_parser("latency", help="LogP latency and work CSV")
    ml.add_argument("--n", type=int, default=None)
    ml.add_argument("-L", type=float, default=1.25e-6)
    ml.add_argument("-o", type=float, default=0.38e-6)
    ml.set_defaults(fn=cmd_model_latency)
    mt = msub.add_parser("table2", help="regenerate the overlay sizing table")
    mt.set_defaults(fn=cmd_model_table2)
    mr = msub.add_parser("reliability", help="degree for a reliability target")
    mr.add_argument("--n", type=int, required=True)
    mr.add_argument("--d", type=int, default=None)
    mr.add_argument("--mttf", default="2y")
    mr.add_argument("--delta", default="24h")
    mr.add_argument("--target", default="6nines")
    mr.set_defaults(fn=cmd_model_reliability)
    ma = msub.add_parser("accuracy", help="failure-detector accuracy bound")
    ma.add_argument("--hb", required=True)
    ma.add_argument("--to", required=True)
    ma.add_argument("--n", type=int, required=True)
    ma.add_argument("--d", type=int, required=True)
    ma.add_argument("--dist", required=True, help="exp:10ms | const:1ms | uniform:a:b")
    ma.set_defaults(fn=cmd_model_accuracy)
    md = msub.add_parser("depth", help="probability depth stays within the fault diameter")
    md.add_argument("--n", type=int, required=True)
    md.add_argument("--d", type=int, required=True)
    md.add_argument("-o", default="1.8us")
    md.add_argument("--mttf", default="2y")
    md.add_argument("--rounds", type=int, default=1_000_000)
    md.set_defaults(fn=cmd_model_depth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
