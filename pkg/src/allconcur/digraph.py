"""Overlay digraphs for concurrent atomic broadcast.

Builds the digraph families the broadcast protocol runs on (complete,
binomial, generalized de Bruijn, and the regular quasiminimal-diameter
family ``G_S(n, d)``) and computes the parameters that matter for
fault tolerance: degree, diameter, vertex-connectivity, fault-diameter
bounds, and reliability under exponential server lifetimes.

Vertices are dense integers ``0..n-1``.  Parallel edges and self-loops
are first class during intermediate construction stages (the de Bruijn
family needs them); every public overlay constructor returns a simple
regular digraph and fails loudly otherwise.

All functions here are pure and operate on immutable inputs, so they
are safe to call concurrently from multiple threads.
"""

from __future__ import annotations

import heapq
import math
import re
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations


class GraphError(ValueError):
    """Invalid construction parameters or malformed input graph."""


class DisconnectedError(GraphError):
    """Raised where a finite diameter or feasible flow is required."""


class Digraph:
    """Directed graph with dense integer vertices and multiset edges.

    ``succ[u]`` is a sorted tuple of successors of ``u``; a successor
    repeated k times encodes k parallel edges.  ``labels``, when set,
    carries one annotation per vertex (used by ``line_digraph`` to
    remember which edge of the source graph a vertex came from).
    """

    __slots__ = ("n", "succ", "pred", "labels")

    def __init__(self, succ_lists, labels=None):
        self.n = len(succ_lists)
        self.succ = tuple(tuple(sorted(s)) for s in succ_lists)
        pred = [[] for _ in range(self.n)]
        for u, outs in enumerate(self.succ):
            for v in outs:
                if not 0 <= v < self.n:
                    raise GraphError(f"edge endpoint {v} out of range")
                pred[v].append(u)
        self.pred = tuple(tuple(sorted(p)) for p in pred)
        self.labels = tuple(labels) if labels is not None else None

    # -- basic queries ----------------------------------------------------

    def edge_count(self) -> int:
        return sum(len(s) for s in self.succ)

    def edges(self):
        for u, outs in enumerate(self.succ):
            for v in outs:
                yield (u, v)

    def out_degree(self, u: int) -> int:
        return len(self.succ[u])

    def in_degree(self, u: int) -> int:
        return len(self.pred[u])

    def degree(self) -> int:
        """Maximum in- or out-degree over all vertices."""
        return max(max(len(s) for s in self.succ), max(len(p) for p in self.pred))

    def has_self_loops(self) -> bool:
        return any(u in outs for u, outs in enumerate(self.succ))

    def self_loop_count(self, u: int) -> int:
        return sum(1 for v in self.succ[u] if v == u)

    def is_simple(self) -> bool:
        if self.has_self_loops():
            return False
        return all(len(set(s)) == len(s) for s in self.succ)

    def is_regular(self) -> bool:
        d = len(self.succ[0])
        return all(len(s) == d for s in self.succ) and all(
            len(p) == d for p in self.pred
        )

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.succ[u]

    def induced(self, keep) -> "Digraph":
        """Subdigraph on ``keep`` (relabelled densely, ascending)."""
        keep = sorted(set(keep))
        remap = {v: i for i, v in enumerate(keep)}
        return Digraph(
            [[remap[v] for v in self.succ[u] if v in remap] for u in keep]
        )

    def __eq__(self, other):
        return isinstance(other, Digraph) and self.succ == other.succ

    def __hash__(self):
        return hash(self.succ)

    def __repr__(self):
        return f"Digraph(n={self.n}, edges={self.edge_count()})"

    # the structure is immutable, so copies can be shared
    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


def _check_overlay(g: Digraph, d: int, what: str) -> Digraph:
    # public constructors promise simple d-regular outputs
    if not g.is_simple():
        raise GraphError(f"{what}: construction produced a non-simple digraph")
    if not all(len(g.succ[u]) == d and len(g.pred[u]) == d for u in range(g.n)):
        raise GraphError(f"{what}: construction is not {d}-regular")
    return g


# -- constructors ----------------------------------------------------------


def build_complete(n: int) -> Digraph:
    """Complete digraph: every ordered pair (u, v), u != v, is an edge."""
    if n < 2:
        raise GraphError("complete digraph needs n >= 2")
    g = Digraph([[v for v in range(n) if v != u] for u in range(n)])
    return _check_overlay(g, n - 1, "complete")


def build_binomial(n: int) -> Digraph:
    """Binomial graph: vertex i connects to i +/- 2^l mod n.

    Offsets run over 0 <= l <= floor(log2 n); offsets that coincide mod n
    (or reduce to 0) are collapsed, so the result is simple and regular.
    """
    if n < 3:
        raise GraphError("binomial graph needs n >= 3")
    offsets = set()
    l = 1
    while l <= n:
        offsets.add(l % n)
        offsets.add((-l) % n)
        l *= 2
    offsets.discard(0)
    g = Digraph([sorted((u + o) % n for o in offsets) for u in range(n)])
    return _check_overlay(g, len(offsets), "binomial")


def build_de_bruijn(m: int, d: int) -> Digraph:
    """Generalized de Bruijn digraph: edges (u, u*d + a mod m), a = 0..d-1.

    A multidigraph with exactly m*d edges; self-loops and parallel edges
    are kept (they get resolved by :func:`resolve_self_loops`).
    """
    if m < 2 or d < 3:
        raise GraphError("generalized de Bruijn needs m >= 2 and d >= 3")
    return Digraph([[(u * d + a) % m for a in range(d)] for u in range(m)])


def resolve_self_loops(g: Digraph) -> Digraph:
    """Replace self-loops with cycles, preserving regularity.

    floor(d/m) ascending-id cycles over all m vertices absorb the loops
    every vertex has; one more cycle over exactly the vertices carrying
    ceil(d/m) loops absorbs the remainder.  Cycle orientation is
    0 -> 1 -> ... -> 0 (ascending ids); parallel edges may result.
    """
    loops = [g.self_loop_count(u) for u in range(g.n)]
    if not any(loops):
        return g
    m = g.n
    d = len(g.succ[0])
    lo, hi = d // m, -(-d // m)
    extra = [u for u in range(m) if loops[u] == hi]
    if any(c not in (lo, hi) for c in loops):
        raise GraphError("self-loop counts inconsistent with a de Bruijn digraph")
    if d % m == 0 and any(c != lo for c in loops):
        raise GraphError("self-loop counts inconsistent with a de Bruijn digraph")
    if d % m != 0 and len(extra) < 2:
        raise GraphError("need at least two vertices with the extra self-loop")

    succ = [[v for v in g.succ[u] if v != u] for u in range(m)]
    for _ in range(lo):
        for u in range(m):
            succ[u].append((u + 1) % m)
    if d % m != 0:
        ring = sorted(extra)
        for i, u in enumerate(ring):
            succ[u].append(ring[(i + 1) % len(ring)])
    out = Digraph(succ)
    if out.edge_count() != g.edge_count():
        raise GraphError("self-loop replacement changed the edge count")
    return out


def line_digraph(g: Digraph) -> Digraph:
    """Line digraph: one vertex per edge of g, edge (uv -> wz) iff v == w.

    Parallel edges of g become distinct vertices; the result carries
    ``labels[i] = (tail, head, copy)`` identifying the original edge.
    Rejects inputs with self-loops (they would create fixed points).
    """
    if g.has_self_loops():
        raise GraphError("line digraph input must have no self-loops")
    labels = []
    for u in range(g.n):
        copy = {}
        for v in g.succ[u]:
            c = copy.get(v, 0)
            copy[v] = c + 1
            labels.append((u, v, c))
    by_tail = [[] for _ in range(g.n)]
    for i, (u, _, _) in enumerate(labels):
        by_tail[u].append(i)
    succ = [by_tail[head] for (_, head, _) in labels]
    return Digraph(succ, labels=labels)


def build_gs(n: int, d: int) -> Digraph:
    """Regular overlay G_S(n, d): d-regular, optimally connected, and of
    quasiminimal diameter for n <= d^3 + d.

    Write n = m*d + t.  The t == 0 case is the line digraph of the
    loop-resolved generalized de Bruijn digraph on m vertices.  For
    t > 0, t extra vertices are spliced in around a pivot vertex v of
    the de Bruijn graph (deterministically vertex 0): each new vertex
    w_i takes over a window of d-t+1 of v's in-edges and out-edges,
    and the matching window of direct in-to-out edges is removed so
    every degree stays exactly d.  Window indices are zero-based.
    """
    if d < 3:
        raise GraphError("G_S needs degree d >= 3")
    if n < 2 * d:
        raise GraphError("G_S needs n >= 2d")
    m, t = divmod(n, d)
    core = line_digraph(resolve_self_loops(build_de_bruijn(m, d)))
    if t == 0:
        return _check_overlay(core, d, f"G_S({n},{d})")

    pivot = 0
    labels = core.labels
    xs = sorted(i for i, (u, v, _) in enumerate(labels) if v == pivot)
    ys = sorted(i for i, (u, v, _) in enumerate(labels) if u == pivot)
    assert len(xs) == d and len(ys) == d

    succ = [set() for _ in range(n)]
    for u, outs in enumerate(core.succ):
        if len(set(outs)) != len(outs):
            raise GraphError("line digraph core is unexpectedly non-simple")
        succ[u] = set(outs)
    ws = list(range(core.n, n))
    for i, wi in enumerate(ws):
        for wj in ws:
            if wj != wi:
                succ[wi].add(wj)
        for p in range(d - t + 1):
            succ[xs[i + p]].add(wi)
            succ[wi].add(ys[i + p])
            q = (i + p) % (d - t + 1)
            removed = ys[i + q]
            if removed not in succ[xs[i + p]]:
                raise GraphError("window removal hit a missing edge")
            succ[xs[i + p]].discard(removed)
    g = Digraph([sorted(s) for s in succ])
    return _check_overlay(g, d, f"G_S({n},{d})")


# Reference sizes for the G_S family at a 6-nines reliability target
# (24h mission, 2-year MTTF): (n, d, diameter, moore_lower_bound).
GS_REFERENCE_ROWS = (
    (6, 3, 2, 2),
    (8, 3, 2, 2),
    (11, 3, 3, 2),
    (16, 4, 2, 2),
    (22, 4, 3, 3),
    (32, 4, 3, 3),
    (45, 4, 4, 3),
    (64, 5, 4, 3),
    (90, 5, 3, 3),
    (128, 5, 4, 3),
    (256, 7, 4, 3),
    (512, 8, 3, 3),
    (1024, 11, 4, 3),
)


# -- metrics ---------------------------------------------------------------


def _bfs_dist(succ, source: int, n: int):
    dist = [-1] * n
    dist[source] = 0
    q = deque([source])
    while q:
        u = q.popleft()
        du = dist[u] + 1
        for v in succ[u]:
            if dist[v] < 0:
                dist[v] = du
                q.append(v)
    return dist


def diameter(g: Digraph) -> int:
    """Longest shortest path over all ordered pairs (all-sources BFS)."""
    best = 0
    for s in range(g.n):
        dist = _bfs_dist(g.succ, s, g.n)
        for x in dist:
            if x < 0:
                raise DisconnectedError("digraph is not strongly connected")
            if x > best:
                best = x
    return best


def is_strongly_connected(g: Digraph) -> bool:
    if g.n == 0:
        return True
    return all(x >= 0 for x in _bfs_dist(g.succ, 0, g.n)) and all(
        x >= 0 for x in _bfs_dist(g.pred, 0, g.n)
    )


class _SplitFlow:
    """Unit-capacity max-flow on the vertex-split graph.

    Vertex v becomes v_in = 2v and v_out = 2v + 1 joined by a capacity-1
    arc, so augmenting paths are internally vertex-disjoint.  Arcs are
    stored once with a paired reverse arc; capacities live in ``cap``.
    """

    def __init__(self, g: Digraph):
        self.n = g.n
        self.adj = [[] for _ in range(2 * g.n)]
        self.to = []
        self.cap = []
        for v in range(g.n):
            self._arc(2 * v, 2 * v + 1, 1)
        for u in range(g.n):
            for v in set(g.succ[u]):
                self._arc(2 * u + 1, 2 * v, 1)

    def _arc(self, a, b, c):
        self.adj[a].append(len(self.to))
        self.to.append(b)
        self.cap.append(c)
        self.adj[b].append(len(self.to))
        self.to.append(a)
        self.cap.append(0)

    def max_flow(self, s: int, t: int, limit: int) -> int:
        # s, t are split-node ids (use u_out, v_in for vertex pairs)
        flow = 0
        to, cap, adj = self.to, self.cap, self.adj
        while flow < limit:
            parent = [-1] * (2 * self.n)
            parent[s] = -2
            q = deque([s])
            found = False
            while q:
                u = q.popleft()
                for e in adj[u]:
                    v = to[e]
                    if cap[e] > 0 and parent[v] == -1:
                        parent[v] = e
                        if v == t:
                            found = True
                            q.clear()
                            break
                        q.append(v)
            if not found:
                break
            v = t
            while v != s:
                e = parent[v]
                cap[e] -= 1
                cap[e ^ 1] += 1
                v = to[e ^ 1]
            flow += 1
        return flow

    def reset(self):
        for e in range(0, len(self.cap), 2):
            total = self.cap[e] + self.cap[e ^ 1]
            self.cap[e] = total
            self.cap[e ^ 1] = 0


def local_connectivity(g: Digraph, u: int, v: int, limit: int | None = None) -> int:
    """Maximum number of internally vertex-disjoint u -> v paths."""
    if u == v:
        raise GraphError("local connectivity needs distinct endpoints")
    net = _SplitFlow(g)
    cap = g.n if limit is None else limit
    return net.max_flow(2 * u + 1, 2 * v, cap)


def vertex_connectivity(g: Digraph) -> int:
    """Minimum vertices whose removal breaks strong connectivity.

    By Menger this is the minimum over non-adjacent ordered pairs of the
    number of vertex-disjoint paths.  A minimum cut has at most
    min-degree vertices, so scanning flows to and from min-degree + 1
    sample vertices is guaranteed to see a vertex outside any minimum
    cut; that keeps the flow count linear instead of quadratic.
    """
    if not g.is_simple():
        raise GraphError("vertex connectivity is defined on simple digraphs")
    if g.n < 2:
        raise GraphError("vertex connectivity needs n >= 2")
    delta = min(min(len(s) for s in g.succ), min(len(p) for p in g.pred))
    sample = range(min(delta + 1, g.n))
    best = g.n - 1
    net = _SplitFlow(g)
    for w in sample:
        succ_w = set(g.succ[w])
        pred_w = set(g.pred[w])
        for u in range(g.n):
            if u == w:
                continue
            if u not in succ_w:
                net.reset()
                best = min(best, net.max_flow(2 * w + 1, 2 * u, best + 1))
            if u not in pred_w:
                net.reset()
                best = min(best, net.max_flow(2 * u + 1, 2 * w, best + 1))
    return best


# -- fault diameter --------------------------------------------------------


class _MinSumPaths:
    """Min-cost flow specialised to unit costs and unit vertex capacities.

    Successive shortest paths with Dijkstra and Johnson potentials; all
    ties broken by node id so results are deterministic.  Used to find
    f+1 vertex-disjoint paths of minimum total length.
    """

    def __init__(self, g: Digraph):
        self.g = g
        self.n2 = 2 * g.n
        self.adj = [[] for _ in range(self.n2)]
        self.to = []
        self.cap0 = []
        self.cost = []
        for v in range(g.n):
            self._arc(2 * v, 2 * v + 1, 1, 0)
        for u in range(g.n):
            for v in sorted(set(g.succ[u])):
                self._arc(2 * u + 1, 2 * v, 1, 1)
        self.cap = list(self.cap0)

    def _arc(self, a, b, c, w):
        self.adj[a].append(len(self.to))
        self.to.append(b)
        self.cap0.append(c)
        self.cost.append(w)
        self.adj[b].append(len(self.to))
        self.to.append(a)
        self.cap0.append(0)
        self.cost.append(-w)

    def paths(self, s: int, t: int, count: int):
        """Return ``count`` vertex-disjoint s -> t paths minimising the
        summed length, as lists of original vertex ids."""
        src, dst = 2 * s + 1, 2 * t
        self.cap = list(self.cap0)
        to, cap, cost, adj = self.to, self.cap, self.cost, self.adj
        inf = float("inf")
        pot = [0] * self.n2
        for _ in range(count):
            dist = [inf] * self.n2
            parent = [-1] * self.n2
            dist[src] = 0
            heap = [(0, src)]
            while heap:
                du, u = heapq.heappop(heap)
                if du > dist[u]:
                    continue
                for e in adj[u]:
                    if cap[e] <= 0:
                        continue
                    v = to[e]
                    nd = du + cost[e] + pot[u] - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        parent[v] = e
                        heapq.heappush(heap, (nd, v))
            if dist[dst] == inf:
                raise DisconnectedError(
                    f"fewer than {count} vertex-disjoint paths exist"
                )
            for v in range(self.n2):
                if dist[v] < inf:
                    pot[v] += dist[v]
            v = dst
            while v != src:
                e = parent[v]
                cap[e] -= 1
                cap[e ^ 1] += 1
                v = to[e ^ 1]
        return self._decompose(src, dst, count)

    def _decompose(self, src, dst, count):
        # net unit flow decomposes into vertex-disjoint paths; follow it
        flow_out = [[] for _ in range(self.n2)]
        for e in range(0, len(self.to), 2):
            if self.cap0[e] - self.cap[e] > 0:
                flow_out[self.to[e ^ 1]].append(self.to[e])
        for outs in flow_out:
            outs.sort(reverse=True)
        paths = []
        for _ in range(count):
            path = [src // 2]
            node = flow_out[src].pop()
            while node != dst:
                path.append(node // 2)
                node = flow_out[node].pop()
                node = flow_out[node].pop()  # v_in -> v_out arc
            path.append(dst // 2)
            paths.append(path)
        return paths


def fault_diameter_estimate(g: Digraph, f: int, pairs=None):
    """Heuristic fault-diameter bound from min-sum disjoint paths.

    For every ordered pair, finds f+1 vertex-disjoint paths minimising
    the total length.  Returns ``(avg_lower, delta_hat)`` where
    ``delta_hat`` is the longest path seen over all pairs (an upper
    bound on the fault diameter) and ``avg_lower`` is the largest
    per-pair mean path length, rounded up to an integer since the fault
    diameter is integral (a lower bound on the exact min-max value).

    ``pairs`` restricts the scan to the given ordered pairs; the result
    is then an estimate over a sample, not a bound.
    """
    if f < 0:
        raise GraphError("resilience f must be non-negative")
    solver = _MinSumPaths(g)
    delta_hat = 0
    avg_lower = 0
    if pairs is None:
        pairs = ((u, v) for u in range(g.n) for v in range(g.n) if u != v)
    for u, v in pairs:
        try:
            paths = solver.paths(u, v, f + 1)
        except DisconnectedError:
            raise DisconnectedError(
                f"f={f} is not below the connectivity between {u} and {v}"
            ) from None
        lengths = [len(p) - 1 for p in paths]
        delta_hat = max(delta_hat, max(lengths))
        avg_lower = max(avg_lower, -(-sum(lengths) // (f + 1)))
    return avg_lower, delta_hat


def fault_diameter_bruteforce(g: Digraph, f: int) -> int:
    """Exact fault diameter by exhausting all size-f vertex removals.

    Test oracle; guarded to n <= 12 because of the combinatorial cost.
    """
    if g.n > 12:
        raise GraphError("brute-force fault diameter is limited to n <= 12")
    if f < 0 or f >= g.n - 1:
        raise GraphError("need 0 <= f < n - 1")
    worst = 0
    for removed in combinations(range(g.n), f):
        keep = [v for v in range(g.n) if v not in removed]
        sub = g.induced(keep)
        worst = max(worst, diameter(sub))
    return worst


def moore_lower_bound(n: int, d: int) -> int:
    """Smallest possible diameter of an n-vertex digraph of degree d.

    ceil(log_d(n(d-1) + d)) - 1, evaluated in integer arithmetic.
    """
    if d < 2:
        raise GraphError("Moore bound needs d >= 2")
    target = n * (d - 1) + d
    e, p = 0, 1
    while p < target:
        p *= d
        e += 1
    return e - 1


# -- reliability -----------------------------------------------------------


@dataclass(frozen=True)
class ReliabilityParams:
    """Exponential-lifetime failure model: MTTF and mission period."""

    mttf: float
    delta: float

    def __post_init__(self):
        if self.mttf <= 0 or self.delta < 0:
            raise GraphError("mttf must be positive and delta non-negative")

    @property
    def p_f(self) -> float:
        """Per-server failure probability over the mission period."""
        return -math.expm1(-self.delta / self.mttf)


def reliability(n: int, k: int, p_f: float) -> float:
    """Probability that fewer than k of n servers fail.

    Binomial tail sum over i = 0..k-1 with per-server failure
    probability ``p_f``; evaluated by term recurrence and compensated
    summation so it stays accurate up to n ~ 4096.
    """
    if not 0.0 <= p_f <= 1.0:
        raise GraphError("p_f must lie in [0, 1]")
    if not 1 <= k <= n:
        raise GraphError("need 1 <= k <= n")
    if p_f == 0.0:
        return 1.0
    if p_f == 1.0:
        return 0.0
    terms = []
    t = (1.0 - p_f) ** n
    ratio = p_f / (1.0 - p_f)
    for i in range(k):
        terms.append(t)
        t *= (n - i) / (i + 1) * ratio
    return min(1.0, math.fsum(terms))


def choose_degree(n: int, target: float, rel: ReliabilityParams) -> int:
    """Smallest degree d >= 3 with a constructible G_S(n, d) overlay whose
    optimal connectivity (k = d) meets the reliability target."""
    if target >= 1.0:
        raise GraphError("reliability target must be below 1")
    p_f = rel.p_f
    d = 3
    while 2 * d <= n:
        if reliability(n, d, p_f) >= target:
            return d
        d += 1
    raise GraphError(f"no degree d <= n/2 reaches reliability {target} for n={n}")


# -- reporting -------------------------------------------------------------


@dataclass
class GraphReport:
    """Summary of an overlay's fault-tolerance parameters."""

    n: int
    d: int
    diameter: int
    connectivity: int
    moore_lower: int
    delta_hat: dict[int, int] = field(default_factory=dict)
    avg_lower: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.connectivity > self.d:
            raise GraphError("connectivity cannot exceed the degree")
        if self.diameter < self.moore_lower:
            raise GraphError("diameter below the Moore lower bound")
        for f, dh in self.delta_hat.items():
            if self.avg_lower.get(f, 0) > dh:
                raise GraphError("average lower bound exceeds delta_hat")


def analyze(g: Digraph, resilience=(), sample_pairs=None, seed=0) -> GraphReport:
    """Compute a GraphReport; ``resilience`` lists the f values to bound.

    For n > 128 with ``sample_pairs`` set, fault-diameter values are
    estimated over a random pair subsample (an estimate, not a bound).
    """
    d = g.degree()
    rep = GraphReport(
        n=g.n,
        d=d,
        diameter=diameter(g),
        connectivity=vertex_connectivity(g),
        moore_lower=moore_lower_bound(g.n, d),
    )
    pair_list = None
    if sample_pairs is not None:
        import random

        rng = random.Random(seed)
        all_pairs = [(u, v) for u in range(g.n) for v in range(g.n) if u != v]
        pair_list = rng.sample(all_pairs, min(sample_pairs, len(all_pairs)))
    for f in resilience:
        if f >= rep.connectivity:
            raise GraphError(f"f={f} must stay below connectivity {rep.connectivity}")
        avg, dh = fault_diameter_estimate(g, f, pairs=pair_list)
        rep.avg_lower[f] = avg
        rep.delta_hat[f] = dh
    return rep


# -- serialisation ---------------------------------------------------------


def to_dot(g: Digraph, name: str = "g") -> str:
    lines = [f"digraph {name} {{"]
    for u, v in g.edges():
        lines.append(f"  {u} -> {v};")
    lines.append("}")
    return "\n".join(lines) + "\n"


_DOT_EDGE = re.compile(r"(\d+)\s*->\s*(\d+)\s*;")


def from_dot(text: str) -> Digraph:
    body = text[text.index("{") + 1 : text.rindex("}")]
    edges = [(int(a), int(b)) for a, b in _DOT_EDGE.findall(body)]
    if not edges:
        raise GraphError("no edges found in DOT input")
    n = max(max(u, v) for u, v in edges) + 1
    succ = [[] for _ in range(n)]
    for u, v in edges:
        succ[u].append(v)
    return Digraph(succ)


def to_adjacency(g: Digraph) -> str:
    """Stable text form: first line "n d", then "<id>: <succ> ..."."""
    lines = [f"{g.n} {g.degree()}"]
    for u in range(g.n):
        lines.append(f"{u}: " + " ".join(str(v) for v in g.succ[u]))
    return "\n".join(lines) + "\n"


def from_spec(spec: str) -> Digraph:
    """Build a digraph from "complete:N", "binomial:N", "gs:N:D" or
    "@path" pointing at an adjacency file."""
    if spec.startswith("@"):
        with open(spec[1:], encoding="utf-8") as fh:
            return from_adjacency(fh.read())
    parts = spec.split(":")
    kind = parts[0]
    if kind == "complete" and len(parts) == 2:
        return build_complete(int(parts[1]))
    if kind == "binomial" and len(parts) == 2:
        return build_binomial(int(parts[1]))
    if kind == "gs" and len(parts) == 3:
        return build_gs(int(parts[1]), int(parts[2]))
    raise GraphError(f"bad digraph spec {spec!r}")


def from_adjacency(text: str) -> Digraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if len(header) != 2:
        raise GraphError('adjacency header must be "n d"')
    n, d = int(header[0]), int(header[1])
    succ = [[] for _ in range(n)]
    for ln in lines[1:]:
        head, _, rest = ln.partition(":")
        u = int(head)
        succ[u] = [int(tok) for tok in rest.split()]
    g = Digraph(succ)
    if g.degree() != d:
        raise GraphError(f"adjacency header degree {d} != actual {g.degree()}")
    return g
