import math
from fractions import Fraction
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from allconcur import digraph as dg


def brute_connectivity(g):
    """Oracle: smallest vertex set whose removal breaks strong connectivity."""
    for size in range(g.n - 1):
        for cut in combinations(range(g.n), size):
            keep = [v for v in range(g.n) if v not in cut]
            if len(keep) <= 1 or not dg.is_strongly_connected(g.induced(keep)):
                return size
    return g.n - 1


class TestComplete:
    def test_smallest(self):
        g = dg.build_complete(2)
        assert g.edge_count() == 2
        assert g.degree() == 1
        assert dg.diameter(g) == 1

    def test_k4(self):
        g = dg.build_complete(4)
        assert g.edge_count() == 12
        assert dg.vertex_connectivity(g) == 3

    def test_k8_fault_diameter_stays_one(self):
        # removing any f < 7 vertices leaves a complete digraph
        g = dg.build_complete(8)
        assert dg.diameter(g) == 1
        for f in range(7):
            assert dg.fault_diameter_bruteforce(g, f) == 1

    def test_rejects_tiny(self):
        with pytest.raises(dg.GraphError):
            dg.build_complete(1)


class TestBinomial:
    def test_benchmark_parameters(self):
        g = dg.build_binomial(12)
        assert g.degree() == 6
        assert dg.vertex_connectivity(g) == 6
        assert dg.diameter(g) == 2

    def test_wraparound_collapses_to_complete(self):
        assert dg.build_binomial(4) == dg.build_complete(4)

    def test_successors_of_zero_n9(self):
        # offsets +-1, +-2, +-4, +-8 mod 9
        g = dg.build_binomial(9)
        assert g.succ[0] == (1, 2, 4, 5, 7, 8)

    def test_rejects_tiny(self):
        with pytest.raises(dg.GraphError):
            dg.build_binomial(2)


class TestDeBruijn:
    def test_m2_d3_edges(self):
        g = dg.build_de_bruijn(2, 3)
        assert g.succ[0] == (0, 0, 1)
        assert g.succ[1] == (0, 1, 1)

    def test_m4_d2_direct_evaluation(self):
        g = dg.build_de_bruijn(4, 3)
        for u in range(4):
            assert g.succ[u] == tuple(sorted((3 * u + a) % 4 for a in range(3)))

    def test_self_loop_counts(self):
        for m, d in [(2, 3), (3, 4), (4, 3), (5, 7), (7, 3)]:
            g = dg.build_de_bruijn(m, d)
            lo, hi = d // m, -(-d // m)
            counts = [g.self_loop_count(u) for u in range(m)]
            assert all(c >= lo for c in counts)
            assert counts[0] == hi and counts[m - 1] == hi
            assert g.edge_count() == m * d


class TestResolveSelfLoops:
    def test_m2_d3(self):
        g = dg.resolve_self_loops(dg.build_de_bruijn(2, 3))
        assert not g.has_self_loops()
        assert g.succ[0] == (1, 1, 1)
        assert g.succ[1] == (0, 0, 0)

    def test_no_loops_is_identity(self):
        cycle = dg.Digraph([[1], [2], [0]])
        assert dg.resolve_self_loops(cycle) is cycle

    def test_preserves_edge_count_and_regularity(self):
        for m, d in [(2, 3), (2, 4), (3, 3), (4, 3), (5, 4), (7, 3), (12, 5)]:
            g = dg.resolve_self_loops(dg.build_de_bruijn(m, d))
            assert g.edge_count() == m * d
            assert not g.has_self_loops()
            assert all(g.out_degree(u) == d for u in range(m))
            assert all(g.in_degree(u) == d for u in range(m))

    def test_rejects_inconsistent_loops(self):
        bad = dg.Digraph([[0, 0, 1], [0, 1]])  # degrees differ
        with pytest.raises(dg.GraphError):
            dg.resolve_self_loops(bad)


class TestLineDigraph:
    def test_cycle_fixed_point(self):
        cycle = dg.Digraph([[1], [2], [0]])
        lg = dg.line_digraph(cycle)
        assert lg.n == 3
        assert dg.diameter(lg) == 2  # still a directed 3-cycle

    def test_k2(self):
        k2 = dg.build_complete(2)
        lg = dg.line_digraph(k2)
        assert lg.n == 2
        assert lg.succ == ((1,), (0,))

    def test_resolved_de_bruijn_2_3(self):
        core = dg.resolve_self_loops(dg.build_de_bruijn(2, 3))
        lg = dg.line_digraph(core)
        assert lg.n == 6

    def test_regularity_preserved(self):
        for m, d in [(2, 3), (3, 3), (4, 3), (5, 4)]:
            core = dg.resolve_self_loops(dg.build_de_bruijn(m, d))
            lg = dg.line_digraph(core)
            assert all(lg.out_degree(v) == d for v in range(lg.n))
            assert all(lg.in_degree(v) == d for v in range(lg.n))

    def test_rejects_self_loops(self):
        with pytest.raises(dg.GraphError):
            dg.line_digraph(dg.Digraph([[0, 1], [0]]))


class TestRegularOverlay:
    def test_small_rows(self):
        assert dg.diameter(dg.build_gs(6, 3)) == 2
        assert dg.diameter(dg.build_gs(11, 3)) == 3
        assert dg.moore_lower_bound(11, 3) == 2

    def test_optimally_connected_16_4(self):
        assert dg.vertex_connectivity(dg.build_gs(16, 4)) == 4

    def test_connectivity_matches_bruteforce_8_3(self):
        g = dg.build_gs(8, 3)
        assert brute_connectivity(g) == 3
        assert dg.vertex_connectivity(g) == 3

    def test_rejects_bad_parameters(self):
        with pytest.raises(dg.GraphError):
            dg.build_gs(5, 3)
        with pytest.raises(dg.GraphError):
            dg.build_gs(10, 2)

    def test_simple_regular_all_small(self):
        for d in (3, 4, 5):
            for n in range(2 * d, 2 * d + 8):
                g = dg.build_gs(n, d)
                assert g.is_simple()
                assert all(g.out_degree(u) == d for u in range(n))
                assert all(g.in_degree(u) == d for u in range(n))


class TestMetrics:
    def test_diameter_disconnected(self):
        with pytest.raises(dg.DisconnectedError):
            dg.diameter(dg.Digraph([[1], [0], [0]]))  # 2 unreachable

    def test_connectivity_k5(self):
        assert dg.vertex_connectivity(dg.build_complete(5)) == 4

    def test_connectivity_matches_bruteforce_on_small_graphs(self):
        graphs = [
            dg.build_binomial(6),
            dg.build_binomial(7),
            dg.build_gs(6, 3),
            dg.build_gs(7, 3),
            dg.build_gs(9, 3),
            dg.Digraph([[1], [2], [3], [0]]),  # directed 4-cycle, k=1
        ]
        for g in graphs:
            assert dg.vertex_connectivity(g) == brute_connectivity(g)

    def test_moore_lower_bound_values(self):
        assert dg.moore_lower_bound(512, 8) == 3
        assert dg.moore_lower_bound(1024, 11) == 3
        assert dg.moore_lower_bound(6, 3) == 2

    def test_moore_exact_power(self):
        # n(d-1)+d an exact power of d: ceil(log) must not round up
        assert dg.moore_lower_bound(2, 2) == 1  # 2*1+2 = 4 = 2^2


class TestFaultDiameter:
    def test_k4_f1(self):
        g = dg.build_complete(4)
        avg, hat = dg.fault_diameter_estimate(g, 1)
        assert (avg, hat) == (2, 2)
        assert dg.fault_diameter_bruteforce(g, 1) == 1

    def test_f0_equals_diameter(self):
        for g in (dg.build_binomial(9), dg.build_gs(8, 3), dg.build_complete(5)):
            avg, hat = dg.fault_diameter_estimate(g, 0)
            assert hat == dg.diameter(g)
            assert avg == hat

    def test_binomial12_f5(self):
        g = dg.build_binomial(12)
        avg, hat = dg.fault_diameter_estimate(g, 5)
        assert hat == 4
        assert avg >= 3

    def test_directed_cycle_fault_diameter(self):
        cycle = dg.Digraph([[1], [2], [3], [4], [0]])
        assert dg.fault_diameter_bruteforce(cycle, 0) == 4  # n - 1

    def test_infeasible_f(self):
        g = dg.build_gs(8, 3)
        with pytest.raises(dg.DisconnectedError):
            dg.fault_diameter_estimate(g, 3)  # k = 3

    def test_estimate_bounds_bruteforce(self):
        g = dg.build_gs(8, 3)
        for f in range(3):
            avg, hat = dg.fault_diameter_estimate(g, f)
            exact = dg.fault_diameter_bruteforce(g, f)
            assert exact <= hat
            assert avg <= hat

    def test_bruteforce_size_guard(self):
        with pytest.raises(dg.GraphError):
            dg.fault_diameter_bruteforce(dg.build_binomial(13), 1)


def exact_binomial_tail(n, k, p):
    """Oracle: arbitrary-precision tail sum of the binomial distribution."""
    pf = Fraction(p)
    return sum(
        Fraction(math.comb(n, i)) * pf**i * (1 - pf) ** (n - i) for i in range(k)
    )


class TestReliability:
    def test_boundaries(self):
        assert dg.reliability(16, 4, 0.0) == 1.0
        assert dg.reliability(16, 1, 0.25) == pytest.approx(0.75**16)
        assert dg.reliability(16, 4, 1.0) == 0.0

    def test_matches_exact_tail(self):
        rel = dg.ReliabilityParams(mttf=2 * 365 * 24 * 3600.0, delta=24 * 3600.0)
        got = dg.reliability(64, 5, rel.p_f)
        want = exact_binomial_tail(64, 5, rel.p_f)
        assert abs(got - float(want)) < 1e-12

    def test_failure_probability_range(self):
        rel = dg.ReliabilityParams(mttf=100.0, delta=1.0)
        assert rel.p_f == pytest.approx(1 - math.exp(-0.01))
        assert 0 <= rel.p_f < 1

    @given(
        n=st.integers(2, 200),
        k=st.integers(1, 12),
        p1=st.floats(0.0, 1.0),
        p2=st.floats(0.0, 1.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_monotone(self, n, k, p1, p2):
        k = min(k, n)
        lo, hi = sorted((p1, p2))
        assert dg.reliability(n, k, lo) >= dg.reliability(n, k, hi) - 1e-12
        if k < n:
            assert dg.reliability(n, k, p1) <= dg.reliability(n, k + 1, p1) + 1e-12


class TestChooseDegree:
    REL = dg.ReliabilityParams(mttf=2 * 365 * 24 * 3600.0, delta=24 * 3600.0)

    def test_published_sizings(self):
        target = 1 - 1e-6
        assert dg.choose_degree(256, target, self.REL) == 7
        assert dg.choose_degree(512, target, self.REL) == 8

    def test_zero_target_gives_minimum_degree(self):
        assert dg.choose_degree(64, 0.0, self.REL) == 3

    def test_unreachable_target(self):
        hopeless = dg.ReliabilityParams(mttf=1.0, delta=1000.0)
        with pytest.raises(dg.GraphError):
            dg.choose_degree(8, 1 - 1e-9, hopeless)


class TestQuasiminimality:
    def test_diameter_within_one_of_moore(self):
        for n, d, dia, low in dg.GS_REFERENCE_ROWS:
            if n <= d**3 + d and n <= 128:
                assert low <= dia <= low + 1


class TestReport:
    def test_analyze_binomial12(self):
        rep = dg.analyze(dg.build_binomial(12), resilience=(5,))
        assert rep.connectivity == 6
        assert rep.delta_hat[5] == 4
        assert rep.avg_lower[5] >= 3
        assert rep.moore_lower <= rep.diameter

    def test_delta_hat_nondecreasing_in_f(self):
        g = dg.build_gs(8, 3)
        rep = dg.analyze(g, resilience=(0, 1, 2))
        values = [rep.delta_hat[f] for f in (0, 1, 2)]
        assert values == sorted(values)

    def test_invalid_report_rejected(self):
        with pytest.raises(dg.GraphError):
            dg.GraphReport(n=8, d=3, diameter=1, connectivity=4, moore_lower=2)


class TestSerialisation:
    def test_dot_round_trip(self):
        g = dg.build_gs(8, 3)
        assert dg.from_dot(dg.to_dot(g)) == g

    def test_adjacency_round_trip(self):
        g = dg.build_binomial(9)
        text = dg.to_adjacency(g)
        assert text.splitlines()[0] == "9 6"
        assert dg.from_adjacency(text) == g

    def test_complete2_dot(self):
        text = dg.to_dot(dg.build_complete(2))
        assert text.count("->") == 2

    def test_from_spec(self):
        assert dg.from_spec("gs:8:3") == dg.build_gs(8, 3)
        assert dg.from_spec("complete:4") == dg.build_complete(4)
        with pytest.raises(dg.GraphError):
            dg.from_spec("mystery:4")
