import itertools
import math
import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lemica.exceptions import BudgetInfeasibleError, ContractViolation, OracleTooLargeError
from lemica.experiment import random_graph
from lemica.graph import ScheduleGraph, feasible_budgets
from lemica.planner import (
    bottleneck_table,
    compare_lex,
    count_paths,
    enumerate_optimal,
    iter_paths,
    plan_lexmin,
    plan_shortest,
)

HAND_FIXTURE = ScheduleGraph(
    5,
    3,
    {(0, 2): 0.9, (0, 3): 1.2, (1, 3): 0.5, (2, 4): 0.4, (3, 5): 0.2, (2, 5): 1.0, (1, 4): 0.8},
)


def brute_paths(graph, B):
    """All B-edge paths by choosing interior nodes directly."""
    T = graph.num_steps
    for mids in itertools.combinations(range(1, T), B - 1):
        nodes = (0,) + mids + (T,)
        if all(graph.has_edge(a, b) for a, b in zip(nodes, nodes[1:])):
            yield nodes


def cache_weights(graph, nodes):
    return [graph.weight(a, b) for a, b in zip(nodes, nodes[1:]) if b - a >= 2]


def sum_optimum(graph, B):
    return min(math.fsum(cache_weights(graph, n)) for n in brute_paths(graph, B))


class TestCompareLex:
    def test_second_entry_decides(self):
        assert compare_lex([0.5, 0.2], [0.5, 0.1]) == 1

    def test_prefix_is_smaller(self):
        assert compare_lex([0.5], [0.5, 0.0]) == -1

    def test_empty_is_smallest(self):
        assert compare_lex([], [0.3]) == -1
        assert compare_lex([], []) == 0

    def test_unsorted_rejected(self):
        with pytest.raises(ContractViolation):
            compare_lex([0.1, 0.2], [0.3])

    def test_no_epsilon(self):
        assert compare_lex([0.3], [math.nextafter(0.3, 1.0)]) == -1

    @given(st.lists(st.floats(0, 1), max_size=6), st.lists(st.floats(0, 1), max_size=6))
    def test_agrees_with_multiset_rule(self, a, b):
        # larger multiplicity at the largest differing value loses
        a, b = sorted(a, reverse=True), sorted(b, reverse=True)
        values = sorted(set(a) | set(b), reverse=True)
        expected = 0
        for v in values:
            if a.count(v) != b.count(v):
                expected = -1 if a.count(v) < b.count(v) else 1
                break
        assert compare_lex(a, b) == expected


class TestPlanLexmin:
    def test_full_budget_is_all_units(self):
        g = random_graph(random.Random(3), 12, 4)
        p = plan_lexmin(g, 12)
        assert p.nodes == tuple(range(13)) and p.signature == ()

    def test_hand_fixture_frozen(self):
        p = plan_lexmin(HAND_FIXTURE, 3)
        assert p.nodes == (0, 1, 3, 5)
        assert p.signature == (0.5, 0.2)

    def test_hand_fixture_matches_enumeration(self):
        sig, path = enumerate_optimal(HAND_FIXTURE, 3)
        assert (sig, path.nodes) == ((0.5, 0.2), (0, 1, 3, 5))
        assert plan_lexmin(HAND_FIXTURE, 3) == path

    def test_infeasible_budget(self):
        g = random_graph(random.Random(0), 30, 8)
        with pytest.raises(BudgetInfeasibleError) as err:
            plan_lexmin(g, 3)
        assert (err.value.budget, err.value.min_budget, err.value.max_budget) == (3, 4, 30)
        with pytest.raises(BudgetInfeasibleError):
            plan_lexmin(g, 31)

    def test_bottleneck_table_initialisation(self):
        best = bottleneck_table(HAND_FIXTURE, 3)
        assert best[0, 0] == 0 and all(math.isinf(v) for v in best[0, 1:])
        assert best[3, 5] == 0.5

    def test_tie_break_on_equal_signatures(self):
        g = ScheduleGraph(4, 2, {(0, 2): 0.5, (1, 3): 0.5, (2, 4): 0.5})
        # candidates (0,1,2,4), (0,1,3,4), (0,2,3,4) all have signature (0.5,)
        assert plan_lexmin(g, 3).nodes == (0, 1, 2, 4)

    def test_zero_weight_cache_edge_counts(self):
        # a cached segment with zero error still lengthens the signature
        g = ScheduleGraph(4, 2, {(0, 2): 0.0, (2, 4): 0.0, (1, 3): 0.0})
        assert plan_lexmin(g, 3).signature == (0.0,)
        assert plan_lexmin(g, 2).signature == (0.0, 0.0)

    def test_determinism_across_threads(self):
        g = random_graph(random.Random(5), 30, 8)
        results = []
        threads = [threading.Thread(target=lambda: results.append(plan_lexmin(g, 12))) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(results)) == 1 and results[0] == plan_lexmin(g, 12)


class TestPlanShortest:
    def test_full_budget(self):
        g = random_graph(random.Random(3), 10, 3)
        p = plan_shortest(g, 10)
        assert p.nodes == tuple(range(11)) and p.total_error == 0

    def test_hand_fixture(self):
        p = plan_shortest(HAND_FIXTURE, 3)
        assert p.nodes == (0, 1, 3, 5)
        assert math.isclose(p.total_error, 0.7)
        assert math.isclose(sum_optimum(HAND_FIXTURE, 3), 0.7)


class TestEnumeration:
    def test_single_path(self):
        g = ScheduleGraph(3, 1, {})
        assert list(iter_paths(g, 3)) == [(0, 1, 2, 3)]

    def test_composition_count(self):
        g = random_graph(random.Random(1), 6, 3)
        assert count_paths(g, 3) == 7 == len(list(iter_paths(g, 3)))

    def test_iter_matches_combinations(self):
        g = random_graph(random.Random(2), 9, 3)
        for B in range(3, 10):
            assert sorted(iter_paths(g, B)) == sorted(brute_paths(g, B))

    def test_guard(self, monkeypatch):
        import lemica.planner as planner

        monkeypatch.setattr(planner, "ORACLE_PATH_LIMIT", 5)
        with pytest.raises(OracleTooLargeError):
            enumerate_optimal(random_graph(random.Random(1), 6, 3), 3)


graphs = st.builds(
    lambda seed, T, L: random_graph(random.Random(seed), T, L),
    st.integers(0, 2**32), st.integers(1, 12), st.integers(1, 5),
)


@settings(max_examples=150, deadline=None)
@given(graph=graphs, data=st.data())
def test_lexmin_matches_enumeration(graph, data):
    lo, hi = feasible_budgets(graph)
    B = data.draw(st.integers(lo, hi))
    sig, path = enumerate_optimal(graph, B)
    got = plan_lexmin(graph, B)
    assert got.signature == sig
    assert got.nodes == path.nodes
    assert len(got.nodes) == B + 1 and got.nodes[0] == 0 and got.nodes[-1] == graph.num_steps


@settings(max_examples=150, deadline=None)
@given(graph=graphs, data=st.data())
def test_bottleneck_dominance_and_sandwich(graph, data):
    lo, hi = feasible_budgets(graph)
    B = data.draw(st.integers(lo, hi))
    lex, short = plan_lexmin(graph, B), plan_shortest(graph, B)
    worst_case = min(max(cache_weights(graph, n), default=0.0) for n in brute_paths(graph, B))
    assert lex.max_error == worst_case == bottleneck_table(graph, B)[B, graph.num_steps]
    assert lex.max_error <= short.max_error
    assert math.fsum(short.signature) <= math.fsum(lex.signature) + 1e-12
    assert math.isclose(math.fsum(short.signature), sum_optimum(graph, B), abs_tol=1e-12)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32), T=st.integers(2, 14), L=st.integers(2, 5))
def test_bottleneck_monotone_in_budget_for_monotone_weights(seed, T, L):
    rng = random.Random(seed)
    weights = {}
    for i in range(T):
        w = 0.0
        for j in range(i + 2, min(i + L, T) + 1):
            w += rng.random()
            weights[(i, j)] = w
    g = ScheduleGraph(T, L, weights)
    assert all(weights[(i, j)] <= weights[(i, j + 1)] for (i, j) in weights if (i, j + 1) in weights)
    lo, hi = feasible_budgets(g)
    maxima = [plan_lexmin(g, B).max_error for B in range(lo, hi + 1)]
    assert all(b <= a for a, b in zip(maxima, maxima[1:]))
