import itertools

import numpy as np
import pytest

from arborparse import (
    BudgetExceededError,
    EnumerationBudget,
    SolutionVector,
    alignment_weight,
    build_graph,
    check_solution,
    enumerate_alignments,
    enumerate_feasible,
    exact_log_partition,
    exact_map,
    parse_grammar,
    parse_program,
    serialize_ast,
    solution_to_ast,
    weight_of,
)
from arborparse.graph import InfeasibleSolutionError
from arborparse.synthetic import random_grammar, random_weighted_graph

TOY = parse_grammar("type e\ntag A e\ntag P e e=1")
ENTITY = parse_grammar("type e\ntag A e")


class TestEnumerateFeasible:
    def test_single_word_single_entity(self):
        g = build_graph(1, ENTITY)
        sols = list(enumerate_feasible(g))
        assert len(sols) == 1
        assert serialize_ast(solution_to_ast(g, sols[0])) == "A"

    def test_two_words_hand_count(self):
        g = build_graph(2, TOY)
        sols = list(enumerate_feasible(g))
        assert len(sols) == 4
        programs = sorted(serialize_ast(solution_to_ast(g, z)) for z in sols)
        assert programs == ["A", "A", "P(A)", "P(A)"]

    def test_matches_exhaustive_arc_subset_filter(self):
        # independent ground truth: filter all 2^14 arc subsets of the tiny
        # instance through the feasibility checker
        g = build_graph(2, TOY)
        expected = set()
        for r in range(0, g.num_arcs + 1):
            if r > 4:
                break
            for arcs in itertools.combinations(range(g.num_arcs), r):
                z = SolutionVector.from_arcs(g, arcs)
                if not z.is_integral():
                    continue
                try:
                    check_solution(g, z)
                except InfeasibleSolutionError:
                    continue
                expected.add(tuple(sorted(arcs)))
        got = {
            tuple(int(a) for a in np.nonzero(np.round(z.y) == 1)[0])
            for z in enumerate_feasible(g)
        }
        assert got == expected

    def test_deterministic_order(self):
        g = build_graph(2, TOY)
        first = [tuple(np.nonzero(z.y)[0]) for z in enumerate_feasible(g)]
        second = [tuple(np.nonzero(z.y)[0]) for z in enumerate_feasible(g)]
        assert first == second

    def test_restriction_is_a_bijection(self):
        from arborparse import restrict_solution

        g = build_graph(3, TOY)
        cores = []
        for z in enumerate_feasible(g):
            full = {int(a) for a in np.nonzero(np.round(z.y) == 1)[0]}
            cores.append(frozenset(restrict_solution(g, full)))
        assert len(set(cores)) == len(cores)

    def test_budget_on_length(self):
        g = build_graph(5, TOY)
        with pytest.raises(BudgetExceededError):
            list(enumerate_feasible(g))

    def test_budget_on_structures(self):
        g = build_graph(2, TOY)
        budget = EnumerationBudget(max_structures=2)
        with pytest.raises(BudgetExceededError):
            list(enumerate_feasible(g, budget))


class TestExactMap:
    def test_zero_weights(self):
        g = build_graph(2, TOY)
        w, z = exact_map(g)
        assert w == 0.0 and z is not None

    def test_walkthrough_instance(self, list_states_graph):
        w, z = exact_map(list_states_graph)
        assert w == pytest.approx(2.5)
        assert serialize_ast(solution_to_ast(list_states_graph, z)) == "state_all"

    def test_beats_every_feasible_solution(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            grammar = random_grammar(rng, num_tags=2, num_types=1)
            g = random_weighted_graph(grammar, 3, rng)
            w, _ = exact_map(g)
            assert all(weight_of(g, z) <= w + 1e-12 for z in enumerate_feasible(g))


class TestExactLogPartition:
    def test_single_solution(self):
        g = build_graph(1, ENTITY)
        sols = list(enumerate_feasible(g))
        assert exact_log_partition(g) == pytest.approx(weight_of(g, sols[0]))

    def test_two_equal_weight_solutions(self):
        grammar = parse_grammar("type e\ntag A e\ntag B e")
        g = build_graph(1, grammar)
        # two single-entity parses, both weight 0
        assert exact_log_partition(g) == pytest.approx(np.log(2.0))

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(4)
        grammar = random_grammar(rng, num_tags=3, num_types=1)
        g = random_weighted_graph(grammar, 3, rng)
        direct = np.log(sum(np.exp(weight_of(g, z)) for z in enumerate_feasible(g)))
        assert exact_log_partition(g) == pytest.approx(direct, rel=1e-10)


class TestEnumerateAlignments:
    def test_single_vertex_two_words(self):
        g = build_graph(2, TOY)
        ast = parse_program("A", TOY)
        assert len(list(enumerate_alignments(g, ast, constrained=False))) == 2
        assert len(list(enumerate_alignments(g, ast, constrained=True))) == 2

    def test_hand_count_two_vertices(self):
        g = build_graph(2, TOY)
        ast = parse_program("P(A)", TOY)
        assert len(list(enumerate_alignments(g, ast, constrained=False))) == 4
        assert len(list(enumerate_alignments(g, ast, constrained=True))) == 2

    def test_same_cluster_pairs_have_no_weight(self):
        g = build_graph(2, TOY)
        ast = parse_program("P(A)", TOY)
        weights = [
            alignment_weight(g, ast, al)
            for al in enumerate_alignments(g, ast, constrained=False)
        ]
        assert sum(np.isneginf(weights)) == 2
