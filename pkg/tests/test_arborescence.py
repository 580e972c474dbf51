import itertools

import numpy as np
import pytest

from arborparse import (
    ContractedGraph,
    build_graph,
    contract,
    lmo_arborescence,
    max_spanning_arborescence,
    parse_grammar,
)
from arborparse.oracle import enumerate_spanning_solutions
from arborparse.synthetic import random_grammar, random_weighted_graph

TOY = parse_grammar("type e\ntag A e\ntag P e e=1")


def brute_force_msa(weight: np.ndarray, root: int = 0):
    """Enumerate all parent functions, keep acyclic ones, maximize."""
    n = weight.shape[0]
    nodes = [v for v in range(n) if v != root]
    best, best_arcs = -np.inf, None
    for parents in itertools.product(range(n), repeat=len(nodes)):
        arcs = list(zip(parents, nodes))
        if any(u == v for u, v in arcs):
            continue
        total = sum(weight[u, v] for u, v in arcs)
        if not np.isfinite(total):
            continue
        parent = dict((v, u) for u, v in arcs)
        ok = True
        for start in nodes:
            seen = set()
            v = start
            while v != root:
                if v in seen:
                    ok = False
                    break
                seen.add(v)
                v = parent[v]
            if not ok:
                break
        if ok and total > best:
            best, best_arcs = total, set(arcs)
    return best, best_arcs


class TestContract:
    def test_walkthrough_weights(self, list_states_graph):
        g = list_states_graph
        theta = np.concatenate([g.mu, g.phi])
        cg = contract(g, theta)
        assert cg.weight[0, 1] == pytest.approx(1.0)
        assert cg.weight[0, 2] == pytest.approx(2.5)
        assert cg.weight[1, 2] == pytest.approx(0.0)
        assert cg.weight[2, 1] == pytest.approx(-1.0)
        # back-references point at the winning original arcs
        assert g.label(int(g.arc_dst[cg.best_arc[0, 2]])) == "state_all"
        assert g.label(int(g.arc_dst[cg.best_arc[0, 1]])) == "loc_1"

    def test_all_zero_ties_take_lowest_arc_index(self):
        g = build_graph(2, TOY)
        cg = contract(g, np.zeros(g.num_vertices + g.num_arcs))
        for i in range(3):
            for j in range(3):
                if cg.best_arc[i, j] >= 0:
                    assert cg.weight[i, j] == 0.0
                    block = g.arcs_by_pair[i, j]
                    assert cg.best_arc[i, j] == block[block >= 0].min()

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 4)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(1, 5)), rng)
            psi = rng.uniform(-1, 1, g.num_vertices + g.num_arcs)
            cg = contract(g, psi)
            psi_x, psi_y = psi[: g.num_vertices], psi[g.num_vertices :]
            for i in range(g.n + 1):
                for j in range(g.n + 1):
                    cands = [
                        a
                        for a in range(g.num_arcs)
                        if g.cluster_of(int(g.arc_src[a])) == i
                        and g.cluster_of(int(g.arc_dst[a])) == j
                    ]
                    if not cands:
                        assert cg.best_arc[i, j] == -1
                        continue
                    best = max(psi_y[a] + psi_x[int(g.arc_dst[a])] for a in cands)
                    assert cg.weight[i, j] == pytest.approx(best)


class TestMsa:
    def test_two_node_chain(self):
        w = np.full((2, 2), -np.inf)
        w[0, 1] = 1.0
        cg = ContractedGraph(num_nodes=2, weight=w, best_arc=np.full((2, 2), -1))
        assert max_spanning_arborescence(cg) == {(0, 1)}

    def test_triangle_with_cycle(self):
        w = np.full((3, 3), -np.inf)
        w[0, 1], w[0, 2] = 1.0, 0.0
        w[1, 2], w[2, 1] = 2.0, 2.0
        cg = ContractedGraph(num_nodes=3, weight=w, best_arc=np.full((3, 3), -1))
        arcs = max_spanning_arborescence(cg)
        assert arcs == {(0, 1), (1, 2)}
        assert sum(w[u, v] for u, v in arcs) == pytest.approx(3.0)

    def test_walkthrough_unpenalized(self, list_states_graph):
        g = list_states_graph
        cg = contract(g, np.concatenate([g.mu, g.phi]))
        arcs = max_spanning_arborescence(cg)
        assert arcs == {(0, 1), (0, 2)}
        assert sum(cg.weight[u, v] for u, v in arcs) == pytest.approx(3.5)

    def test_unreachable_node(self):
        w = np.full((3, 3), -np.inf)
        w[0, 1] = 1.0
        cg = ContractedGraph(num_nodes=3, weight=w, best_arc=np.full((3, 3), -1))
        with pytest.raises(ValueError, match="unreachable"):
            max_spanning_arborescence(cg)

    def test_matches_brute_force_on_random_graphs(self):
        rng = np.random.default_rng(9)
        for _ in range(150):
            n = int(rng.integers(2, 7))
            w = rng.uniform(-2, 2, (n, n))
            np.fill_diagonal(w, -np.inf)
            w[:, 0] = -np.inf
            keep = rng.uniform(size=(n, n)) < 0.8
            w = np.where(keep, w, -np.inf)
            w[0, 1:] = np.where(np.isneginf(w[0, 1:]), 0.0, w[0, 1:])  # keep reachable
            best, _ = brute_force_msa(w)
            cg = ContractedGraph(num_nodes=n, weight=w, best_arc=np.full((n, n), -1))
            arcs = max_spanning_arborescence(cg)
            total = sum(w[u, v] for u, v in arcs)
            # structure: spanning, in-degree 1, root untouched
            assert len(arcs) == n - 1
            indeg = {v: 0 for v in range(n)}
            for u, v in arcs:
                indeg[v] += 1
            assert indeg[0] == 0 and all(indeg[v] == 1 for v in range(1, n))
            assert total == pytest.approx(best)


class TestLmo:
    def test_zero_objective_is_deterministic(self):
        g = build_graph(3, TOY)
        psi = np.zeros(g.num_vertices + g.num_arcs)
        a = lmo_arborescence(g, psi)
        b = lmo_arborescence(g, psi)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_walkthrough_selects_top_solution(self, list_states_graph):
        g = list_states_graph
        z = lmo_arborescence(g, np.concatenate([g.mu, g.phi]))
        assert z.x[g.vertex_index(1, "loc_1")] == 1.0
        assert z.x[g.vertex_index(2, "state_all")] == 1.0
        assert z.y[g.arc_index(0, g.vertex_index(1, "loc_1"))] == 1.0
        assert z.y[g.arc_index(0, g.vertex_index(2, "state_all"))] == 1.0

    def test_dominates_every_spanning_solution(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 3)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(1, 4)), rng)
            psi = rng.uniform(-1, 1, g.num_vertices + g.num_arcs)
            best = float(psi @ lmo_arborescence(g, psi).concat())
            for z in enumerate_spanning_solutions(g):
                assert float(psi @ z.concat()) <= best + 1e-9

    def test_output_satisfies_spanning_constraints(self):
        rng = np.random.default_rng(22)
        for _ in range(50):
            grammar = random_grammar(rng, num_tags=3, num_types=2)
            g = random_weighted_graph(grammar, 4, rng)
            psi = rng.uniform(-1, 1, g.num_vertices + g.num_arcs)
            z = lmo_arborescence(g, psi)
            assert z.x[0] == 1.0
            for i in range(1, g.n + 1):
                assert z.y[g.incoming_arcs(i)].sum() == 1.0
                assert z.x[g.cluster_vertices(i)].sum() == 1.0
            indeg = np.zeros(g.num_vertices)
            np.add.at(indeg, g.arc_dst[np.nonzero(z.y)[0]], 1.0)
            assert np.array_equal(indeg[1:], z.x[1:])