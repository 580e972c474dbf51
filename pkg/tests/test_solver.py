import numpy as np
import pytest
import scipy.sparse as sp

from arborparse import (
    ConstraintSystem,
    SolverConfig,
    build_anchoring_constraints,
    build_graph,
    build_map_constraints,
    conditional_gradient,
    enumerate_feasible,
    exact_map,
    latent_anchoring,
    lmo_arborescence,
    map_inference,
    parse_grammar,
    parse_program,
    penalty_value_grad,
    round_support,
    serialize_ast,
    solution_to_ast,
    step_size_equality,
    step_size_inequality,
    weight_of,
)
from arborparse.anchoring import lmo_alignment
from arborparse.oracle import (
    alignment_to_solution,
    alignment_weight,
    constrained_alignment_optimum,
    enumerate_alignments,
)
from arborparse.synthetic import random_ast, random_grammar, random_weighted_graph

TOY = parse_grammar("type e\ntag A e\ntag P e e=1")


class TestMapConstraints:
    def test_row_count_toy(self):
        g = build_graph(2, TOY)
        cs = build_map_constraints(g)
        assert cs.kind == "eq"
        assert cs.num_rows == 5  # root row + one per content vertex

    def test_walkthrough_predicate_row(self, list_states_graph):
        g = list_states_graph
        cs = build_map_constraints(g)
        u = g.vertex_index(1, "loc_1")
        col_x = cs.matrix[:, u].toarray().ravel()
        rows = np.nonzero(col_x)[0]
        assert len(rows) == 1
        row = cs.matrix[rows[0]].toarray().ravel()
        nv = g.num_vertices
        assert row[u] == -1.0
        out_sa = nv + g.arc_index(u, g.vertex_index(2, "state_all"))
        out_loc = nv + g.arc_index(u, g.vertex_index(2, "loc_1"))
        nonzero = set(np.nonzero(row)[0])
        assert nonzero == {u, out_sa, out_loc}
        assert cs.rhs[rows[0]] == 0.0

    def test_feasible_solutions_have_zero_residual(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 4)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(1, 4)), rng)
            cs = build_map_constraints(g)
            for z in enumerate_feasible(g):
                assert np.allclose(cs.matrix @ z.concat() - cs.rhs, 0.0)


class TestAnchoringConstraints:
    def test_row_count(self):
        g = build_graph(3, TOY)
        cs = build_anchoring_constraints(g)
        assert cs.kind == "ineq"
        assert cs.num_rows == 3

    def test_count_vector_residual(self):
        g = build_graph(2, TOY)
        cs = build_anchoring_constraints(g)
        z = np.zeros(g.num_vertices + g.num_arcs)
        z[g.vertex_index(1, "A")] = 2.0
        residual = cs.residual(z)
        assert residual[0] == pytest.approx(1.0)
        assert residual[1] == 0.0

    def test_constrained_alignments_feasible(self):
        rng = np.random.default_rng(1)
        grammar = random_grammar(rng, num_tags=3, num_types=1)
        g = random_weighted_graph(grammar, 4, rng)
        ast = random_ast(grammar, rng, max_vertices=3)
        cs = build_anchoring_constraints(g)
        for al in enumerate_alignments(g, ast, constrained=True):
            z = alignment_to_solution(g, ast, al)
            assert np.all(cs.residual(z.concat()) == 0.0)


class TestPenalty:
    def test_feasible_point_zero(self):
        g = build_graph(2, TOY)
        cs = build_map_constraints(g)
        z = next(enumerate_feasible(g)).concat()
        value, grad = penalty_value_grad(cs, z, beta=1.0)
        assert value == 0.0
        assert np.all(grad == 0.0)

    def test_unit_residual_half(self):
        cs = ConstraintSystem(
            matrix=sp.csr_matrix(np.array([[1.0, 0.0]])), rhs=np.array([0.0]), kind="eq"
        )
        value, _ = penalty_value_grad(cs, np.array([1.0, 0.0]), beta=1.0)
        assert value == pytest.approx(0.5)

    def test_inequality_ignores_slack_side(self):
        cs = ConstraintSystem(
            matrix=sp.csr_matrix(np.array([[1.0, 0.0]])), rhs=np.array([0.0]), kind="ineq"
        )
        value, grad = penalty_value_grad(cs, np.array([-2.0, 0.0]), beta=1.0)
        assert value == 0.0 and np.all(grad == 0.0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-4
        for kind in ("eq", "ineq"):
            for _ in range(25):
                rows, dim = 3, 8
                dense = rng.uniform(-1, 1, (rows, dim))
                cs = ConstraintSystem(
                    matrix=sp.csr_matrix(dense), rhs=rng.uniform(-1, 1, rows), kind=kind
                )
                z = rng.uniform(0, 1, dim)
                if kind == "ineq" and np.min(np.abs(cs.matrix @ z - cs.rhs)) < 10 * h:
                    continue
                beta = float(rng.uniform(0.2, 2.0))
                _, grad = penalty_value_grad(cs, z, beta)
                for i in range(dim):
                    up, dn = z.copy(), z.copy()
                    up[i] += h
                    dn[i] -= h
                    fd = (
                        penalty_value_grad(cs, up, beta)[0]
                        - penalty_value_grad(cs, dn, beta)[0]
                    ) / (2 * h)
                    assert abs(fd - grad[i]) / max(1.0, abs(fd)) <= 1e-6


def _grid_argmax(theta, cs, z, d, beta, points=100_000):
    gammas = np.linspace(0.0, 1.0, points)
    az = cs.matrix @ z - cs.rhs
    ad = cs.matrix @ d
    r = az[:, None] + gammas[None, :] * ad[:, None]
    if cs.kind == "ineq":
        r = np.maximum(r, 0.0)
    vals = gammas * float(theta @ d) - (r * r).sum(axis=0) / (2 * beta)
    return float(gammas[int(np.argmax(vals))])


def _random_system(rng, kind):
    rows, dim = int(rng.integers(2, 5)), int(rng.integers(6, 12))
    dense = rng.uniform(-1, 1, (rows, dim))
    cs = ConstraintSystem(matrix=sp.csr_matrix(dense), rhs=rng.uniform(-1, 1, rows), kind=kind)
    theta = rng.uniform(-1, 1, dim)
    z = rng.uniform(0, 1, dim)
    d = rng.uniform(0, 1, dim) - z
    beta = float(rng.choice([1.0, 0.5, 0.1]))
    return cs, theta, z, d, beta


class TestStepSizes:
    def test_unconstrained_ascent_steps_fully(self):
        cs = ConstraintSystem(
            matrix=sp.csr_matrix(np.zeros((1, 3))), rhs=np.zeros(1), kind="eq"
        )
        theta = np.array([1.0, 0.0, 0.0])
        d = np.array([1.0, 0.0, 0.0])
        assert step_size_equality(theta, cs, np.zeros(3), d, beta=1.0) == 1.0
        assert step_size_equality(-theta, cs, np.zeros(3), d, beta=1.0) == 0.0

    def test_descent_at_origin_clips_to_zero(self):
        cs = ConstraintSystem(
            matrix=sp.csr_matrix(np.array([[1.0, 0.0]])), rhs=np.array([0.0]), kind="eq"
        )
        theta = np.zeros(2)
        z = np.array([1.0, 0.0])  # residual 1, moving along +e1 only hurts
        d = np.array([1.0, 0.0])
        assert step_size_equality(theta, cs, z, d, beta=1.0) == 0.0

    def test_equality_matches_grid(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            cs, theta, z, d, beta = _random_system(rng, "eq")
            gamma = step_size_equality(theta, cs, z, d, beta)
            assert abs(gamma - _grid_argmax(theta, cs, z, d, beta)) <= 1e-4

    def test_inequality_endpoints(self):
        cs = ConstraintSystem(
            matrix=sp.csr_matrix(np.array([[1.0, 0.0]])), rhs=np.array([10.0]), kind="ineq"
        )
        theta = np.array([1.0, 0.0])
        d = np.array([1.0, 0.0])
        assert step_size_inequality(theta, cs, np.zeros(2), d, beta=1.0) == 1.0
        assert step_size_inequality(-theta, cs, np.zeros(2), d, beta=1.0) == 0.0

    def test_inequality_matches_grid(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            cs, theta, z, d, beta = _random_system(rng, "ineq")
            gamma = step_size_inequality(theta, cs, z, d, beta)
            assert abs(gamma - _grid_argmax(theta, cs, z, d, beta)) <= 2.0**-10 + 1e-6


class TestConditionalGradient:
    def test_immediate_termination_when_feasible(self):
        grammar = parse_grammar("type e\ntag A e")
        g = build_graph(1, grammar)
        g.mu[g.vertex_index(1, "A")] = 1.0
        cs = build_map_constraints(g)
        res = conditional_gradient(
            lambda psi: lmo_arborescence(g, psi), np.concatenate([g.mu, g.phi]), cs
        )
        assert res.iterations == 0
        assert res.dual_gap <= 1e-6
        assert res.z_fractional.is_integral()

    def test_walkthrough_rounds_to_dropped_predicate(self, list_states_graph):
        g = list_states_graph
        res = map_inference(g)
        assert res.integral_feasible
        assert weight_of(g, res.z_integral) == pytest.approx(2.5)
        assert res.z_integral.x[g.null_index(1)] == 1.0
        assert res.z_integral.x[g.vertex_index(2, "state_all")] == 1.0
        assert serialize_ast(solution_to_ast(g, res.z_integral)) == "state_all"

    def test_final_objective_dominates_feasible_points_up_to_gap(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 3)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(1, 4)), rng)
            theta = np.concatenate([g.mu, g.phi])
            cs = build_map_constraints(g)
            res = conditional_gradient(lambda psi: lmo_arborescence(g, psi), theta, cs)
            zf = res.z_fractional.concat()
            final_obj = float(theta @ zf) - penalty_value_grad(
                cs, zf, res.trace[-1][1]
            )[0]
            for z in enumerate_feasible(g):
                assert float(theta @ z.concat()) <= final_obj + max(res.dual_gap, 1e-6) + 1e-9

    def test_map_iterates_stay_in_unit_box(self):
        rng = np.random.default_rng(6)
        grammar = random_grammar(rng, num_tags=3, num_types=2)
        g = random_weighted_graph(grammar, 3, rng)
        res = map_inference(g)
        assert np.all(res.z_fractional.x >= -1e-9) and np.all(res.z_fractional.x <= 1 + 1e-9)
        assert np.all(res.z_fractional.y >= -1e-9) and np.all(res.z_fractional.y <= 1 + 1e-9)

    def test_dual_gap_never_negative(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            grammar = random_grammar(rng, num_tags=2, num_types=1)
            g = random_weighted_graph(grammar, 3, rng)
            theta = np.concatenate([g.mu, g.phi])
            res = conditional_gradient(
                lambda psi: lmo_arborescence(g, psi), theta, build_map_constraints(g)
            )
            assert all(t[3] >= -1e-9 for t in res.trace)

    def test_frozen_beta_monotone_objective(self):
        rng = np.random.default_rng(8)
        for _ in range(30):
            grammar = random_grammar(rng, num_tags=3, num_types=1)
            g = random_weighted_graph(grammar, 3, rng)
            theta = np.concatenate([g.mu, g.phi])
            res = conditional_gradient(
                lambda psi: lmo_arborescence(g, psi),
                theta,
                build_map_constraints(g),
                SolverConfig(freeze_beta=True, max_iters=40),
            )
            objs = [t[2] for t in res.trace]
            assert all(b >= a - 1e-9 for a, b in zip(objs, objs[1:]))


class TestMapInference:
    def test_oracle_agreement_small_family(self):
        rng = np.random.default_rng(9)
        feasible = exact = 0
        total = 60
        for _ in range(total):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 4)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(1, 5)), rng)
            theta = np.concatenate([g.mu, g.phi])
            res = map_inference(g)
            w_star, _ = exact_map(g)
            if res.integral_feasible:
                feasible += 1
                w = weight_of(g, res.z_integral)
                # sound certificate: the fractional value plus the final gap
                assert w <= float(theta @ res.z_fractional.concat()) + res.dual_gap + 1e-6
                if abs(w - w_star) <= 1e-9:
                    exact += 1
        assert feasible == total
        assert exact >= 0.9 * total

    def test_integral_relaxation_skips_rounding(self, list_states_graph):
        res = map_inference(list_states_graph, SolverConfig(max_iters=5000))
        # this instance's relaxation optimum is the integral parse itself
        if res.was_integral:
            assert np.array_equal(res.z_fractional.rounded().x, res.z_integral.x)

    def test_infeasible_grammar_reports_failure(self):
        grammar = parse_grammar("type e\ntag P e e=1")  # no entity anywhere
        g = build_graph(2, grammar)
        res = map_inference(g)
        assert not res.integral_feasible


class TestRoundSupport:
    def test_integral_feasible_identity(self):
        rng = np.random.default_rng(10)
        grammar = random_grammar(rng, num_tags=2, num_types=1)
        g = random_weighted_graph(grammar, 3, rng)
        z = next(enumerate_feasible(g))
        out = round_support(g, z)
        assert np.array_equal(out.x, z.x) and np.array_equal(out.y, z.y)

    def test_output_feasible_and_bounded_by_fraction(self):
        rng = np.random.default_rng(11)
        for _ in range(40):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 4)), num_types=1)
            g = random_weighted_graph(grammar, int(rng.integers(2, 5)), rng)
            theta = np.concatenate([g.mu, g.phi])
            res = map_inference(g)
            assert res.integral_feasible
            serialize_ast(solution_to_ast(g, res.z_integral))
            assert weight_of(g, res.z_integral) <= float(
                theta @ res.z_fractional.concat()
            ) + res.dual_gap + 1e-6

    def test_exact_when_optimum_support_survives(self):
        rng = np.random.default_rng(12)
        hits = checked = 0
        for _ in range(60):
            grammar = random_grammar(rng, num_tags=2, num_types=1)
            g = random_weighted_graph(grammar, 3, rng)
            res = map_inference(g)
            w_star, z_star = exact_map(g)
            support = res.z_fractional.y > 1e-6
            if np.all(support[np.round(z_star.y) == 1]):
                checked += 1
                if abs(weight_of(g, res.z_integral) - w_star) <= 1e-9:
                    hits += 1
        assert checked > 0 and hits == checked


class TestLatentAnchoring:
    def test_unique_compatible_anchoring(self):
        grammar = parse_grammar("type e\ntag P e e=1\ntag A e")
        g = build_graph(2, grammar)
        g.mu[g.vertex_index(1, "P")] = 5.0
        g.mu[g.vertex_index(2, "A")] = 5.0
        g.mu[g.vertex_index(2, "P")] = -5.0
        g.mu[g.vertex_index(1, "A")] = -5.0
        ast = parse_program("P(A)", grammar)
        al = latent_anchoring(g, ast)
        assert al.assign == {0: g.vertex_index(1, "P"), 1: g.vertex_index(2, "A")}

    def test_sentence_with_hand_weights(self):
        # "What state has the most major cities ?" with the chain program
        grammar = parse_grammar(
            "type e\n"
            "tag state e e=1\n"
            "tag loc_1 e e=1\n"
            "tag most e e=1\n"
            "tag major e e=1\n"
            "tag city_all e\n"
        )
        words = "What state has the most major cities ?".split()
        g = build_graph(len(words), grammar)
        gold = {"state": 2, "loc_1": 3, "most": 5, "major": 6, "city_all": 7}
        for tag, word in gold.items():
            g.mu[g.vertex_index(word, tag)] = 1.0
        ast = parse_program("most(state(loc_1(major(city_all))))", grammar)
        al = latent_anchoring(g, ast)
        positions = {ast.labels[u]: g.cluster_of(v) for u, v in al.assign.items()}
        assert positions == gold

    def test_random_instances_near_optimal_never_infeasible(self):
        rng = np.random.default_rng(13)
        optimal = total = 0
        for _ in range(100):
            grammar = random_grammar(rng, num_tags=int(rng.integers(1, 4)), num_types=1)
            n = int(rng.integers(2, 6))
            ast = random_ast(grammar, rng, max_vertices=min(4, n))
            g = random_weighted_graph(grammar, n, rng)
            al = latent_anchoring(g, ast)
            w = alignment_weight(g, ast, al)
            assert np.isfinite(w)
            clusters = [g.cluster_of(v) for v in al.assign.values()]
            assert len(set(clusters)) == len(clusters)
            w_star, _ = constrained_alignment_optimum(g, ast)
            total += 1
            if abs(w - w_star) <= 1e-9:
                optimal += 1
        assert optimal >= 0.9 * total