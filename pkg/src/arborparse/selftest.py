"""Oracle-backed property suite: one check per acceptance criterion.

Each check returns a pass/fail result with a deterministic detail string, so
two runs with the same seed print byte-identical reports.  Wall-clock
measurements go to stderr only.
"""

import sys
import time
from dataclasses import dataclass

import numpy as np

from .anchoring import backtrack_alignment, dp_alignment, lmo_alignment
from .graph import build_graph, graph_from_weights, solution_anchors, solution_to_ast, weight_of
from .grammar import parse_grammar, serialize_ast
from .losses import (
    Instance,
    ScorerParams,
    exact_match_accuracy,
    supervised_loss,
    surrogate_log_partition,
    train,
)
from .oracle import (
    EnumerationBudget,
    alignment_weight,
    enumerate_alignments,
    enumerate_feasible,
    exact_log_partition,
    exact_map,
)
from .solver import (
    ConstraintSystem,
    SolverConfig,
    build_anchoring_constraints,
    build_map_constraints,
    conditional_gradient,
    map_inference,
    penalty_value_grad,
    step_size_equality,
    step_size_inequality,
)
from .synthetic import (
    random_ast,
    random_grammar,
    random_weighted_graph,
    sample_dataset,
    toy_language_grammar,
)
from .arborescence import lmo_arborescence

import scipy.sparse as sp


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class SelfTestReport:
    results: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def text(self) -> str:
        lines = [
            f"{'PASS' if r.passed else 'FAIL'} {r.name} {r.detail}" for r in self.results
        ]
        n_ok = sum(r.passed for r in self.results)
        lines.append(f"{n_ok}/{len(self.results)} checks passed")
        return "".join(line + "\n" for line in lines)


WORKED_GRAMMAR = """\
type e
tag state_all e
tag loc_1 e e=1
"""

WORKED_SENTENCE = "List states"

WORKED_WEIGHTS = """\
vertex 1 state_all -1
vertex 1 loc_1 0
vertex 2 state_all 1
vertex 2 loc_1 -1
arc 0 ROOT 1 state_all 1
arc 0 ROOT 1 loc_1 1
arc 0 ROOT 2 state_all 1.5
arc 0 ROOT 2 loc_1 1.5
arc 1 state_all 2 state_all -1
arc 1 state_all 2 loc_1 -1
arc 1 loc_1 2 state_all -1
arc 1 loc_1 2 loc_1 -1
arc 2 state_all 1 state_all -1
arc 2 state_all 1 loc_1 -1
arc 2 loc_1 1 state_all -1
arc 2 loc_1 1 loc_1 -1
"""


def _map_instances(seed: int, count: int):
    """The shared random family: n <= 4, at most 3 tags, 2 types, U[-1, 1]."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        num_types = int(rng.integers(1, 3))
        num_tags = int(rng.integers(num_types, 4))
        grammar = random_grammar(rng, num_tags=num_tags, num_types=num_types, max_arity=2)
        n = int(rng.integers(1, 5))
        out.append(random_weighted_graph(grammar, n, rng))
    return out


def check_map_oracle(seed: int, count: int = 200, tol_scale: float = 1.0) -> CheckResult:
    """Rounded decoding is always feasible, never beats the fractional value
    by more than the tolerance, and matches brute force on >= 95%."""
    tol = 1e-6 * tol_scale
    graphs = _map_instances(seed, count)
    feasible = exact = within = 0
    start = time.perf_counter()
    for graph in graphs:
        theta = np.concatenate([graph.mu, graph.phi])
        result = map_inference(graph)
        w_star, _ = exact_map(graph)
        if result.integral_feasible:
            feasible += 1
            w = weight_of(graph, result.z_integral)
            if abs(w - w_star) <= 1e-9:
                exact += 1
            if w <= float(theta @ result.z_fractional.concat()) + tol:
                within += 1
    elapsed = time.perf_counter() - start
    sys.stderr.write(f"map_oracle: {elapsed:.1f}s for {count} instances\n")
    passed = (
        feasible == count
        and within == feasible
        and exact >= 0.95 * count
        and elapsed <= 60.0
    )
    detail = f"feasible={feasible}/{count} exact={exact} within_bound={within} runtime_budget_met={elapsed <= 60.0}"
    return CheckResult("map_oracle", passed, detail)


def check_partition_upper_bound(seed: int, count: int = 200, tol_scale: float = 1.0) -> CheckResult:
    """The per-cluster log-sum-exp bound never undershoots the exact value."""
    tol = 1e-9 * tol_scale
    graphs = _map_instances(seed, count)
    ok = 0
    for graph in graphs:
        bound, _, _ = surrogate_log_partition(graph)
        exact = exact_log_partition(graph)
        if bound >= exact - tol:
            ok += 1
    return CheckResult(
        "partition_upper_bound", ok == count, f"holds_on={ok}/{count}"
    )


def _rel_err(analytic: np.ndarray, fd: np.ndarray) -> float:
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(fd)))
    return float(np.max(np.abs(analytic - fd) / scale))


def check_gradients(seed: int, count: int = 50, tol_scale: float = 1.0) -> CheckResult:
    """Analytic gradients match central finite differences at h = 1e-4."""
    tol = 1e-5 * tol_scale
    h = 1e-4
    rng = np.random.default_rng(seed + 1)
    graphs = _map_instances(seed + 1, count)
    worst = 0.0
    for graph in graphs:
        # surrogate log-partition gradient
        _, gmu, gphi = surrogate_log_partition(graph)
        fd_mu = np.zeros_like(gmu)
        for i in range(1, graph.num_vertices):
            up, dn = graph.mu.copy(), graph.mu.copy()
            up[i] += h
            dn[i] -= h
            fd_mu[i] = (
                surrogate_log_partition(build_graph(graph.n, graph.grammar, up, graph.phi))[0]
                - surrogate_log_partition(build_graph(graph.n, graph.grammar, dn, graph.phi))[0]
            ) / (2 * h)
        worst = max(worst, _rel_err(gmu[1:], fd_mu[1:]))
        arc_sample = rng.choice(graph.num_arcs, size=min(20, graph.num_arcs), replace=False)
        fd_phi = []
        for a in arc_sample:
            up, dn = graph.phi.copy(), graph.phi.copy()
            up[a] += h
            dn[a] -= h
            fd_phi.append(
                (
                    surrogate_log_partition(build_graph(graph.n, graph.grammar, graph.mu, up))[0]
                    - surrogate_log_partition(build_graph(graph.n, graph.grammar, graph.mu, dn))[0]
                )
                / (2 * h)
            )
        worst = max(worst, _rel_err(gphi[arc_sample], np.array(fd_phi)))

        # supervised loss gradient at the first feasible target
        target = next(enumerate_feasible(graph))
        report = supervised_loss(graph, target)
        fd = []
        for i in range(1, min(graph.num_vertices, 12)):
            up, dn = graph.mu.copy(), graph.mu.copy()
            up[i] += h
            dn[i] -= h
            fd.append(
                (
                    supervised_loss(build_graph(graph.n, graph.grammar, up, graph.phi), target).value
                    - supervised_loss(build_graph(graph.n, graph.grammar, dn, graph.phi), target).value
                )
                / (2 * h)
            )
        worst = max(worst, _rel_err(report.grad_mu[1 : len(fd) + 1], np.array(fd)))

        # both penalty kinds, away from the inequality kink
        for builder in (build_map_constraints, build_anchoring_constraints):
            cs = builder(graph)
            if cs.num_rows == 0:
                continue
            dim = graph.num_vertices + graph.num_arcs
            for _ in range(20):
                z = rng.uniform(0.0, 1.0, dim)
                raw = cs.matrix @ z - cs.rhs
                if np.min(np.abs(raw)) > 10 * h:
                    break
            beta = float(rng.uniform(0.2, 2.0))
            _, grad = penalty_value_grad(cs, z, beta)
            coords = rng.choice(dim, size=min(30, dim), replace=False)
            fd = []
            for i in coords:
                up, dn = z.copy(), z.copy()
                up[i] += h
                dn[i] -= h
                fd.append(
                    (penalty_value_grad(cs, up, beta)[0] - penalty_value_grad(cs, dn, beta)[0])
                    / (2 * h)
                )
            worst = max(worst, _rel_err(grad[coords], np.array(fd)))
    passed = worst <= tol
    return CheckResult("gradient_checks", passed, f"max_rel_err={worst:.3e}")


def check_alignment_dp(seed: int, count: int = 200, tol_scale: float = 1.0) -> CheckResult:
    """The relaxed alignment DP equals brute force on every random pair."""
    tol = 1e-9 * tol_scale
    rng = np.random.default_rng(seed + 2)
    budget = EnumerationBudget(max_sentence_length=5, max_tags=4)
    ok = 0
    for _ in range(count):
        num_types = int(rng.integers(1, 3))
        num_tags = int(rng.integers(num_types, 4))
        grammar = random_grammar(rng, num_tags=num_tags, num_types=num_types, max_arity=2)
        n = int(rng.integers(2, 6))
        ast = random_ast(grammar, rng, max_vertices=5)
        graph = random_weighted_graph(grammar, n, rng)
        value, chart = dp_alignment(graph, ast)
        brute = max(
            alignment_weight(graph, ast, al)
            for al in enumerate_alignments(graph, ast, constrained=False, budget=budget)
        )
        achieved = alignment_weight(graph, ast, backtrack_alignment(chart))
        if abs(value - brute) <= tol and abs(achieved - value) <= tol:
            ok += 1
    return CheckResult("alignment_dp", ok == count, f"exact_on={ok}/{count}")


def _random_system(rng: np.random.Generator, kind: str) -> tuple[ConstraintSystem, np.ndarray, np.ndarray, np.ndarray, float]:
    rows, dim = int(rng.integers(2, 5)), int(rng.integers(6, 14))
    dense = rng.uniform(-1, 1, (rows, dim))
    dense[rng.uniform(size=dense.shape) < 0.4] = 0.0
    cs = ConstraintSystem(matrix=sp.csr_matrix(dense), rhs=rng.uniform(-1, 1, rows), kind=kind)
    theta = rng.uniform(-1, 1, dim)
    z = rng.uniform(0, 1, dim)
    d = rng.uniform(0, 1, dim) - z
    beta = float(rng.choice([1.0, 0.5, 0.1]))
    return cs, theta, z, d, beta


def _grid_argmax(theta, cs, z, d, beta, points=100_000) -> float:
    gammas = np.linspace(0.0, 1.0, points)
    az = cs.matrix @ z - cs.rhs
    ad = cs.matrix @ d
    r = az[:, None] + gammas[None, :] * ad[:, None]
    if cs.kind == "ineq":
        r = np.maximum(r, 0.0)
    vals = (theta @ z) + gammas * (theta @ d) - (r * r).sum(axis=0) / (2 * beta)
    return float(gammas[int(np.argmax(vals))])


def check_step_sizes(seed: int, count: int = 100, tol_scale: float = 1.0) -> CheckResult:
    """Closed-form and bisection steps agree with a 1e5-point grid search."""
    tol_eq = 1e-4 * tol_scale
    tol_ineq = (2.0**-10 + 1e-6) * tol_scale
    rng = np.random.default_rng(seed + 3)
    worst_eq = worst_ineq = 0.0
    for _ in range(count):
        cs, theta, z, d, beta = _random_system(rng, "eq")
        gamma = step_size_equality(theta, cs, z, d, beta)
        worst_eq = max(worst_eq, abs(gamma - _grid_argmax(theta, cs, z, d, beta)))
        cs, theta, z, d, beta = _random_system(rng, "ineq")
        gamma = step_size_inequality(theta, cs, z, d, beta)
        worst_ineq = max(worst_ineq, abs(gamma - _grid_argmax(theta, cs, z, d, beta)))
    passed = worst_eq <= tol_eq and worst_ineq <= tol_ineq
    return CheckResult(
        "step_sizes",
        passed,
        f"eq_max_err={worst_eq:.3e} ineq_max_err={worst_ineq:.3e}",
    )


def check_fw_sanity(seed: int, count: int = 200, tol_scale: float = 1.0) -> CheckResult:
    """Frozen-beta runs ascend monotonically; the dual-gap exit fires at
    eps = 1e-6 within K = 500 on at least 90% of random instances."""
    graphs = _map_instances(seed, count)
    monotone = 0
    gap_ok_map = 0
    for graph in graphs:
        theta = np.concatenate([graph.mu, graph.phi])
        cs = build_map_constraints(graph)
        frozen = conditional_gradient(
            lambda psi: lmo_arborescence(graph, psi),
            theta,
            cs,
            SolverConfig(freeze_beta=True, max_iters=60),
        )
        objs = [t[2] for t in frozen.trace]
        if all(b >= a - 1e-9 for a, b in zip(objs, objs[1:])):
            monotone += 1
        scheduled = conditional_gradient(
            lambda psi: lmo_arborescence(graph, psi),
            theta,
            cs,
            SolverConfig(max_iters=500, eps=1e-6),
        )
        if scheduled.dual_gap <= 1e-6:
            gap_ok_map += 1

    rng = np.random.default_rng(seed + 4)
    gap_ok_align = align_total = 0
    for _ in range(count):
        num_types = int(rng.integers(1, 3))
        num_tags = int(rng.integers(num_types, 4))
        grammar = random_grammar(rng, num_tags=num_tags, num_types=num_types, max_arity=2)
        n = int(rng.integers(2, 6))
        ast = random_ast(grammar, rng, max_vertices=min(4, n))
        graph = random_weighted_graph(grammar, n, rng)
        theta = np.concatenate([graph.mu, graph.phi])
        res = conditional_gradient(
            lambda psi: lmo_alignment(graph, ast, psi),
            theta,
            build_anchoring_constraints(graph),
            SolverConfig(max_iters=500, eps=1e-6),
        )
        align_total += 1
        if res.dual_gap <= 1e-6:
            gap_ok_align += 1

    passed = monotone == count and gap_ok_map >= 0.9 * count and gap_ok_align >= 0.9 * align_total
    detail = (
        f"monotone={monotone}/{count} gap_ok_decode={gap_ok_map}/{count} "
        f"gap_ok_anchor={gap_ok_align}/{align_total}"
    )
    return CheckResult("fw_sanity", passed, detail)


def check_synthetic_learning(seed: int, count: int = 500, tol_scale: float = 1.0) -> CheckResult:
    """A toy language is learned to high exact match, supervised and weak."""
    rng = np.random.default_rng(seed + 5)
    grammar, vocab, fillers = toy_language_grammar(rng, num_tags=8, num_types=2, max_arity=2)
    language: dict[tuple[str, ...], str] = {}
    train_set = sample_dataset(
        grammar, vocab, fillers, rng, count, with_anchoring=True, language=language
    )
    test_set = sample_dataset(
        grammar, vocab, fillers, rng, max(1, count // 5), with_anchoring=False, language=language
    )
    eval_cfg = SolverConfig(max_iters=200, eps=1e-6)
    train_cfg = SolverConfig(max_iters=100, eps=1e-4)

    start = time.perf_counter()
    sup_params = ScorerParams(learning_rate=0.5)
    train(train_set, grammar, "supervised", 25, sup_params, cfg=train_cfg)
    sup_acc = exact_match_accuracy(sup_params, test_set, grammar, eval_cfg)
    sup_time = time.perf_counter() - start

    weak_train = [Instance(words=i.words, program=i.program) for i in train_set]
    start = time.perf_counter()
    weak_params = ScorerParams(learning_rate=0.5)
    train(weak_train, grammar, "weak", 25, weak_params, cfg=train_cfg)
    weak_acc = exact_match_accuracy(weak_params, test_set, grammar, eval_cfg)
    weak_time = time.perf_counter() - start

    sys.stderr.write(
        f"synthetic_learning: supervised {sup_time:.1f}s, weak {weak_time:.1f}s\n"
    )
    passed = (
        sup_acc >= 0.95 and weak_acc >= 0.85 and sup_time <= 300.0 and weak_time <= 300.0
    )
    detail = (
        f"supervised_exact={sup_acc:.4f} weak_exact={weak_acc:.4f} "
        f"time_budget_met={sup_time <= 300.0 and weak_time <= 300.0}"
    )
    return CheckResult("synthetic_learning", passed, detail)


def check_throughput(seed: int, count: int = 100, tol_scale: float = 1.0) -> CheckResult:
    """Median decode time stays under 250 ms on mid-size random inputs."""
    rng = np.random.default_rng(seed + 6)
    grammar = random_grammar(rng, num_tags=12, num_types=2, max_arity=2)
    cfg = SolverConfig(max_iters=200, eps=1e-6)
    times = []
    for _ in range(count):
        n = int(rng.integers(3, 11))
        graph = random_weighted_graph(grammar, n, rng)
        start = time.perf_counter()
        result = map_inference(graph, cfg)
        times.append(time.perf_counter() - start)
        assert result.z_integral is not None
    median = float(np.median(times))
    sys.stderr.write(
        f"throughput: median {median * 1000:.1f} ms, p90 {np.quantile(times, 0.9) * 1000:.1f} ms\n"
    )
    return CheckResult(
        "throughput", median <= 0.250, f"median_budget_met={median <= 0.250} sentences={count}"
    )


def check_worked_example(seed: int, count: int = 0, tol_scale: float = 1.0) -> CheckResult:
    """The two-word walkthrough decodes to the dropped-predicate parse."""
    grammar = parse_grammar(WORKED_GRAMMAR)
    graph = graph_from_weights(grammar, WORKED_SENTENCE, WORKED_WEIGHTS)
    result = map_inference(graph)
    if not result.integral_feasible:
        return CheckResult("worked_example", False, "decode_infeasible")
    ast = solution_to_ast(graph, result.z_integral)
    program = serialize_ast(ast)
    objective = weight_of(graph, result.z_integral)
    anchors = solution_anchors(graph, result.z_integral)
    passed = (
        program == "state_all"
        and abs(objective - 2.5) <= 1e-9
        and anchors == {0: 2}
    )
    return CheckResult(
        "worked_example", passed, f"program={program} objective={objective:.4f} anchor_word={anchors.get(0)}"
    )


ALL_CHECKS = {
    "map_oracle": check_map_oracle,
    "partition_upper_bound": check_partition_upper_bound,
    "gradient_checks": check_gradients,
    "alignment_dp": check_alignment_dp,
    "step_sizes": check_step_sizes,
    "fw_sanity": check_fw_sanity,
    "synthetic_learning": check_synthetic_learning,
    "throughput": check_throughput,
    "worked_example": check_worked_example,
}


def run_selftest(
    seed: int = 0,
    instances: int | None = None,
    tol_scale: float = 1.0,
    checks: list[str] | None = None,
    verbose: bool = False,
) -> SelfTestReport:
    names = checks or list(ALL_CHECKS)
    results = []
    for name in names:
        if name not in ALL_CHECKS:
            raise ValueError(f"unknown check: {name!r}")
        fn = ALL_CHECKS[name]
        kwargs = {"seed": seed, "tol_scale": tol_scale}
        if instances is not None:
            kwargs["count"] = instances
        start = time.perf_counter()
        results.append(fn(**kwargs))
        if verbose:
            sys.stderr.write(f"{name}: {time.perf_counter() - start:.1f}s\n")
    return SelfTestReport(results)
