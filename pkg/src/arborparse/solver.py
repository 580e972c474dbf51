"""Smoothed-penalty conditional gradient solver and the decoding drivers.

MAP decoding and latent anchoring are both linear programs over a polytope
with an efficient linear maximization oracle (LMO), intersected with hard
side constraints (valency equalities for decoding, cluster inequalities for
anchoring).  The side constraints enter the objective as beta-smoothed
penalties: a quadratic penalty for equalities and the Courant-Beltrami
penalty for inequalities.  The conditional gradient (Frank-Wolfe) loop then
only needs the LMO; the optimal step size has a closed form in the equality
case and is bracketed by bisection in the inequality case.  Fractional
optima are rounded by a support-restricted exact search (decoding) or the
Kuhn-Munkres assignment (anchoring).
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .anchoring import Alignment, AnchoringError, hungarian_round, lmo_alignment
from .arborescence import lmo_arborescence
from .graph import (
    ExtendedGraph,
    InfeasibleSolutionError,
    SolutionVector,
    check_solution,
)
from .grammar import Ast


@dataclass(frozen=True)
class ConstraintSystem:
    """Sparse linear system A z = b (kind "eq") or A z <= b (kind "ineq")."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("eq", "ineq"):
            raise ValueError(f"unknown constraint kind: {self.kind!r}")

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    def residual(self, z: np.ndarray) -> np.ndarray:
        r = self.matrix @ z - self.rhs
        if self.kind == "ineq":
            r = np.maximum(r, 0.0)
        return r


@dataclass(frozen=True)
class SolverConfig:
    beta0: float = 1.0
    max_iters: int = 500
    eps: float = 1e-6
    bisection_iters: int = 10
    support_threshold: float = 1e-6
    freeze_beta: bool = False

    def __post_init__(self):
        if self.beta0 <= 0:
            raise ValueError("beta0 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")


@dataclass
class SolveResult:
    z_fractional: SolutionVector
    dual_gap: float
    iterations: int
    trace: list[tuple[int, float, float, float]]  # (iteration, beta, objective, gap)
    z_integral: SolutionVector | None = None
    integral_feasible: bool = False

    @property
    def was_integral(self) -> bool:
        return self.z_fractional.is_integral()


def build_map_constraints(graph: ExtendedGraph) -> ConstraintSystem:
    """Equality rows making a cluster-spanning solution a well-formed parse.

    One row forces exactly one root arc into a content vertex.  Then, for
    every content vertex u and type t, the outgoing arcs of u into t-typed
    vertices must sum to x_u times the valency of u's tag; identically-zero
    rows (no such arcs and valency 0) are dropped.
    """
    nv, na = graph.num_vertices, graph.num_arcs
    dim = nv + na
    rows, cols, vals, rhs = [], [], [], []

    r = 0
    for v in range(1, nv):
        if not graph.is_null(v):
            rows.append(r)
            cols.append(nv + graph.arc_index(0, v))
            vals.append(1.0)
    rhs.append(1.0)
    r += 1

    for i in range(1, graph.n + 1):
        for tag in graph.grammar.tags:
            u = graph.vertex_index(i, tag)
            for t in graph.grammar.types:
                out = graph.outgoing_arcs_of_type(u, t)
                want = graph.grammar.args(tag, t)
                if out.size == 0 and want == 0:
                    continue
                for a in out:
                    rows.append(r)
                    cols.append(nv + int(a))
                    vals.append(1.0)
                rows.append(r)
                cols.append(u)
                vals.append(-float(want))
                rhs.append(0.0)
                r += 1

    matrix = sp.csr_matrix(
        (vals, (rows, cols)), shape=(r, dim), dtype=float
    )
    return ConstraintSystem(matrix=matrix, rhs=np.array(rhs), kind="eq")


def build_anchoring_constraints(graph: ExtendedGraph) -> ConstraintSystem:
    """One inequality row per word cluster: its content vertices sum to <= 1."""
    nv, na = graph.num_vertices, graph.num_arcs
    rows, cols, vals = [], [], []
    for i in range(1, graph.n + 1):
        for tag in graph.grammar.tags:
            rows.append(i - 1)
            cols.append(graph.vertex_index(i, tag))
            vals.append(1.0)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(graph.n, nv + na), dtype=float)
    return ConstraintSystem(matrix=matrix, rhs=np.ones(graph.n), kind="ineq")


def penalty_value_grad(
    cs: ConstraintSystem, z: np.ndarray, beta: float
) -> tuple[float, np.ndarray]:
    """Smoothed penalty value and its gradient in z.

    Equalities: ||A z - b||^2 / (2 beta).  Inequalities (Courant-Beltrami):
    ||max(A z - b, 0)||^2 / (2 beta).  The gradient is A' r / beta with r the
    (clipped) residual.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    r = cs.residual(z)
    value = float(r @ r) / (2.0 * beta)
    grad = cs.matrix.T @ (r / beta)
    return value, np.asarray(grad).ravel()


def step_size_equality(
    theta: np.ndarray, cs: ConstraintSystem, z: np.ndarray, d: np.ndarray, beta: float
) -> float:
    """Exact maximizer of theta'(z+gd) - ||A(z+gd)-b||^2/(2 beta) over [0, 1].

    Closed form: g = (beta theta'd + (Ad)'b - (Ad)'(Az)) / ||Ad||^2, clipped.
    With Ad = 0 the objective is linear in g: step fully if it ascends.
    """
    ad = cs.matrix @ d
    denom = float(ad @ ad)
    ascent = float(theta @ d)
    if denom <= 0.0:
        return 1.0 if ascent > 0 else 0.0
    az = cs.matrix @ z
    gamma = (beta * ascent + float(ad @ cs.rhs) - float(ad @ az)) / denom
    return float(np.clip(gamma, 0.0, 1.0))


def step_size_inequality(
    theta: np.ndarray,
    cs: ConstraintSystem,
    z: np.ndarray,
    d: np.ndarray,
    beta: float,
    iters: int = 10,
) -> float:
    """Bisection on the derivative of the penalized objective along d.

    The objective is concave in the step, so the derivative is decreasing;
    after the sign checks at 0 and 1, the returned lower bracket end is
    within 2^-iters of the true maximizer and never decreases the objective.
    """
    az = cs.matrix @ z - cs.rhs
    ad = cs.matrix @ d
    ascent = float(theta @ d)

    def deriv(gamma: float) -> float:
        r = np.maximum(az + gamma * ad, 0.0)
        return ascent - float(ad @ r) / beta

    if deriv(0.0) <= 0.0:
        return 0.0
    if deriv(1.0) >= 0.0:
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if deriv(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


def conditional_gradient(
    lmo: Callable[[np.ndarray], SolutionVector],
    theta: np.ndarray,
    cs: ConstraintSystem,
    cfg: SolverConfig | None = None,
) -> SolveResult:
    """Frank-Wolfe loop over the LMO's polytope with smoothed side constraints.

    Starts from the unpenalized LMO optimum.  Each iteration evaluates the
    gradient of g(z) = theta'z - penalty(Az), asks the LMO for the best
    vertex, stops when the dual gap drops to eps, and otherwise line-searches
    toward the vertex.  The smoothness parameter follows
    beta = beta0 / sqrt(k + 1) unless frozen.
    """
    cfg = cfg or SolverConfig()
    start = lmo(theta)
    nv = len(start.x)
    z = start.concat()
    trace: list[tuple[int, float, float, float]] = []
    gap = np.inf
    k = 0
    for k in range(cfg.max_iters + 1):
        beta = cfg.beta0 if cfg.freeze_beta else cfg.beta0 / np.sqrt(k + 1.0)
        pen, pen_grad = penalty_value_grad(cs, z, beta)
        grad = theta - pen_grad
        objective = float(theta @ z) - pen
        vertex = lmo(grad).concat()
        d = vertex - z
        gap = float(grad @ d)
        trace.append((k, beta, objective, gap))
        if gap <= cfg.eps or k == cfg.max_iters:
            break
        if cs.kind == "eq":
            gamma = step_size_equality(theta, cs, z, d, beta)
        else:
            gamma = step_size_inequality(theta, cs, z, d, beta, iters=cfg.bisection_iters)
        z = z + gamma * d
    return SolveResult(
        z_fractional=SolutionVector(x=z[:nv], y=z[nv:]),
        dual_gap=gap,
        iterations=k,
        trace=trace,
    )


def round_support(
    graph: ExtendedGraph,
    z: SolutionVector,
    threshold: float = 1e-6,
) -> SolutionVector | None:
    """Exact best parse restricted to the fractional solution's support.

    Depth-first branch and bound over per-cluster incoming-arc choices, with
    source-consistency propagation, cluster-cycle checks, running valency
    caps and an optimistic remaining-weight bound.  If the restricted problem
    is infeasible the threshold is halved (re-solving only when new arcs
    enter) until every positive-mass arc is in; the remaining rungs are all
    root arcs, then the full graph.  Returns None only when no feasible parse
    exists at all.
    """
    tau = threshold
    support = _support_arcs(graph, z, tau)
    while True:
        best = _branch_and_bound(graph, support)
        if best is not None:
            return best
        if tau < 1e-15:
            break
        tau /= 2.0
        wider = _support_arcs(graph, z, tau)
        if sum(map(len, wider)) > sum(map(len, support)):
            support = wider
    # all positive mass is in; widen to every root arc, then the full graph
    with_root = [
        sorted(set(cands) | {int(a) for a in graph.incoming_arcs(i + 1) if graph.arc_src[a] == 0})
        for i, cands in enumerate(support)
    ]
    best = _branch_and_bound(graph, with_root)
    if best is not None:
        return best
    full = [list(map(int, graph.incoming_arcs(i))) for i in range(1, graph.n + 1)]
    return _branch_and_bound(graph, full)


def _support_arcs(graph: ExtendedGraph, z: SolutionVector, tau: float) -> list[list[int]]:
    """Candidate incoming arcs per cluster with fractional mass above tau."""
    cands = []
    for i in range(1, graph.n + 1):
        arcs = [int(a) for a in graph.incoming_arcs(i) if z.y[int(a)] > tau]
        cands.append(arcs)
    return cands


def _branch_and_bound(
    graph: ExtendedGraph, candidates: list[list[int]]
) -> SolutionVector | None:
    """Exact search over one incoming arc per cluster; returns the best parse.

    Clusters are visited most-constrained first.  An arc whose source cluster
    is already decided must leave its selected vertex; an arc from an
    undecided cluster pins that cluster's vertex in advance, which also
    tightens the optimistic bound to the pinned candidates.
    """
    n = graph.n
    grammar = graph.grammar
    if any(not c for c in candidates):
        return None
    arc_src, arc_dst = graph.arc_src, graph.arc_dst
    type_index = {t: k for k, t in enumerate(grammar.types)}
    num_types = len(grammar.types)
    NEG = float("-inf")

    # per-candidate metadata: (arc, weight, src, dst, src_cluster, is_root_content,
    # dst_type_index or -1 for null destinations)
    rows: list[list[tuple]] = []
    for j in range(1, n + 1):
        row = []
        for a in candidates[j - 1]:
            src, dst = int(arc_src[a]), int(arc_dst[a])
            w = float(graph.phi[a] + graph.mu[dst])
            dst_null = graph.is_null(dst)
            dt = -1 if dst_null else type_index[grammar.type_of(graph.label(dst))]
            row.append((a, w, src, dst, graph.cluster_of(src), src == 0 and not dst_null, dt))
        row.sort(key=lambda r: -r[1])
        rows.append(row)
    order = sorted(range(1, n + 1), key=lambda j: len(rows[j - 1]))

    # per-cluster optimistic contributions, overall and with root-content
    # arcs excluded (applies once the single root arc has been placed)
    max_any = [max(r[1] for r in row) for row in rows]
    max_norc = [max((r[1] for r in row if not r[5]), default=NEG) for row in rows]
    suffix_any = [0.0] * (n + 1)
    suffix_norc = [0.0] * (n + 1)
    for pos in range(n - 1, -1, -1):
        j = order[pos]
        suffix_any[pos] = suffix_any[pos + 1] + max_any[j - 1]
        suffix_norc[pos] = suffix_norc[pos + 1] + max_norc[j - 1]
    # best contribution per (cluster, destination vertex), for pin pruning
    pb_any: list[dict[int, float]] = [dict() for _ in range(n + 1)]
    pb_norc: list[dict[int, float]] = [dict() for _ in range(n + 1)]
    has_root_content = [False] * (n + 1)
    for j in range(1, n + 1):
        for a, w, src, dst, _sc, is_rc, _dt in rows[j - 1]:
            if dst not in pb_any[j]:
                pb_any[j][dst] = w
            if not is_rc and dst not in pb_norc[j]:
                pb_norc[j][dst] = w
            if is_rc:
                has_root_content[j] = True
    root_possible = [False] * (n + 1)
    for pos in range(n - 1, -1, -1):
        root_possible[pos] = root_possible[pos + 1] or has_root_content[order[pos]]

    # valency tables on integer keys: args_of[dst][type_index]
    args_of: dict[int, tuple[int, ...]] = {}
    for j in range(1, n + 1):
        for tag in grammar.tags:
            v = graph.vertex_index(j, tag)
            args_of[v] = tuple(grammar.args(tag, t) for t in grammar.types)

    BIG = 1e18  # stands in for an impossible pinned cluster; avoids inf - inf

    def pin_correction(max_v: float, pinned_v: float) -> float:
        if max_v == NEG:
            return 0.0  # the suffix bound is already -inf for this cluster
        if pinned_v == NEG:
            return BIG
        return max_v - pinned_v

    best_value = NEG
    best_arcs: list[int] | None = None

    # search state, indexed by cluster id 1..n
    dest_of = [0] * (n + 1)  # selected vertex per decided cluster (0 = undecided)
    parent = [-1] * (n + 1)  # parent cluster per decided cluster
    required: dict[int, int] = {}  # vertex an undecided cluster must select
    out_count: dict[tuple[int, int], int] = {}  # (src vertex, type index) -> used slots
    chosen: list[int] = []

    def descend(
        pos: int, value: float, root_content: int, deficit: int,
        slack_any: float, slack_norc: float,
    ) -> None:
        # slack_* is the optimistic bound lost to pins on undecided clusters
        nonlocal best_value, best_arcs
        if root_content:
            if value + suffix_norc[pos] - slack_norc <= best_value:
                return
        else:
            if value + suffix_any[pos] - slack_any <= best_value:
                return
            if not root_possible[pos]:
                return
        if deficit > n - pos:
            return
        if pos == n:
            if root_content == 1 and deficit == 0:
                best_value = value
                best_arcs = list(chosen)
            return
        cluster = order[pos]
        pin = required.get(cluster)
        if pin is not None:
            # this cluster's pin correction leaves the bound: its contribution
            # is about to be realized in `value`
            slack_any -= pin_correction(max_any[cluster - 1], pb_any[cluster][pin])
            slack_norc -= pin_correction(max_norc[cluster - 1], pb_norc[cluster].get(pin, NEG))
        for a, w, src, dst, src_cluster, is_rc, dt in rows[cluster - 1]:
            if pin is not None and dst != pin:
                continue
            if is_rc and root_content:
                continue
            new_root = root_content or is_rc
            s_any, s_norc = slack_any, slack_norc
            pinned = False
            if src_cluster != 0:
                if src_cluster == cluster:
                    continue  # intra-cluster arcs do not exist
                if dest_of[src_cluster]:
                    if dest_of[src_cluster] != src:
                        continue
                else:
                    existing = required.get(src_cluster)
                    if existing is not None:
                        if existing != src:
                            continue
                    else:
                        entry = pb_any[src_cluster].get(src)
                        if entry is None:
                            continue  # nothing in that cluster can select src
                        pinned = True
                        s_any += pin_correction(max_any[src_cluster - 1], entry)
                        s_norc += pin_correction(
                            max_norc[src_cluster - 1], pb_norc[src_cluster].get(src, NEG)
                        )
                # cycle check over decided parents
                i = src_cluster
                cyc = False
                while i > 0 and parent[i] != -1:
                    i = parent[i]
                    if i == cluster:
                        cyc = True
                        break
                if cyc:
                    continue
            # valency bookkeeping: deficit counts open argument slots of the
            # vertices selected so far; slots of pinned-but-undecided sources
            # are accounted when their own cluster is decided
            d_deficit = deficit
            touched = None
            ok = True
            if src != 0:
                key = (src, dt)
                used = out_count.get(key, 0) + 1
                out_count[key] = used
                touched = key
                if used > args_of[src][dt]:
                    ok = False
                elif dest_of[src_cluster]:
                    d_deficit -= 1
            if ok and dst in args_of:
                # the fresh vertex opens its remaining argument slots
                need = 0
                for t in range(num_types):
                    need += args_of[dst][t] - out_count.get((dst, t), 0)
                d_deficit += need
            if ok:
                if pinned:
                    required[src_cluster] = src
                dest_of[cluster] = dst
                parent[cluster] = src_cluster
                chosen.append(a)
                descend(pos + 1, value + w, new_root, d_deficit, s_any, s_norc)
                chosen.pop()
                parent[cluster] = -1
                dest_of[cluster] = 0
                if pinned:
                    del required[src_cluster]
            if touched is not None:
                out_count[touched] -= 1
                if not out_count[touched]:
                    del out_count[touched]

    descend(0, 0.0, 0, 0, 0.0, 0.0)
    if best_arcs is None:
        return None
    return SolutionVector.from_arcs(graph, best_arcs)


def map_inference(graph: ExtendedGraph, cfg: SolverConfig | None = None) -> SolveResult:
    """Decode the best parse: conditional gradient plus support rounding."""
    cfg = cfg or SolverConfig()
    cs = build_map_constraints(graph)
    theta = np.concatenate([graph.mu, graph.phi])
    result = conditional_gradient(lambda psi: lmo_arborescence(graph, psi), theta, cs, cfg)
    zf = result.z_fractional
    if zf.is_integral():
        candidate = zf.rounded()
        try:
            check_solution(graph, candidate)
            result.z_integral = candidate
            result.integral_feasible = True
            return result
        except InfeasibleSolutionError:
            pass
    rounded = round_support(graph, zf, threshold=cfg.support_threshold)
    if rounded is None:
        result.z_integral = SolutionVector.zeros(graph)
        result.integral_feasible = False
    else:
        result.z_integral = rounded
        result.integral_feasible = True
    return result


def latent_anchoring(
    graph: ExtendedGraph, ast: Ast, cfg: SolverConfig | None = None
) -> Alignment:
    """Best anchoring of ``ast`` on the sentence: solve the relaxation, round.

    Conditional gradient over alignment count vectors with smoothed cluster
    inequalities, then Kuhn-Munkres on the fractional vertex mass.
    """
    if len(ast) > graph.n:
        raise AnchoringError(
            f"{len(ast)} AST vertices cannot anchor injectively on {graph.n} words"
        )
    cfg = cfg or SolverConfig()
    cs = build_anchoring_constraints(graph)
    theta = np.concatenate([graph.mu, graph.phi])
    result = conditional_gradient(
        lambda psi: lmo_alignment(graph, ast, psi), theta, cs, cfg
    )
    return hungarian_round(graph, ast, result.z_fractional)
