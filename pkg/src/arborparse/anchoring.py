"""AST-to-graph alignment: relaxed dynamic program and Hungarian rounding.

Anchoring maps every AST vertex to a graph vertex carrying the same tag.
Dropping the "at most one vertex per cluster" requirement makes the problem
tractable: a chart over (AST vertex, graph vertex) pairs filled in reverse
topological order gives the best unconstrained alignment, which is the
linear maximization oracle used by the anchoring solver.  Fractional
solutions are rounded back to feasible anchorings with the Kuhn-Munkres
algorithm on per-cluster vertex mass.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .graph import ExtendedGraph, SolutionVector
from .grammar import Ast

NEG_INF = -np.inf


class AnchoringError(ValueError):
    """No feasible anchoring exists for this (graph, AST) pair."""


@dataclass(frozen=True)
class Alignment:
    """Partial map from AST vertices to graph vertices (same tag required)."""

    assign: dict[int, int]

    def word_positions(self, graph: ExtendedGraph) -> dict[int, int]:
        return {u: graph.cluster_of(v) for u, v in self.assign.items()}

    def pairs_text(self, graph: ExtendedGraph) -> str:
        """Render as space-separated ``astVertex:wordIndex`` pairs."""
        return " ".join(f"{u}:{graph.cluster_of(v)}" for u, v in sorted(self.assign.items()))


@dataclass
class AlignmentChart:
    """DP chart plus back-pointers.

    ``chart[u_ast, u_graph]`` is the best score of anchoring ``u_ast`` at
    ``u_graph`` together with all its descendants; entries are -inf for
    label-incompatible pairs.  ``backptr[(u_ast, u_graph, child_ast)]`` is the
    chosen graph vertex for that child.
    """

    ast: Ast
    chart: np.ndarray
    backptr: dict[tuple[int, int, int], int]
    root_vertex: int
    value: float


def dp_alignment(
    graph: ExtendedGraph, ast: Ast, psi: np.ndarray | None = None
) -> tuple[float, AlignmentChart]:
    """Best unconstrained alignment value under ``psi`` (graph weights if None).

    For each AST vertex u' (children before parents) and each same-tag graph
    vertex u, the chart adds the vertex score and, per child, the best
    child-chart entry plus the connecting arc score; the returned value adds
    the root-arc score on top of the AST root's best entry.  Parent and child
    must sit in distinct clusters, otherwise no arc exists.  Ties go to the
    lowest graph-vertex index.
    """
    nv = graph.num_vertices
    if psi is None:
        psi = np.concatenate([graph.mu, graph.phi])
    psi_x, psi_y = psi[:nv], psi[nv:]
    m = graph.num_tags
    n = graph.n
    pair_base = graph.inter_pair_base  # (n, n), -1 on the diagonal

    chart = np.full((len(ast), nv), NEG_INF)
    backptr: dict[tuple[int, int, int], int] = {}
    order = list(reversed(ast.preorder()))

    for u_ast in order:
        cands = graph.tag_vertices(ast.labels[u_ast])  # one per cluster
        p = graph.grammar.tag_index(ast.labels[u_ast])
        vals = psi_x[cands].astype(float)
        for child in ast.children(u_ast):
            child_cands = graph.tag_vertices(ast.labels[child])
            q = graph.grammar.tag_index(ast.labels[child])
            child_scores = chart[child, child_cands]  # (n,) in cluster order
            arc_idx = pair_base + p * m + q
            arc_scores = np.where(
                pair_base >= 0, psi_y[np.clip(arc_idx, 0, None)], NEG_INF
            )
            totals = arc_scores + child_scores[None, :]  # rows: parent cluster
            best_j = np.argmax(totals, axis=1)
            vals = vals + totals[np.arange(n), best_j]
            for k in range(n):
                backptr[(u_ast, int(cands[k]), child)] = int(child_cands[best_j[k]])
        chart[u_ast, cands] = vals

    root_cands = graph.tag_vertices(ast.labels[ast.root])
    totals = chart[ast.root, root_cands] + psi_y[root_cands - 1]  # root arc to v is arc v-1
    pick = int(np.argmax(totals))
    value = float(totals[pick])
    return value, AlignmentChart(
        ast=ast,
        chart=chart,
        backptr=backptr,
        root_vertex=int(root_cands[pick]),
        value=value,
    )


def backtrack_alignment(chart: AlignmentChart) -> Alignment:
    """Recover an alignment achieving the chart value."""
    if chart.value == NEG_INF:
        raise AnchoringError("no unconstrained alignment exists (value is -inf)")
    ast = chart.ast
    assign: dict[int, int] = {}

    def visit(u_ast: int, u_graph: int) -> None:
        assign[u_ast] = u_graph
        for child in ast.children(u_ast):
            visit(child, chart.backptr[(u_ast, u_graph, child)])

    visit(ast.root, chart.root_vertex)
    return Alignment(assign=assign)


def lmo_alignment(graph: ExtendedGraph, ast: Ast, psi: np.ndarray) -> SolutionVector:
    """Count vector of the best unconstrained alignment under ``psi``.

    Entries count how many AST vertices / arcs use each graph vertex / arc;
    the root arc to the AST root's anchor is included.  Counts above one are
    what the anchoring solver's cluster penalties discourage.
    """
    _, chart = dp_alignment(graph, ast, psi)
    alignment = backtrack_alignment(chart)
    x = np.zeros(graph.num_vertices)
    y = np.zeros(graph.num_arcs)
    for u_ast, v in alignment.assign.items():
        x[v] += 1.0
    y[graph.arc_index(0, alignment.assign[ast.root])] += 1.0
    for p, v in ast.arcs:
        y[graph.arc_index(alignment.assign[p], alignment.assign[v])] += 1.0
    return SolutionVector(x=x, y=y)


def latent_anchoring_target(
    graph: ExtendedGraph, ast: Ast, alignment: Alignment
) -> SolutionVector:
    """Extend a constrained anchoring to a full 0/1 parse solution.

    Anchored vertices and realized arcs are selected, the root arc points at
    the AST root's anchor, and every unanchored word takes its root-to-null
    arc.
    """
    clusters = [graph.cluster_of(v) for v in alignment.assign.values()]
    if len(set(clusters)) != len(clusters):
        raise AnchoringError("alignment uses a cluster twice; cannot extend to a parse")
    x = np.zeros(graph.num_vertices)
    y = np.zeros(graph.num_arcs)
    x[0] = 1.0
    for u in range(len(ast)):
        x[alignment.assign[u]] = 1.0
    y[graph.arc_index(0, alignment.assign[ast.root])] = 1.0
    for p, v in ast.arcs:
        y[graph.arc_index(alignment.assign[p], alignment.assign[v])] = 1.0
    used = set(clusters)
    for i in range(1, graph.n + 1):
        if i not in used:
            null = graph.null_index(i)
            x[null] = 1.0
            y[graph.arc_index(0, null)] = 1.0
    return SolutionVector(x=x, y=y)


def hungarian_round(
    graph: ExtendedGraph,
    ast: Ast,
    z: SolutionVector | np.ndarray,
) -> Alignment:
    """Feasible anchoring from fractional vertex mass via Kuhn-Munkres.

    ``z`` is either a solution vector (costs are the fractional x mass of the
    compatible vertex in each cluster) or a precomputed cost table of shape
    (AST vertices, clusters).  Maximizes total cost over injective
    AST-vertex-to-cluster assignments.
    """
    if len(ast) > graph.n:
        raise AnchoringError(
            f"{len(ast)} AST vertices cannot anchor injectively on {graph.n} words"
        )
    if isinstance(z, SolutionVector):
        cost = np.zeros((len(ast), graph.n))
        for u in range(len(ast)):
            tag = ast.labels[u]
            for i in range(1, graph.n + 1):
                cost[u, i - 1] = z.x[graph.vertex_index(i, tag)]
    else:
        cost = np.asarray(z, dtype=float)
        if cost.shape != (len(ast), graph.n):
            raise ValueError(f"cost table has shape {cost.shape}, expected ({len(ast)}, {graph.n})")
    rows, cols = linear_sum_assignment(cost, maximize=True)
    assign = {
        int(u): graph.vertex_index(int(c) + 1, ast.labels[int(u)])
        for u, c in zip(rows, cols)
    }
    return Alignment(assign=assign)
