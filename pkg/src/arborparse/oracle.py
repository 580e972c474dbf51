"""Brute-force ground truth on tiny instances.

Every inference quantity in the package has an exhaustive counterpart here:
feasible-parse enumeration, exact MAP, the exact log-partition and alignment
enumeration.  These are test infrastructure; budgets abort enumeration before
it can blow up.
"""

import itertools
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .anchoring import Alignment
from .graph import ExtendedGraph, SolutionVector, weight_of
from .grammar import Ast, is_entity


class BudgetExceededError(RuntimeError):
    """Enumeration would exceed the configured budget."""


@dataclass(frozen=True)
class EnumerationBudget:
    max_sentence_length: int = 4
    max_tags: int = 3
    max_structures: int = 10**6

    def check_instance(self, graph: ExtendedGraph) -> None:
        if graph.n > self.max_sentence_length:
            raise BudgetExceededError(
                f"sentence length {graph.n} exceeds budget {self.max_sentence_length}"
            )
        if len(graph.grammar.tags) > self.max_tags:
            raise BudgetExceededError(
                f"{len(graph.grammar.tags)} tags exceed budget {self.max_tags}"
            )


class _Counter:
    def __init__(self, limit: int):
        self.limit = limit
        self.count = 0

    def tick(self) -> None:
        self.count += 1
        if self.count > self.limit:
            raise BudgetExceededError(f"more than {self.limit} structures enumerated")


def _feasible_arc_sets(graph: ExtendedGraph, counter: _Counter) -> Iterator[list[int]]:
    """All arc sets encoding feasible parses, grown root-down.

    A parse is grown by picking the root child (cluster, tag), then
    recursively filling each vertex's typed argument slots with unused
    clusters; unused clusters finally take a root-to-null arc.
    """
    grammar = graph.grammar
    n = graph.n

    def requirements(tag: str) -> list[tuple[str, int]]:
        return [(t, grammar.args(tag, t)) for t in grammar.types if grammar.args(tag, t) > 0]

    def expand(pending: list[int], used: set[int], arcs: list[int]) -> Iterator[list[int]]:
        # pending holds selected vertices whose argument slots are unfilled
        if not pending:
            full = list(arcs)
            for i in range(1, n + 1):
                if i not in used:
                    full.append(graph.arc_index(0, graph.null_index(i)))
            counter.tick()
            yield sorted(full)
            return
        u = pending[0]
        rest = pending[1:]
        reqs = requirements(graph.label(u))

        def fill(req_idx: int, avail: list[int], new_children: list[int]) -> Iterator[list[int]]:
            if req_idx == len(reqs):
                yield from expand(
                    rest + new_children,
                    used | {graph.cluster_of(v) for v in new_children},
                    arcs + [graph.arc_index(u, v) for v in new_children],
                )
                return
            t, k = reqs[req_idx]
            candidate_tags = [e for e in grammar.tags if grammar.type_of(e) == t]
            for clusters in itertools.combinations(avail, k):
                remaining = [c for c in avail if c not in clusters]
                for tag_choice in itertools.product(candidate_tags, repeat=k):
                    children = [graph.vertex_index(c, e) for c, e in zip(clusters, tag_choice)]
                    yield from fill(req_idx + 1, remaining, new_children + children)

        avail = [i for i in range(1, n + 1) if i not in used]
        yield from fill(0, avail, [])

    for i in range(1, n + 1):
        for tag in grammar.tags:
            v = graph.vertex_index(i, tag)
            root_arc = graph.arc_index(0, v)
            yield from expand([v], {i}, [root_arc])


def enumerate_feasible(
    graph: ExtendedGraph, budget: EnumerationBudget | None = None
) -> Iterator[SolutionVector]:
    """Yield every feasible integral parse of the graph, lazily."""
    budget = budget or EnumerationBudget()
    budget.check_instance(graph)
    counter = _Counter(budget.max_structures)
    for arcs in _feasible_arc_sets(graph, counter):
        yield SolutionVector.from_arcs(graph, arcs)


def exact_map(
    graph: ExtendedGraph, budget: EnumerationBudget | None = None
) -> tuple[float, SolutionVector | None]:
    """Maximum-weight feasible parse by exhaustive search (first best wins ties)."""
    best_w = -np.inf
    best_z = None
    for z in enumerate_feasible(graph, budget):
        w = weight_of(graph, z)
        if w > best_w:
            best_w, best_z = w, z
    return best_w, best_z


def exact_log_partition(
    graph: ExtendedGraph, budget: EnumerationBudget | None = None
) -> float:
    """log sum over feasible parses of exp(weight), with a max shift."""
    weights = [weight_of(graph, z) for z in enumerate_feasible(graph, budget)]
    if not weights:
        return -np.inf
    arr = np.array(weights)
    hi = arr.max()
    return float(hi + np.log(np.exp(arr - hi).sum()))


def enumerate_alignments(
    graph: ExtendedGraph,
    ast: Ast,
    constrained: bool,
    budget: EnumerationBudget | None = None,
) -> Iterator[Alignment]:
    """All label-compatible AST-to-graph alignments.

    The unconstrained stream maps each AST vertex independently to any vertex
    carrying its tag (alignments whose parent/child share a cluster have no
    realizing arc and weight -inf).  The constrained stream additionally
    requires at most one AST vertex per cluster.
    """
    budget = budget or EnumerationBudget()
    counter = _Counter(budget.max_structures)
    candidates = []
    for u in range(len(ast)):
        tag = ast.labels[u]
        candidates.append([graph.vertex_index(i, tag) for i in range(1, graph.n + 1)])
    for combo in itertools.product(*candidates):
        if constrained:
            clusters = [graph.cluster_of(v) for v in combo]
            if len(set(clusters)) != len(clusters):
                continue
        counter.tick()
        yield Alignment(assign=dict(enumerate(combo)))


def alignment_weight(graph: ExtendedGraph, ast: Ast, alignment: Alignment) -> float:
    """Vertex weights + realized arc weights + the root arc weight.

    Returns -inf when some AST arc has no realizing graph arc (parent and
    child anchored in the same cluster).
    """
    total = 0.0
    for u in range(len(ast)):
        total += graph.mu[alignment.assign[u]]
    total += graph.phi[graph.arc_index(0, alignment.assign[ast.root])]
    for p, v in ast.arcs:
        src, dst = alignment.assign[p], alignment.assign[v]
        if not graph.has_arc(src, dst):
            return -np.inf
        total += graph.phi[graph.arc_index(src, dst)]
    return float(total)


def alignment_to_solution(graph: ExtendedGraph, ast: Ast, alignment: Alignment) -> SolutionVector:
    """Count vector of an alignment: vertex uses, realized arcs, root arc."""
    x = np.zeros(graph.num_vertices)
    y = np.zeros(graph.num_arcs)
    for u in range(len(ast)):
        x[alignment.assign[u]] += 1.0
    y[graph.arc_index(0, alignment.assign[ast.root])] += 1.0
    for p, v in ast.arcs:
        y[graph.arc_index(alignment.assign[p], alignment.assign[v])] += 1.0
    return SolutionVector(x=x, y=y)


def enumerate_spanning_solutions(
    graph: ExtendedGraph, budget: EnumerationBudget | None = None
) -> Iterator[SolutionVector]:
    """All integral members of the cluster-spanning polytope (no valency).

    Each word cluster picks exactly one incoming arc; choices must be acyclic
    at the cluster level.  This is the vertex set the arborescence oracle
    maximizes over.
    """
    budget = budget or EnumerationBudget()
    budget.check_instance(graph)
    counter = _Counter(budget.max_structures)
    per_cluster = [graph.incoming_arcs(i) for i in range(1, graph.n + 1)]
    for combo in itertools.product(*per_cluster):
        parent = {}
        ok = True
        for j, a in enumerate(combo, start=1):
            parent[j] = graph.cluster_of(int(graph.arc_src[a]))
        for start in parent:
            seen = set()
            i = start
            while i != 0:
                if i in seen:
                    ok = False
                    break
                seen.add(i)
                i = parent[i]
            if not ok:
                break
        if not ok:
            continue
        counter.tick()
        yield SolutionVector.from_arcs(graph, [int(a) for a in combo])


def constrained_alignment_optimum(
    graph: ExtendedGraph, ast: Ast, budget: EnumerationBudget | None = None
) -> tuple[float, Alignment | None]:
    """Best constrained anchoring by exhaustive search."""
    best_w = -np.inf
    best = None
    for al in enumerate_alignments(graph, ast, constrained=True, budget=budget):
        w = alignment_weight(graph, ast, al)
        if w > best_w:
            best_w, best = w, al
    return best_w, best
