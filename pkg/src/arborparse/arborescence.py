"""Cluster contraction and maximum spanning arborescence.

This is the linear maximization oracle for the cluster-spanning polytope:
contract every cluster to a node, give each contracted arc the weight of its
best underlying arc (arc weight plus destination-vertex weight), run the
maximum spanning arborescence algorithm, and expand the chosen arcs back to
vertex/arc indicators.
"""

from dataclasses import dataclass

import numpy as np

from .graph import ExtendedGraph, SolutionVector

NEG_INF = -np.inf


@dataclass
class ContractedGraph:
    """One node per cluster; at most one (max-reduced) arc per node pair.

    ``weight[i, j]`` is -inf where no arc exists; ``best_arc[i, j]`` holds the
    index of the original arc realizing the maximum, -1 where none exists.
    Ties go to the smallest original arc index.
    """

    num_nodes: int
    weight: np.ndarray
    best_arc: np.ndarray


def contract(graph: ExtendedGraph, psi: np.ndarray) -> ContractedGraph:
    """Max-reduce parallel arcs under the objective ``psi`` over (x, y).

    The contracted weight of an original arc a = u -> v is
    ``psi_y[a] + psi_x[v]``.
    """
    nv = graph.num_vertices
    psi_x, psi_y = psi[:nv], psi[nv:]
    score = psi_y + psi_x[graph.arc_dst]

    pairs = graph.arcs_by_pair
    padded = np.where(pairs >= 0, score[np.clip(pairs, 0, None)], NEG_INF)
    # first occurrence of the max = smallest arc index (pair lists are sorted)
    best_slot = np.argmax(padded, axis=2)
    idx0, idx1 = np.ogrid[: pairs.shape[0], : pairs.shape[1]]
    best_arc = pairs[idx0, idx1, best_slot]
    weight = padded[idx0, idx1, best_slot]
    weight = np.where(best_arc >= 0, weight, NEG_INF)
    return ContractedGraph(num_nodes=graph.n + 1, weight=weight, best_arc=best_arc)


def max_spanning_arborescence(cg: ContractedGraph, root: int = 0) -> set[tuple[int, int]]:
    """Maximum-weight spanning arborescence rooted at ``root``.

    Recursive cycle-contracting implementation; ties are broken toward the
    smallest source node index.  Raises ValueError if some node is
    unreachable.
    """
    n = cg.num_nodes
    if n == 1:
        return set()
    return _msa_recurse(cg.weight.copy(), root)


def _msa_recurse(weight: np.ndarray, root: int) -> set[tuple[int, int]]:
    n = weight.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    for v in range(n):
        if v == root:
            continue
        col = weight[:, v]
        best = int(np.argmax(col))
        if col[best] == NEG_INF:
            raise ValueError(f"node {v} is unreachable from the root")
        parent[v] = best

    cycle = _find_cycle(parent, root)
    if cycle is None:
        return {(int(parent[v]), v) for v in range(n) if v != root}

    in_cycle = np.zeros(n, dtype=bool)
    in_cycle[cycle] = True
    cycle_score = {v: weight[parent[v], v] for v in cycle}

    # build the contracted problem: cycle nodes merge into node `c`
    keep = [v for v in range(n) if not in_cycle[v]]
    c = len(keep)
    new_index = {v: k for k, v in enumerate(keep)}
    m = c + 1
    new_w = np.full((m, m), NEG_INF)
    # entering the cycle: u -> v in cycle scored relative to the cycle arc into v
    enter_choice = np.full((m,), -1, dtype=np.int64)  # which cycle vertex is entered, per source
    for u in keep:
        best_v, best_s = -1, NEG_INF
        for v in cycle:
            if weight[u, v] == NEG_INF:
                continue
            s = weight[u, v] - cycle_score[v]
            if s > best_s:
                best_s, best_v = s, v
        if best_v >= 0:
            new_w[new_index[u], c] = best_s
            enter_choice[new_index[u]] = best_v
    # leaving the cycle: best cycle source per destination
    leave_choice = np.full((m,), -1, dtype=np.int64)
    for v in keep:
        best_u, best_s = -1, NEG_INF
        for u in cycle:
            if weight[u, v] > best_s:
                best_s, best_u = weight[u, v], u
        if best_u >= 0:
            new_w[c, new_index[v]] = best_s
            leave_choice[new_index[v]] = best_u
    for u in keep:
        for v in keep:
            new_w[new_index[u], new_index[v]] = weight[u, v]

    sub = _msa_recurse(new_w, new_index[root])

    arcs: set[tuple[int, int]] = set()
    entered_at = -1
    for (u, v) in sub:
        if v == c:
            entered_at = int(enter_choice[u])
            arcs.add((keep[u], entered_at))
        elif u == c:
            arcs.add((int(leave_choice[v]), keep[v]))
        else:
            arcs.add((keep[u], keep[v]))
    # keep all cycle arcs except the one into the entry vertex
    for v in cycle:
        if v != entered_at:
            arcs.add((int(parent[v]), v))
    return arcs


def _find_cycle(parent: np.ndarray, root: int) -> list[int] | None:
    n = len(parent)
    color = np.zeros(n, dtype=np.int64)  # 0 unvisited, 1 on path, 2 done
    for start in range(n):
        if start == root or color[start] == 2:
            continue
        path = []
        v = start
        while v != root and color[v] == 0:
            color[v] = 1
            path.append(v)
            v = int(parent[v])
        if v != root and color[v] == 1:
            cycle = path[path.index(v):]
            return cycle
        for u in path:
            color[u] = 2
    return None


def lmo_arborescence(graph: ExtendedGraph, psi: np.ndarray) -> SolutionVector:
    """Best integral cluster-spanning solution under the linear objective ``psi``."""
    cg = contract(graph, psi)
    arcs = max_spanning_arborescence(cg, root=0)
    chosen = [int(cg.best_arc[u, v]) for u, v in arcs]
    return SolutionVector.from_arcs(graph, chosen)
