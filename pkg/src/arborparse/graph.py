"""Sentence graphs for joint tagging and dependency decoding.

For a sentence of n words and a grammar with m tags, the graph has a root
vertex plus, per word, one vertex per tag and one null vertex standing for
"this word carries no content".  Arcs go from the root to every non-root
vertex and between tag vertices of distinct words.  A parse is encoded as a
0/1 vector pair (x over vertices, y over arcs) selecting a spanning
arborescence over word clusters whose non-null part is a well-formed AST.

Vertex and arc indexing is a pure function of (n, grammar), so two graphs
built for the same inputs share index assignments.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grammar import Ast, Grammar, GrammarError, validate_ast

ROOT_LABEL = "ROOT"
NULL_LABEL = "NULL"


class InfeasibleSolutionError(ValueError):
    """A solution vector violates the search-space constraints.

    ``kind`` names the violated constraint class: ``"spanning"`` (cluster
    in-degree / connectivity / vertex-arc consistency), ``"root"`` (number of
    root arcs into content vertices) or ``"valency"``.
    """

    def __init__(self, kind: str, message: str):
        super().__init__(f"{kind}: {message}")
        self.kind = kind


@dataclass(frozen=True)
class _Layout:
    """Index bookkeeping shared by every graph over the same (n, grammar)."""

    n: int
    grammar: Grammar
    num_vertices: int
    num_arcs: int
    arc_src: np.ndarray
    arc_dst: np.ndarray
    # arcs_by_pair[i, j, :] lists arcs from cluster i to cluster j (-1 padded),
    # in increasing arc-index order.
    arcs_by_pair: np.ndarray
    # incoming_arcs[i - 1] lists all arcs entering word cluster i.
    incoming_arcs: tuple[np.ndarray, ...]
    # cluster_matrix[i - 1] lists the vertices of word cluster i (tags then null).
    cluster_matrix: np.ndarray
    # inter_pair_base[i - 1, j - 1] is the first arc index of the word pair
    # (i, j) block (arc for tags (p, q) is base + p*m + q); -1 on the diagonal.
    inter_pair_base: np.ndarray


def _build_layout(grammar: Grammar, n: int) -> _Layout:
    m = len(grammar.tags)
    width = m + 1
    nv = 1 + n * width

    root_dst = np.arange(1, nv, dtype=np.int64)
    root_src = np.zeros(nv - 1, dtype=np.int64)

    if n >= 2:
        ii, jj = np.meshgrid(np.arange(1, n + 1), np.arange(1, n + 1), indexing="ij")
        mask = ii != jj
        pi, pj = ii[mask], jj[mask]
        pp, qq = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
        src = 1 + (pi[:, None, None] - 1) * width + pp[None, :, :]
        dst = 1 + (pj[:, None, None] - 1) * width + qq[None, :, :]
        arc_src = np.concatenate([root_src, src.ravel()])
        arc_dst = np.concatenate([root_dst, dst.ravel()])
    else:
        arc_src, arc_dst = root_src, root_dst
    na = len(arc_src)

    n_root_arcs = n * width
    pair_block = m * m
    pmax = max(width, pair_block) if n >= 1 else 1
    arcs_by_pair = np.full((n + 1, n + 1, pmax), -1, dtype=np.int64)
    for j in range(1, n + 1):
        start = (j - 1) * width
        arcs_by_pair[0, j, :width] = np.arange(start, start + width)
    inter_pair_base = np.full((n, n), -1, dtype=np.int64)
    rank = 0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            start = n_root_arcs + rank * pair_block
            arcs_by_pair[i, j, :pair_block] = np.arange(start, start + pair_block)
            inter_pair_base[i - 1, j - 1] = start
            rank += 1

    incoming = []
    for j in range(1, n + 1):
        blocks = [arcs_by_pair[0, j, :width]]
        for i in range(1, n + 1):
            if i != j:
                blocks.append(arcs_by_pair[i, j, :pair_block])
        incoming.append(np.sort(np.concatenate(blocks)))

    cluster_matrix = np.arange(1, nv).reshape(n, width)

    return _Layout(
        n=n,
        grammar=grammar,
        num_vertices=nv,
        num_arcs=na,
        arc_src=arc_src,
        arc_dst=arc_dst,
        arcs_by_pair=arcs_by_pair,
        incoming_arcs=tuple(incoming),
        cluster_matrix=cluster_matrix,
        inter_pair_base=inter_pair_base,
    )


@lru_cache(maxsize=128)
def _layout_for(grammar: Grammar, n: int) -> _Layout:
    return _build_layout(grammar, n)


@dataclass
class ExtendedGraph:
    """The decoding graph for one sentence, with vertex and arc weights.

    ``mu`` and ``phi`` are treated as immutable after construction.  The root
    vertex weight is pinned to 0; weight sources cannot address it.
    """

    n: int
    grammar: Grammar
    mu: np.ndarray
    phi: np.ndarray
    words: tuple[str, ...] | None = None

    def __post_init__(self):
        self._layout = _layout_for(self.grammar, self.n)
        if self.mu.shape != (self.num_vertices,):
            raise ValueError(f"mu has shape {self.mu.shape}, expected ({self.num_vertices},)")
        if self.phi.shape != (self.num_arcs,):
            raise ValueError(f"phi has shape {self.phi.shape}, expected ({self.num_arcs},)")

    # -- layout delegation -------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return self._layout.num_vertices

    @property
    def num_arcs(self) -> int:
        return self._layout.num_arcs

    @property
    def num_tags(self) -> int:
        return len(self.grammar.tags)

    @property
    def arc_src(self) -> np.ndarray:
        return self._layout.arc_src

    @property
    def arc_dst(self) -> np.ndarray:
        return self._layout.arc_dst

    @property
    def arcs_by_pair(self) -> np.ndarray:
        return self._layout.arcs_by_pair

    @property
    def inter_pair_base(self) -> np.ndarray:
        return self._layout.inter_pair_base

    def tag_vertices(self, tag: str) -> np.ndarray:
        """The vertex carrying ``tag`` in every word cluster, cluster order."""
        p = self.grammar.tag_index(tag)
        return 1 + np.arange(self.n, dtype=np.int64) * (self.num_tags + 1) + p

    def cluster_vertices(self, i: int) -> np.ndarray:
        """Vertices of word cluster i (1-based): tag vertices then the null vertex."""
        return self._layout.cluster_matrix[i - 1]

    def incoming_arcs(self, i: int) -> np.ndarray:
        return self._layout.incoming_arcs[i - 1]

    # -- index arithmetic ----------------------------------------------------
    def vertex_index(self, word: int, tag: str) -> int:
        if not 1 <= word <= self.n:
            raise IndexError(f"word index {word} out of range 1..{self.n}")
        return 1 + (word - 1) * (self.num_tags + 1) + self.grammar.tag_index(tag)

    def null_index(self, word: int) -> int:
        if not 1 <= word <= self.n:
            raise IndexError(f"word index {word} out of range 1..{self.n}")
        return 1 + (word - 1) * (self.num_tags + 1) + self.num_tags

    def cluster_of(self, v: int) -> int:
        return 0 if v == 0 else 1 + (v - 1) // (self.num_tags + 1)

    def is_null(self, v: int) -> bool:
        return v != 0 and (v - 1) % (self.num_tags + 1) == self.num_tags

    def label(self, v: int) -> str:
        if v == 0:
            return ROOT_LABEL
        slot = (v - 1) % (self.num_tags + 1)
        return NULL_LABEL if slot == self.num_tags else self.grammar.tags[slot]

    def arc_index(self, src: int, dst: int) -> int:
        """Index of arc src -> dst; raises KeyError if the arc does not exist."""
        m = self.num_tags
        width = m + 1
        if src == dst or dst == 0:
            raise KeyError((src, dst))
        if src == 0:
            return dst - 1
        i, j = self.cluster_of(src), self.cluster_of(dst)
        p, q = (src - 1) % width, (dst - 1) % width
        if i == j or p == m or q == m:
            raise KeyError((src, dst))
        rank = (i - 1) * (self.n - 1) + (j - 1 if j < i else j - 2)
        return self.n * width + rank * m * m + p * m + q

    def has_arc(self, src: int, dst: int) -> bool:
        try:
            self.arc_index(src, dst)
            return True
        except KeyError:
            return False

    def outgoing_arcs_of_type(self, v: int, type_name: str) -> np.ndarray:
        """Arcs leaving tag vertex ``v`` whose destination tag has ``type_name``."""
        m = self.num_tags
        width = m + 1
        p = (v - 1) % width
        i = self.cluster_of(v)
        q_idx = np.array(
            [k for k, tag in enumerate(self.grammar.tags) if self.grammar.type_of(tag) == type_name],
            dtype=np.int64,
        )
        if v == 0 or p == m or q_idx.size == 0:
            return np.empty(0, dtype=np.int64)
        blocks = []
        for j in range(1, self.n + 1):
            if j == i:
                continue
            base = self.arcs_by_pair[i, j, 0]
            blocks.append(base + p * m + q_idx)
        if not blocks:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(blocks)


@dataclass(frozen=True)
class SolutionVector:
    """Nonnegative (x, y) vector pair over a graph's vertices and arcs.

    MAP solutions are 0/1; alignment vectors are nonnegative integer counts.
    """

    x: np.ndarray
    y: np.ndarray

    def concat(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @staticmethod
    def from_concat(graph: ExtendedGraph, z: np.ndarray) -> "SolutionVector":
        nv = graph.num_vertices
        return SolutionVector(x=z[:nv].copy(), y=z[nv:].copy())

    @staticmethod
    def zeros(graph: ExtendedGraph) -> "SolutionVector":
        return SolutionVector(
            x=np.zeros(graph.num_vertices), y=np.zeros(graph.num_arcs)
        )

    @staticmethod
    def from_arcs(graph: ExtendedGraph, arcs) -> "SolutionVector":
        """0/1 solution selecting ``arcs`` plus the vertices they enter and the root."""
        x = np.zeros(graph.num_vertices)
        y = np.zeros(graph.num_arcs)
        x[0] = 1.0
        for a in arcs:
            y[a] = 1.0
            x[graph.arc_dst[a]] += 1.0
        return SolutionVector(x=x, y=y)

    def is_integral(self, tol: float = 1e-6) -> bool:
        return bool(
            np.all(np.abs(self.x - np.round(self.x)) <= tol)
            and np.all(np.abs(self.y - np.round(self.y)) <= tol)
        )

    def rounded(self) -> "SolutionVector":
        return SolutionVector(x=np.round(self.x), y=np.round(self.y))


def build_graph(
    n: int,
    grammar: Grammar,
    mu: np.ndarray | None = None,
    phi: np.ndarray | None = None,
    words: tuple[str, ...] | None = None,
) -> ExtendedGraph:
    """Build the decoding graph for a sentence of length ``n``.

    Missing weights default to zero.  The root vertex weight is forced to 0.
    """
    if n < 1:
        raise ValueError("sentence length must be >= 1")
    layout = _layout_for(grammar, n)
    mu = np.zeros(layout.num_vertices) if mu is None else np.asarray(mu, dtype=float).copy()
    phi = np.zeros(layout.num_arcs) if phi is None else np.asarray(phi, dtype=float).copy()
    if mu.shape == (layout.num_vertices,):
        mu[0] = 0.0
    return ExtendedGraph(n=n, grammar=grammar, mu=mu, phi=phi, words=words)


def weight_of(graph: ExtendedGraph, z: SolutionVector) -> float:
    """Linear weight mu'x + phi'y of a solution vector."""
    if z.x.shape != graph.mu.shape or z.y.shape != graph.phi.shape:
        raise ValueError("solution dimensions do not match the graph")
    return float(graph.mu @ z.x + graph.phi @ z.y)


# -- weight files ------------------------------------------------------------

def _parse_weight_tag(graph: ExtendedGraph, word: int, tag: str, lineno: int) -> int:
    if tag == NULL_LABEL:
        return graph.null_index(word)
    if tag not in graph.grammar.tag_type:
        raise GrammarError(f"weight line {lineno}: unknown tag {tag!r}")
    return graph.vertex_index(word, tag)


def graph_from_weights(
    grammar: Grammar,
    sentence: str | list[str],
    weight_text: str,
) -> ExtendedGraph:
    """Build a graph for ``sentence`` with weights read from a weight file.

    Lines: ``vertex <word> <tag|NULL> <w>`` and
    ``arc <word|0> <tag|ROOT> <word> <tag|NULL> <w>``; unlisted entries are 0.
    """
    words = tuple(sentence.split()) if isinstance(sentence, str) else tuple(sentence)
    if not words:
        raise ValueError("empty sentence")
    graph = build_graph(len(words), grammar, words=words)
    mu, phi = graph.mu, graph.phi
    for lineno, raw in enumerate(weight_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if fields[0] == "vertex" and len(fields) == 4:
                word = int(fields[1])
                if not 1 <= word <= graph.n:
                    raise IndexError(f"weight line {lineno}: word index {word} out of range")
                v = _parse_weight_tag(graph, word, fields[2], lineno)
                mu[v] = float(fields[3])
            elif fields[0] == "arc" and len(fields) == 6:
                src_word, src_tag = int(fields[1]), fields[2]
                dst_word, dst_tag = int(fields[3]), fields[4]
                if src_word == 0:
                    if src_tag != ROOT_LABEL:
                        raise GrammarError(f"weight line {lineno}: arcs from word 0 must use {ROOT_LABEL}")
                    src = 0
                else:
                    if not 1 <= src_word <= graph.n:
                        raise IndexError(f"weight line {lineno}: word index {src_word} out of range")
                    src = graph.vertex_index(src_word, src_tag)
                if not 1 <= dst_word <= graph.n:
                    raise IndexError(f"weight line {lineno}: word index {dst_word} out of range")
                dst = _parse_weight_tag(graph, dst_word, dst_tag, lineno)
                try:
                    a = graph.arc_index(src, dst)
                except KeyError:
                    raise ValueError(f"weight line {lineno}: no such arc in the graph") from None
                phi[a] = float(fields[5])
            else:
                raise ValueError(f"weight line {lineno}: unrecognized entry {line!r}")
        except (ValueError, IndexError) as err:
            if isinstance(err, ValueError) and "weight line" in str(err):
                raise
            if isinstance(err, IndexError):
                raise ValueError(str(err) if "weight line" in str(err) else f"weight line {lineno}: {err}") from None
            raise ValueError(f"weight line {lineno}: {err}") from None
    mu[0] = 0.0
    return graph


# -- solutions <-> structures -------------------------------------------------

def selected_arcs(graph: ExtendedGraph, z: SolutionVector) -> list[int]:
    return [int(a) for a in np.nonzero(np.round(z.y) >= 1)[0]]


def check_solution(graph: ExtendedGraph, z: SolutionVector) -> None:
    """Raise InfeasibleSolutionError unless ``z`` encodes a feasible parse."""
    x = np.round(z.x)
    y = np.round(z.y)
    if np.any((y != 0) & (y != 1)) or np.any((x != 0) & (x != 1)):
        raise InfeasibleSolutionError("spanning", "solution is not 0/1")
    if x[0] != 1:
        raise InfeasibleSolutionError("spanning", "root vertex is not selected")

    arcs = np.nonzero(y == 1)[0]
    # one incoming arc per word cluster, x/y consistency
    indeg_vertex = np.zeros(graph.num_vertices)
    np.add.at(indeg_vertex, graph.arc_dst[arcs], 1.0)
    if np.any(indeg_vertex[1:] != x[1:]):
        raise InfeasibleSolutionError("spanning", "selected vertices do not match incoming arcs")
    for i in range(1, graph.n + 1):
        deg = indeg_vertex[graph.cluster_vertices(i)].sum()
        if deg != 1:
            raise InfeasibleSolutionError(
                "spanning", f"cluster {i} has {int(deg)} incoming arcs, expected 1"
            )
    # acyclicity at the cluster level
    parent = {}
    for a in arcs:
        src, dst = int(graph.arc_src[a]), int(graph.arc_dst[a])
        parent[graph.cluster_of(dst)] = graph.cluster_of(src)
    for start in parent:
        seen = set()
        i = start
        while i in parent:
            if i in seen:
                raise InfeasibleSolutionError("spanning", f"cluster cycle through {i}")
            seen.add(i)
            i = parent[i]
    # exactly one root arc into a content vertex
    root_content = sum(
        1
        for a in arcs
        if graph.arc_src[a] == 0 and not graph.is_null(int(graph.arc_dst[a]))
    )
    if root_content != 1:
        raise InfeasibleSolutionError("root", f"{root_content} root arcs into content vertices")
    # valency: every content vertex needs exactly x_v * args(tag, t) outgoing
    # t-typed arcs, which also forbids arcs leaving unselected vertices
    out_count: dict[tuple[int, str], int] = {}
    for a in arcs:
        src, dst = int(graph.arc_src[a]), int(graph.arc_dst[a])
        if src == 0 or graph.is_null(dst):
            continue
        t = graph.grammar.type_of(graph.label(dst))
        out_count[(src, t)] = out_count.get((src, t), 0) + 1
    content = [
        v
        for v in range(1, graph.num_vertices)
        if not graph.is_null(v) and (x[v] == 1 or any((v, t) in out_count for t in graph.grammar.types))
    ]
    for v in content:
        tag = graph.label(v)
        for t in graph.grammar.types:
            got = out_count.get((v, t), 0)
            want = int(x[v]) * graph.grammar.args(tag, t)
            if got != want:
                raise InfeasibleSolutionError(
                    "valency", f"vertex {v} ({tag}) has {got} outgoing {t} arcs, expected {want}"
                )


def solution_to_ast(graph: ExtendedGraph, z: SolutionVector) -> Ast:
    """Decode an integral feasible solution into its AST.

    Null vertices and the root arc are dropped.  Children are ordered by arc
    index, i.e. by destination word position.
    """
    check_solution(graph, z)
    y = np.round(z.y)
    arcs = [int(a) for a in np.nonzero(y == 1)[0]]
    root_arc = next(
        a for a in arcs if graph.arc_src[a] == 0 and not graph.is_null(int(graph.arc_dst[a]))
    )
    children: dict[int, list[int]] = {}
    for a in arcs:
        src, dst = int(graph.arc_src[a]), int(graph.arc_dst[a])
        if src == 0 or graph.is_null(dst):
            continue
        children.setdefault(src, []).append(dst)

    labels: list[str] = []
    ast_arcs: list[tuple[int, int]] = []

    def visit(v: int) -> int:
        node = len(labels)
        labels.append(graph.label(v))
        for w in sorted(children.get(v, [])):
            ast_arcs.append((node, len(labels)))
            visit(w)
        return node

    ast_root = visit(int(graph.arc_dst[root_arc]))
    ast = Ast(labels=tuple(labels), arcs=tuple(ast_arcs), root=ast_root)
    report = validate_ast(graph.grammar, ast)
    if not report.ok:
        raise InfeasibleSolutionError("valency", "; ".join(report.violations))
    return ast


def solution_anchors(graph: ExtendedGraph, z: SolutionVector) -> dict[int, int]:
    """Map preorder AST vertex ids of ``solution_to_ast`` to word positions."""
    check_solution(graph, z)
    y = np.round(z.y)
    arcs = [int(a) for a in np.nonzero(y == 1)[0]]
    root_arc = next(
        a for a in arcs if graph.arc_src[a] == 0 and not graph.is_null(int(graph.arc_dst[a]))
    )
    children: dict[int, list[int]] = {}
    for a in arcs:
        src, dst = int(graph.arc_src[a]), int(graph.arc_dst[a])
        if src == 0 or graph.is_null(dst):
            continue
        children.setdefault(src, []).append(dst)
    anchors: dict[int, int] = {}
    counter = iter(range(graph.num_vertices))

    def visit(v: int) -> None:
        anchors[next(counter)] = graph.cluster_of(v)
        for w in sorted(children.get(v, [])):
            visit(w)

    visit(int(graph.arc_dst[root_arc]))
    return anchors


# -- core-graph arc sets vs extended arc sets ---------------------------------

def _check_generalized_arborescence(graph: ExtendedGraph, arcs: set[int]) -> None:
    if not arcs:
        return
    used_clusters: dict[int, int] = {}
    indeg: dict[int, int] = {}
    vertices = set()
    for a in arcs:
        src, dst = int(graph.arc_src[a]), int(graph.arc_dst[a])
        vertices.update((src, dst))
        indeg[dst] = indeg.get(dst, 0) + 1
    for v in vertices:
        c = graph.cluster_of(v)
        if used_clusters.get(c, v) != v:
            raise ValueError(f"two vertices of cluster {c} are used")
        used_clusters[c] = v
        if indeg.get(v, 0) > 1:
            raise ValueError(f"vertex {v} has in-degree {indeg[v]}")
    roots = [v for v in vertices if indeg.get(v, 0) == 0]
    if roots != [0]:
        raise ValueError("arc set is not an arborescence rooted at the root vertex")
    # connectivity: every vertex reachable from 0
    children: dict[int, list[int]] = {}
    for a in arcs:
        children.setdefault(int(graph.arc_src[a]), []).append(int(graph.arc_dst[a]))
    seen = set()
    stack = [0]
    while stack:
        u = stack.pop()
        if u in seen:
            continue
        seen.add(u)
        stack.extend(children.get(u, []))
    if seen != vertices:
        raise ValueError("arc set is not connected from the root vertex")


def extend_solution(graph: ExtendedGraph, arcs: set[int]) -> set[int]:
    """Add root-to-null arcs for every cluster untouched by ``arcs``."""
    _check_generalized_arborescence(graph, arcs)
    touched = {graph.cluster_of(int(graph.arc_dst[a])) for a in arcs}
    extended = set(arcs)
    for i in range(1, graph.n + 1):
        if i not in touched:
            extended.add(graph.arc_index(0, graph.null_index(i)))
    return extended


def restrict_solution(graph: ExtendedGraph, arcs: set[int]) -> set[int]:
    """Drop all arcs entering null vertices."""
    return {a for a in arcs if not graph.is_null(int(graph.arc_dst[a]))}
