"""Training losses, the hashed linear scorer and the gradient-ascent trainer.

The likelihood of a parse is a Boltzmann distribution over feasible
solutions; its log-partition is intractable, so the supervised loss uses a
tractable upper bound: one log-sum-exp over the vertices of each word
cluster plus one over the arcs entering each cluster.  Minimizing the
resulting loss maximizes a lower bound on the log-likelihood (a
generalization of head-selection training).  The weakly supervised loss
follows hard EM: anchor the gold AST with the current weights, then take a
supervised step on the anchored target.

Weights come from a feature-hashed linear scorer: one table slot per
(word form, tag) pair for vertices and one per (head word, head tag,
dependent word, dependent tag) for arcs.
"""

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .anchoring import Alignment, latent_anchoring_target
from .graph import ExtendedGraph, SolutionVector, build_graph
from .grammar import Ast, Grammar, parse_program, validate_ast
from .solver import SolverConfig, latent_anchoring

DEFAULT_TABLE_SIZE = 1 << 20
_MIX = np.uint64(0x100000001B3)  # FNV-ish multiplier for slot mixing


@dataclass
class LossReport:
    value: float
    grad_mu: np.ndarray
    grad_phi: np.ndarray


def _cluster_incoming_matrix(graph: ExtendedGraph) -> np.ndarray:
    return np.stack([graph.incoming_arcs(i) for i in range(1, graph.n + 1)])


def surrogate_log_partition(graph: ExtendedGraph) -> tuple[float, np.ndarray, np.ndarray]:
    """Upper bound on the log-partition and its (mu, phi) gradients.

    Sum over word clusters of logsumexp(vertex weights) plus logsumexp
    (incoming-arc weights); the root cluster contributes nothing (its vertex
    weight is pinned to 0).  Gradients are the per-cluster softmax vectors.
    """
    n, m = graph.n, graph.num_tags
    mu_mat = graph.mu[1:].reshape(n, m + 1)
    inc = _cluster_incoming_matrix(graph)
    phi_mat = graph.phi[inc]

    value = float(logsumexp(mu_mat, axis=1).sum() + logsumexp(phi_mat, axis=1).sum())
    grad_mu = np.zeros_like(graph.mu)
    grad_mu[1:] = softmax(mu_mat, axis=1).ravel()
    grad_phi = np.zeros_like(graph.phi)
    np.add.at(grad_phi, inc.ravel(), softmax(phi_mat, axis=1).ravel())
    return value, grad_mu, grad_phi


def supervised_loss(graph: ExtendedGraph, target: SolutionVector) -> LossReport:
    """Negative surrogate log-likelihood of an observed (x, y) target.

    Loss = bound - (mu'x + phi'y); the gradient is the per-cluster softmax
    marginals minus the target.
    """
    if target.x.shape != graph.mu.shape or target.y.shape != graph.phi.shape:
        raise ValueError("target dimensions do not match the graph")
    bound, marg_mu, marg_phi = surrogate_log_partition(graph)
    value = bound - float(graph.mu @ target.x + graph.phi @ target.y)
    return LossReport(
        value=value,
        grad_mu=marg_mu - target.x,
        grad_phi=marg_phi - target.y,
    )


def weak_loss(graph: ExtendedGraph, ast: Ast, cfg: SolverConfig | None = None) -> LossReport:
    """Hard-EM loss: anchor the AST with current weights, then supervise on it."""
    alignment = latent_anchoring(graph, ast, cfg)
    target = latent_anchoring_target(graph, ast, alignment)
    return supervised_loss(graph, target)


# -- hashed linear scorer ------------------------------------------------------

@dataclass
class ScorerParams:
    """Feature-hashed weight tables for vertices and arcs.

    Hashing is deterministic (CRC32 of the word form mixed with tag indices
    modulo the table size); collisions are accepted.  Unseen features score 0.
    """

    table_size: int = DEFAULT_TABLE_SIZE
    learning_rate: float = 0.5
    hash_seed: int = 0
    vertex_table: np.ndarray = field(default=None)  # type: ignore[assignment]
    arc_table: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.vertex_table is None:
            self.vertex_table = np.zeros(self.table_size)
        if self.arc_table is None:
            self.arc_table = np.zeros(self.table_size)

    def copy(self) -> "ScorerParams":
        return ScorerParams(
            table_size=self.table_size,
            learning_rate=self.learning_rate,
            hash_seed=self.hash_seed,
            vertex_table=self.vertex_table.copy(),
            arc_table=self.arc_table.copy(),
        )


def _word_hashes(words: tuple[str, ...], seed: int) -> np.ndarray:
    return np.array(
        [zlib.crc32(w.encode("utf-8"), seed & 0xFFFFFFFF) for w in words], dtype=np.uint64
    )


@dataclass(frozen=True)
class FeatureSlots:
    """Precomputed hash-table slots for one (sentence, grammar) pair."""

    vertex_slots: np.ndarray  # per graph vertex; slot 0 unused for the root
    arc_slots: np.ndarray  # per graph arc


def feature_slots(params: ScorerParams, words: tuple[str, ...], grammar: Grammar) -> FeatureSlots:
    n, m = len(words), len(grammar.tags)
    size = np.uint64(params.table_size)
    wh = _word_hashes(words, params.hash_seed)

    # per-vertex: word hash of its cluster and tag index (m for NULL)
    tag_idx = np.tile(np.arange(m + 1, dtype=np.uint64), n)
    vert_words = np.repeat(wh, m + 1)
    vertex_keys = vert_words * _MIX + tag_idx
    vertex_slots = np.concatenate(
        [np.zeros(1, dtype=np.uint64), vertex_keys % size]
    ).astype(np.int64)

    graph = build_graph(n, grammar)
    src, dst = graph.arc_src, graph.arc_dst
    root_hash = np.uint64(zlib.crc32(b"<root>", params.hash_seed & 0xFFFFFFFF))
    width = m + 1
    src_cluster = np.where(src == 0, 0, 1 + (src - 1) // width)
    src_word = np.where(src == 0, root_hash, wh[np.clip(src_cluster - 1, 0, None)])
    src_tag = np.where(src == 0, np.uint64(m + 1), ((src - 1) % width).astype(np.uint64))
    dst_cluster = 1 + (dst - 1) // width
    dst_word = wh[dst_cluster - 1]
    dst_tag = ((dst - 1) % width).astype(np.uint64)
    arc_keys = ((src_word.astype(np.uint64) * _MIX + src_tag) * _MIX + dst_word) * _MIX + dst_tag
    arc_slots = (arc_keys % size).astype(np.int64)
    return FeatureSlots(vertex_slots=vertex_slots, arc_slots=arc_slots)


def score_graph(
    params: ScorerParams,
    sentence: str | list[str] | tuple[str, ...],
    grammar: Grammar,
    slots: FeatureSlots | None = None,
) -> ExtendedGraph:
    """Build the sentence graph with weights looked up from the tables."""
    words = tuple(sentence.split()) if isinstance(sentence, str) else tuple(sentence)
    if not words:
        raise ValueError("empty sentence")
    if slots is None:
        slots = feature_slots(params, words, grammar)
    mu = params.vertex_table[slots.vertex_slots]
    phi = params.arc_table[slots.arc_slots]
    return build_graph(len(words), grammar, mu=mu, phi=phi, words=words)


def apply_gradient(
    params: ScorerParams, slots: FeatureSlots, report: LossReport
) -> None:
    """One in-place descent step on the loss; only touched slots change."""
    lr = params.learning_rate
    np.subtract.at(params.vertex_table, slots.vertex_slots[1:], lr * report.grad_mu[1:])
    np.subtract.at(params.arc_table, slots.arc_slots, lr * report.grad_phi)


def save_params(path: str, params: ScorerParams) -> None:
    np.savez_compressed(
        path,
        version=1,
        table_size=params.table_size,
        learning_rate=params.learning_rate,
        hash_seed=params.hash_seed,
        vertex_table=params.vertex_table,
        arc_table=params.arc_table,
    )


def load_params(path: str) -> ScorerParams:
    data = np.load(path)
    version = int(data["version"])
    if version != 1:
        raise ValueError(f"unsupported checkpoint version: {version}")
    return ScorerParams(
        table_size=int(data["table_size"]),
        learning_rate=float(data["learning_rate"]),
        hash_seed=int(data["hash_seed"]),
        vertex_table=data["vertex_table"],
        arc_table=data["arc_table"],
    )


# -- dataset -------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    words: tuple[str, ...]
    program: str
    anchoring: dict[int, int] | None = None  # AST vertex -> word position (1-based)


class DatasetError(ValueError):
    pass


def parse_dataset(text: str, grammar: Grammar) -> list[Instance]:
    """TSV lines ``sentence<TAB>program[<TAB>anchoring]``.

    The anchoring column holds space-separated ``astVertexIndex:wordIndex``
    pairs over preorder AST vertex ids and 1-based word positions.
    """
    out: list[Instance] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) not in (2, 3):
            raise DatasetError(f"line {lineno}: expected 2 or 3 tab-separated fields")
        words = tuple(parts[0].split())
        if not words:
            raise DatasetError(f"line {lineno}: empty sentence")
        try:
            ast = parse_program(parts[1], grammar)
        except ValueError as err:
            raise DatasetError(f"line {lineno}: {err}") from None
        report = validate_ast(grammar, ast)
        if not report.ok:
            raise DatasetError(f"line {lineno}: invalid program: {report.violations[0]}")
        anchoring = None
        if len(parts) == 3 and parts[2].strip():
            anchoring = {}
            for pair in parts[2].split():
                try:
                    u_text, w_text = pair.split(":")
                    u, w = int(u_text), int(w_text)
                except ValueError:
                    raise DatasetError(f"line {lineno}: bad anchoring pair {pair!r}") from None
                if not 0 <= u < len(ast):
                    raise DatasetError(f"line {lineno}: anchoring names AST vertex {u}")
                if not 1 <= w <= len(words):
                    raise DatasetError(f"line {lineno}: anchoring names word {w}")
                anchoring[u] = w
            if len(anchoring) != len(ast):
                raise DatasetError(f"line {lineno}: anchoring must cover every AST vertex")
        out.append(Instance(words=words, program=parts[1].strip(), anchoring=anchoring))
    return out


def format_instance(instance: Instance) -> str:
    fields = [" ".join(instance.words), instance.program]
    if instance.anchoring is not None:
        fields.append(" ".join(f"{u}:{w}" for u, w in sorted(instance.anchoring.items())))
    return "\t".join(fields)


def anchoring_target(
    graph: ExtendedGraph, ast: Ast, anchoring: dict[int, int]
) -> SolutionVector:
    """Full 0/1 solution for a known anchoring: anchored vertices and arcs,
    the root arc, and root-to-null arcs for every unanchored word."""
    assign = {u: graph.vertex_index(w, ast.labels[u]) for u, w in anchoring.items()}
    return latent_anchoring_target(graph, ast, Alignment(assign=assign))


# -- trainer -------------------------------------------------------------------

def train(
    dataset: list[Instance],
    grammar: Grammar,
    mode: str,
    epochs: int,
    params: ScorerParams,
    cfg: SolverConfig | None = None,
    log=None,
) -> ScorerParams:
    """Plain stochastic gradient descent on the chosen loss, in dataset order.

    Supervised mode needs gold anchorings.  Weak mode re-anchors every
    instance at the start of each epoch (hard EM) and supervises on the
    anchored targets within the epoch.
    """
    if mode not in ("supervised", "weak"):
        raise ValueError(f"unknown training mode: {mode!r}")
    if not dataset or epochs <= 0:
        return params
    cfg = cfg or SolverConfig(max_iters=100, eps=1e-4)

    prepared = []
    for inst in dataset:
        ast = parse_program(inst.program, grammar)
        slots = feature_slots(params, inst.words, grammar)
        target = None
        if mode == "supervised":
            if inst.anchoring is None:
                raise DatasetError("supervised training needs an anchoring column")
            graph = build_graph(len(inst.words), grammar, words=inst.words)
            target = anchoring_target(graph, ast, inst.anchoring)
        prepared.append((inst, ast, slots, target))

    for epoch in range(epochs):
        epoch_loss = 0.0
        if mode == "weak":
            targets = []
            for inst, ast, slots, _ in prepared:
                graph = score_graph(params, inst.words, grammar, slots=slots)
                alignment = latent_anchoring(graph, ast, cfg)
                targets.append(latent_anchoring_target(graph, ast, alignment))
        for idx, (inst, ast, slots, target) in enumerate(prepared):
            graph = score_graph(params, inst.words, grammar, slots=slots)
            if mode == "weak":
                target = targets[idx]
            report = supervised_loss(graph, target)
            apply_gradient(params, slots, report)
            epoch_loss += report.value
        if log is not None:
            log(epoch, epoch_loss / len(prepared))
    return params


def predict_program(
    params: ScorerParams,
    words: tuple[str, ...],
    grammar: Grammar,
    cfg: SolverConfig | None = None,
) -> Ast | None:
    """Decode one sentence with the scorer; None when no feasible parse exists."""
    from .graph import solution_to_ast
    from .solver import map_inference

    graph = score_graph(params, words, grammar)
    result = map_inference(graph, cfg)
    if not result.integral_feasible:
        return None
    return solution_to_ast(graph, result.z_integral)


def exact_match_accuracy(
    params: ScorerParams,
    dataset: list[Instance],
    grammar: Grammar,
    cfg: SolverConfig | None = None,
) -> float:
    """Fraction of instances whose decoded program matches the gold one
    (same-type argument order ignored)."""
    from .grammar import canonical_program

    if not dataset:
        return 0.0
    hits = 0
    for inst in dataset:
        gold = parse_program(inst.program, grammar)
        pred = predict_program(params, inst.words, grammar, cfg)
        if pred is not None and canonical_program(grammar, pred) == canonical_program(grammar, gold):
            hits += 1
    return hits / len(dataset)
