"""Random grammars, ASTs, weights and toy datasets for tests and self-checks.

Everything is driven by a numpy Generator so runs are reproducible.  The toy
language pairs each tag with a small disjoint vocabulary; sentences are the
shuffled words of the AST's vertices plus filler words, so a linear scorer
can learn the word-to-tag mapping (and, weakly supervised, discover it).
"""

import numpy as np

from .grammar import Ast, Grammar, is_entity
from .graph import ExtendedGraph, build_graph
from .losses import Instance


def random_grammar(
    rng: np.random.Generator,
    num_tags: int = 3,
    num_types: int = 1,
    max_arity: int = 2,
) -> Grammar:
    """A random grammar with at least one entity per type.

    The first tag of every type is an entity, so every argument slot can be
    closed and random ASTs always terminate.
    """
    num_types = min(num_types, num_tags)
    types = tuple(f"t{j}" for j in range(num_types))
    tags = tuple(f"k{i}" for i in range(num_tags))
    tag_type: dict[str, str] = {}
    tag_args: dict[tuple[str, str], int] = {}
    for i, tag in enumerate(tags):
        tag_type[tag] = types[i % num_types]
    seen_entity = {t: False for t in types}
    for i, tag in enumerate(tags):
        t = tag_type[tag]
        if not seen_entity[t]:
            seen_entity[t] = True
            continue  # first tag of each type stays an entity
        arity = int(rng.integers(0, max_arity + 1))
        for _ in range(arity):
            arg_t = types[int(rng.integers(0, num_types))]
            tag_args[(tag, arg_t)] = tag_args.get((tag, arg_t), 0) + 1
    return Grammar(tags=tags, types=types, tag_type=tag_type, tag_args=tag_args)


def random_ast(grammar: Grammar, rng: np.random.Generator, max_vertices: int = 5) -> Ast:
    """Grow a valid AST of at most ``max_vertices`` vertices.

    A candidate tag is admissible for a slot while the minimal completion
    (every open slot closed by an entity) still fits the budget, so sampling
    always terminates within it.
    """
    demanded = {t for t in grammar.types if any(grammar.args(e, t) > 0 for e in grammar.tags)}
    for t in demanded:
        pool = grammar.tags_of_type(t)
        if not pool or not any(is_entity(grammar, e) for e in pool):
            raise ValueError(f"grammar has no entity of type {t}; sampling cannot terminate")

    labels: list[str] = []
    arcs: list[tuple[int, int]] = []
    open_slots = 0

    def slots_of(tag: str) -> list[str]:
        out = []
        for t in grammar.types:
            out.extend([t] * grammar.args(tag, t))
        return out

    def pick(t: str) -> str:
        pool = [
            e
            for e in grammar.tags_of_type(t)
            if len(labels) + 1 + open_slots + grammar.arity(e) <= max_vertices
        ]
        return pool[int(rng.integers(0, len(pool)))]

    def grow(tag: str) -> int:
        nonlocal open_slots
        node = len(labels)
        labels.append(tag)
        slots = slots_of(tag)
        open_slots += len(slots)
        for t in slots:
            open_slots -= 1
            arcs.append((node, len(labels)))
            grow(pick(t))
        return node

    roots = [e for e in grammar.tags if 1 + grammar.arity(e) <= max_vertices]
    if not roots:
        raise ValueError("max_vertices too small for every tag in the grammar")
    grow(roots[int(rng.integers(0, len(roots)))])
    return Ast(labels=tuple(labels), arcs=tuple(arcs), root=0)


def random_weighted_graph(
    grammar: Grammar,
    n: int,
    rng: np.random.Generator,
    low: float = -1.0,
    high: float = 1.0,
) -> ExtendedGraph:
    """Graph with weights uniform in [low, high]; the root weight stays 0."""
    graph = build_graph(n, grammar)
    mu = rng.uniform(low, high, graph.num_vertices)
    mu[0] = 0.0
    phi = rng.uniform(low, high, graph.num_arcs)
    return build_graph(n, grammar, mu=mu, phi=phi)


def toy_language_grammar(
    rng: np.random.Generator,
    num_tags: int = 8,
    num_types: int = 2,
    max_arity: int = 2,
    words_per_tag: int = 1,
) -> tuple[Grammar, dict[str, list[str]], list[str]]:
    """A grammar plus a word list per tag and filler words for toy sentences.

    One surface word per tag keeps arc features (which hash the word pair)
    dense enough to learn from a few hundred instances.
    """
    grammar = random_grammar(rng, num_tags=num_tags, num_types=num_types, max_arity=max_arity)
    vocab = {tag: [f"{tag}w{j}" for j in range(words_per_tag)] for tag in grammar.tags}
    fillers = [f"f{j}" for j in range(4)]
    return grammar, vocab, fillers


def sample_instance(
    grammar: Grammar,
    vocab: dict[str, list[str]],
    fillers: list[str],
    rng: np.random.Generator,
    max_vertices: int = 4,
    max_fillers: int = 2,
    with_anchoring: bool = True,
    language: dict[tuple[str, ...], str] | None = None,
) -> Instance:
    """One toy sentence: the AST's words plus fillers, in random order.

    With a ``language`` table, the mapping from content-word multiset to
    program is kept functional across all instances sharing the table (the
    shuffled word order carries no signal, so an ambiguous multiset would be
    unlearnable by construction).  The table requires one word per tag.
    """
    from .grammar import parse_program, serialize_ast

    ast = random_ast(grammar, rng, max_vertices=max_vertices)
    if language is not None:
        if any(len(ws) != 1 for ws in vocab.values()):
            raise ValueError("a functional toy language needs exactly one word per tag")
        key = tuple(sorted(vocab[tag][0] for tag in ast.labels))
        if key in language:
            ast = parse_program(language[key], grammar)
        else:
            language[key] = serialize_ast(ast)
    items: list[tuple[str, int | None]] = []
    for u in range(len(ast)):
        word_pool = vocab[ast.labels[u]]
        items.append((word_pool[int(rng.integers(0, len(word_pool)))], u))
    for _ in range(int(rng.integers(0, max_fillers + 1))):
        items.append((fillers[int(rng.integers(0, len(fillers)))], None))
    order = rng.permutation(len(items))
    words = tuple(items[i][0] for i in order)
    anchoring = {}
    for pos, i in enumerate(order, start=1):
        u = items[i][1]
        if u is not None:
            anchoring[u] = pos
    return Instance(
        words=words,
        program=serialize_ast(ast),
        anchoring=anchoring if with_anchoring else None,
    )


def sample_dataset(
    grammar: Grammar,
    vocab: dict[str, list[str]],
    fillers: list[str],
    rng: np.random.Generator,
    size: int,
    with_anchoring: bool = True,
    max_vertices: int = 4,
    language: dict[tuple[str, ...], str] | None = None,
) -> list[Instance]:
    return [
        sample_instance(
            grammar,
            vocab,
            fillers,
            rng,
            max_vertices=max_vertices,
            with_anchoring=with_anchoring,
            language=language,
        )
        for _ in range(size)
    ]
