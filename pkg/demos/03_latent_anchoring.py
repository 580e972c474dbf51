#!/usr/bin/env python3
# Latent anchoring: align a known program onto a sentence.
#
# Training data gives the program but not which word carries which
# predicate.  The relaxed alignment chart finds the best unconstrained
# anchoring; cluster penalties discourage reusing a word; Kuhn-Munkres on
# the fractional vertex mass returns the final injective anchoring.

import numpy as np

from arborparse import (
    backtrack_alignment,
    build_graph,
    dp_alignment,
    latent_anchoring,
    lmo_alignment,
    parse_grammar,
    parse_program,
)

grammar = parse_grammar("""
type e
tag state e e=1
tag loc_1 e e=1
tag most e e=1
tag major e e=1
tag city_all e
""")

sentence = "What state has the most major cities ?".split()
program = "most(state(loc_1(major(city_all))))"
ast = parse_program(program, grammar)

# hand-set vertex scores: +1 for each plausible word/tag pair
graph = build_graph(len(sentence), grammar, words=tuple(sentence))
plausible = {"state": 2, "loc_1": 3, "most": 5, "major": 6, "city_all": 7}
for tag, word in plausible.items():
    graph.mu[graph.vertex_index(word, tag)] = 1.0

# ---------------------------------------------------------------------------
# The unconstrained chart: each AST vertex picks its best word independently
value, chart = dp_alignment(graph, ast)
unconstrained = backtrack_alignment(chart)
print("unconstrained alignment value:", value)
for u, v in sorted(unconstrained.assign.items()):
    print(f"  {ast.labels[u]:<9} -> word {graph.cluster_of(v)} ({sentence[graph.cluster_of(v)-1]!r})")

# its count vector is the linear maximization oracle of the anchoring solver
z = lmo_alignment(graph, ast, np.concatenate([graph.mu, graph.phi]))
print("vertex counts above 1 would trigger the cluster penalty:", int(z.x.max()))

# ---------------------------------------------------------------------------
# Full pipeline: conditional gradient + Hungarian rounding
alignment = latent_anchoring(graph, ast)
print("\nfinal anchoring (astVertex:word):", alignment.pairs_text(graph))
for u, v in sorted(alignment.assign.items()):
    w = graph.cluster_of(v)
    print(f"  {ast.labels[u]:<9} anchored on {sentence[w-1]!r}")
