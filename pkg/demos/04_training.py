#!/usr/bin/env python3
# Train the linear scorer on a synthetic language, two ways.
#
# Supervised: gold anchorings are available, so each step is a closed-form
# gradient on the surrogate likelihood.  Weakly supervised: only the program
# is known; each epoch re-anchors every instance with the current weights
# (hard EM) and supervises on the anchored targets.

import time

import numpy as np

from arborparse import Instance, ScorerParams, train
from arborparse.losses import exact_match_accuracy
from arborparse.solver import SolverConfig
from arborparse.synthetic import sample_dataset, toy_language_grammar

rng = np.random.default_rng(0)
grammar, vocab, fillers = toy_language_grammar(rng, num_tags=8, num_types=2)
language = {}
train_set = sample_dataset(grammar, vocab, fillers, rng, 300, with_anchoring=True, language=language)
test_set = sample_dataset(grammar, vocab, fillers, rng, 60, with_anchoring=False, language=language)

print("tags:", ", ".join(f"{t}/{grammar.arity(t)}" for t in grammar.tags))
print("sample sentence:", " ".join(train_set[0].words))
print("sample program: ", train_set[0].program)
print()

eval_cfg = SolverConfig(max_iters=200)
train_cfg = SolverConfig(max_iters=100, eps=1e-4)

# ---------------------------------------------------------------------------
# supervised
params = ScorerParams(learning_rate=0.5)
t0 = time.perf_counter()
train(
    train_set, grammar, "supervised", 15, params, cfg=train_cfg,
    log=lambda e, loss: print(f"  epoch {e:2d}  loss {loss:8.4f}") if e % 5 == 0 else None,
)
acc = exact_match_accuracy(params, test_set, grammar, eval_cfg)
print(f"supervised: exact match {acc:.2%} in {time.perf_counter() - t0:.1f}s")
print()

# ---------------------------------------------------------------------------
# weakly supervised (programs only, anchorings latent)
weak_train = [Instance(words=i.words, program=i.program) for i in train_set]
params = ScorerParams(learning_rate=0.5)
t0 = time.perf_counter()
train(
    weak_train, grammar, "weak", 15, params, cfg=train_cfg,
    log=lambda e, loss: print(f"  epoch {e:2d}  loss {loss:8.4f}") if e % 5 == 0 else None,
)
acc = exact_match_accuracy(params, test_set, grammar, eval_cfg)
print(f"weak (hard EM): exact match {acc:.2%} in {time.perf_counter() - t0:.1f}s")
