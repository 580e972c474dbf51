"""Command-line surface: parse, align, train, eval, selftest.

Every command reads its file formats from the owning modules (grammar files,
weight files, TSV datasets, npz checkpoints).  When ``--out`` is given, a
JSON run manifest that reconstructs the invocation is written next to the
output.  Per-instance failures are data (FAIL lines), not crashes; the exit
code is nonzero only when the requested work itself could not run.
"""

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .grammar import canonical_program, parse_grammar, parse_program
from .graph import graph_from_weights, solution_anchors, solution_to_ast, weight_of
from .losses import (
    ScorerParams,
    exact_match_accuracy,
    load_params,
    parse_dataset,
    save_params,
    score_graph,
    train,
)
from .solver import SolverConfig, latent_anchoring, map_inference
from . import selftest as selftest_mod


@dataclass
class RunManifest:
    command: str
    grammar: str | None
    inputs: list[str]
    config: dict = field(default_factory=dict)
    seed: int | None = None
    timing_seconds: float = 0.0

    def write(self, out_path: str) -> None:
        with open(out_path + ".manifest.json", "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        beta0=args.beta0,
        max_iters=args.iters,
        eps=args.eps,
    )


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--iters", type=int, default=500, help="conditional gradient iteration cap")
    p.add_argument("--eps", type=float, default=1e-6, help="dual gap tolerance")
    p.add_argument("--beta0", type=float, default=1.0, help="initial smoothness")
    p.add_argument("--seed", type=int, default=0, help="run seed, recorded in the manifest")
    p.add_argument("--verbose", action="store_true", help="emit solver diagnostics on stderr")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _emit(lines: list[str], out: str | None) -> None:
    text = "".join(line + "\n" for line in lines)
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _trace_to_stderr(sentence_id, trace) -> None:
    for k, beta, objective, gap in trace:
        sys.stderr.write(
            f"sentence={sentence_id} iter={k} beta={beta:.6g} objective={objective:.6g} gap={gap:.6g}\n"
        )


def cmd_parse(args) -> int:
    grammar = parse_grammar(_read_text(args.grammar))
    if (args.weights is None) == (args.checkpoint is None):
        sys.stderr.write("parse: exactly one of --weights or --checkpoint is required\n")
        return 2
    weight_text = _read_text(args.weights) if args.weights else None
    params = load_params(args.checkpoint) if args.checkpoint else None
    sentences = [s for s in _read_lines(args.sentences) if s.strip()]
    cfg = _solver_config(args)
    start = time.perf_counter()

    def run(item):
        idx, sentence = item
        words = tuple(sentence.split())
        if weight_text is not None:
            graph = graph_from_weights(grammar, words, weight_text)
        else:
            graph = score_graph(params, words, grammar)
        result = map_inference(graph, cfg)
        gap = f"{result.dual_gap:.6g}"
        if args.no_round and not result.was_integral:
            support = np.flatnonzero(result.z_fractional.y > 1e-6)
            detail = ";".join(
                f"{graph.label(int(graph.arc_src[a]))}->{graph.label(int(graph.arc_dst[a]))}"
                f"@{result.z_fractional.y[a]:.3f}"
                for a in support[:8]
            )
            return idx, f"FRACTIONAL\t{gap}\tfractional\t{detail}", result.trace
        if not result.integral_feasible:
            return idx, f"FAIL\t{gap}\tinfeasible", result.trace
        ast = solution_to_ast(graph, result.z_integral)
        flag = "integral" if result.was_integral else "rounded"
        from .grammar import serialize_ast

        return idx, f"{serialize_ast(ast)}\t{gap}\t{flag}", result.trace

    items = list(enumerate(sentences))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]
    results.sort(key=lambda r: r[0])
    lines = [line for _, line, _ in results]
    if args.verbose:
        for idx, _, trace in results:
            _trace_to_stderr(idx, trace)
    _emit(lines, args.out)
    if args.out:
        RunManifest(
            command="parse",
            grammar=args.grammar,
            inputs=[args.sentences, args.weights or args.checkpoint],
            config={"iters": args.iters, "eps": args.eps, "beta0": args.beta0,
                    "jobs": args.jobs, "no_round": args.no_round},
            seed=args.seed,
            timing_seconds=time.perf_counter() - start,
        ).write(args.out)
    return 0


def cmd_align(args) -> int:
    grammar = parse_grammar(_read_text(args.grammar))
    params = load_params(args.checkpoint) if args.checkpoint else None
    weight_text = _read_text(args.weights) if args.weights else None
    if (params is None) == (weight_text is None):
        sys.stderr.write("align: exactly one of --weights or --checkpoint is required\n")
        return 2
    dataset = parse_dataset(_read_text(args.dataset), grammar)
    cfg = _solver_config(args)
    start = time.perf_counter()
    lines = []
    for inst in dataset:
        ast = parse_program(inst.program, grammar)
        if weight_text is not None:
            graph = graph_from_weights(grammar, inst.words, weight_text)
        else:
            graph = score_graph(params, inst.words, grammar)
        try:
            alignment = latent_anchoring(graph, ast, cfg)
            lines.append(alignment.pairs_text(graph))
        except ValueError as err:
            lines.append(f"FAIL\t{err}")
    _emit(lines, args.out)
    if args.out:
        RunManifest(
            command="align",
            grammar=args.grammar,
            inputs=[args.dataset, args.weights or args.checkpoint],
            config={"iters": args.iters, "eps": args.eps, "beta0": args.beta0},
            seed=args.seed,
            timing_seconds=time.perf_counter() - start,
        ).write(args.out)
    return 0


def cmd_train(args) -> int:
    grammar = parse_grammar(_read_text(args.grammar))
    dataset = parse_dataset(_read_text(args.dataset), grammar)
    dev = parse_dataset(_read_text(args.dev), grammar) if args.dev else None
    params = ScorerParams(learning_rate=args.lr)
    cfg = SolverConfig(max_iters=args.iters, eps=args.eps, beta0=args.beta0)
    start = time.perf_counter()
    for epoch in range(args.epochs):
        train(dataset, grammar, args.mode, 1, params, cfg=cfg,
              log=lambda _e, loss: sys.stderr.write(f"epoch={epoch} loss={loss:.6f}\n"))
        if dev is not None:
            acc = exact_match_accuracy(params, dev, grammar, cfg)
            sys.stderr.write(f"epoch={epoch} dev_exact={acc:.4f}\n")
    save_params(args.out, params)
    RunManifest(
        command="train",
        grammar=args.grammar,
        inputs=[args.dataset] + ([args.dev] if args.dev else []),
        config={"mode": args.mode, "epochs": args.epochs, "lr": args.lr,
                "iters": args.iters, "eps": args.eps, "beta0": args.beta0},
        seed=args.seed,
        timing_seconds=time.perf_counter() - start,
    ).write(args.out)
    return 0


def cmd_eval(args) -> int:
    grammar = parse_grammar(_read_text(args.grammar))
    gold_lines = [l for l in _read_lines(args.gold) if l.strip()]
    pred_lines = [l for l in _read_lines(args.predicted) if l.strip()]
    if len(gold_lines) != len(pred_lines):
        sys.stderr.write(
            f"eval: {len(gold_lines)} gold programs but {len(pred_lines)} predictions\n"
        )
        return 2
    hits = 0
    for gold_text, pred_text in zip(gold_lines, pred_lines):
        gold = canonical_program(grammar, parse_program(gold_text, grammar))
        try:
            pred = canonical_program(grammar, parse_program(pred_text.split("\t")[0], grammar))
        except ValueError:
            continue  # FAIL markers and malformed predictions count as misses
        if gold == pred:
            hits += 1
    accuracy = hits / len(gold_lines) if gold_lines else 1.0
    sys.stdout.write(f"{accuracy:.4f}\n")
    return 0


def cmd_selftest(args) -> int:
    report = selftest_mod.run_selftest(
        seed=args.seed,
        instances=args.instances,
        tol_scale=args.tol_scale,
        checks=args.only,
        verbose=args.verbose,
    )
    sys.stdout.write(report.text())
    return 0


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="arborparse",
        description="Graph-based semantic parsing with valency-constrained arborescences",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse sentences into programs")
    p.add_argument("sentences", help="file with one sentence per line")
    p.add_argument("--grammar", required=True)
    p.add_argument("--weights", default=None, help="weight file for deterministic decoding")
    p.add_argument("--checkpoint", default=None, help="trained scorer checkpoint (npz)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over sentences")
    p.add_argument("--no-round", action="store_true", dest="no_round",
                   help="emit fractional diagnostics instead of rounding")
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_parse)

    p = sub.add_parser("align", help="anchor gold programs on their sentences")
    p.add_argument("dataset", help="TSV file: sentence<TAB>program")
    p.add_argument("--grammar", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--weights", default=None)
    _add_solver_flags(p)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("train", help="train the linear scorer")
    p.add_argument("dataset", help="TSV file: sentence<TAB>program[<TAB>anchoring]")
    p.add_argument("--grammar", required=True)
    p.add_argument("--mode", choices=["supervised", "weak"], required=True)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--dev", default=None, help="dev TSV for per-epoch exact match")
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--beta0", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint output path (npz)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="exact-match accuracy of predictions")
    p.add_argument("gold", help="file with one gold program per line")
    p.add_argument("predicted", help="file with one predicted program per line")
    p.add_argument("--grammar", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("selftest", help="run the oracle-backed property suite")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--instances", type=int, default=None,
                   help="override the per-check instance counts (smaller = faster)")
    p.add_argument("--tol-scale", type=float, default=1.0, dest="tol_scale",
                   help="multiply every tolerance (tighten with values < 1)")
    p.add_argument("--only", nargs="*", default=None, help="run only the named checks")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_selftest)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except FileNotFoundError as err:
        sys.stderr.write(f"{err}\n")
        return 2
    except ValueError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
