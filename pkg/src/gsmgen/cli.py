"""Command-line front door.

Subcommands:

  gen      sample problems and canonical solutions as JSONL records
           {statement, question, solution, op, layout, seed, graph_digest}
  augment  splice retry fragments into gen records
           {text, mode, retry_rate, events, mask_spans, seed, problem}
  verify   check candidate texts; emits per-record reports or an aggregate
           (a failed verification is data, exit code stays 0)
  eval     run a decoding controller over a generated problem set and print
           accuracy statistics as JSON
  pack     tokenize and pack records into training sequences (jsonl or the
           little-endian binary format with a .mask sidecar)

All randomness is seeded; identical inputs and flags give byte-identical
output. Records stream on stdin/stdout unless --input/--output are given.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import replace

from . import augment as aug
from . import corpus, graphgen, harness, render, verify
from .errors import GsmgenError


def _read_records(path: str | None):
    fh = open(path, "r", encoding="utf-8") if path else sys.stdin
    try:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)
    finally:
        if path:
            fh.close()


class _Writer:
    def __init__(self, path: str | None):
        self.path = path
        self.fh = open(path, "w", encoding="utf-8") if path else sys.stdout

    def record(self, obj: dict) -> None:
        self.fh.write(json.dumps(obj) + "\n")

    def close(self) -> None:
        if self.path:
            self.fh.close()


def _config_from_args(args) -> graphgen.GenConfig:
    config = graphgen.load_config(args.config) if getattr(args, "config", None) \
        else graphgen.preset_config(args.preset)
    if getattr(args, "universe", None):
        config = replace(config, universe=args.universe)
    return config.validated()


def _op_for(args, rng_key: str) -> int:
    if args.op is not None:
        return args.op
    if args.op_range:
        lo, hi = args.op_range
        return random.Random(rng_key).randint(lo, hi)
    config = _config_from_args(args)
    return random.Random(rng_key).randint(2, config.op_train_max)


def _parse_op_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}")
    if lo_i < 1 or hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"bad op range {text!r}")
    return lo_i, hi_i


def _gen_one(config, args, index: int):
    seed = args.seed
    op = _op_for(args, f"op:{seed}:{index}")
    g = graphgen.sample_problem_graph(config, op, seed * 1_000_003 + index)
    if args.reask:
        g = graphgen.reask(g, seed * 9_000_003 + index)
    render_seed = seed * 7_000_003 + index
    problem = render.render_problem(g, args.layout, render_seed)
    solution = render.render_solution(g, render_seed, include_answer=not args.no_answer)
    return problem, solution


def gen_record(problem: render.Problem, solution: render.SolutionScript) -> dict:
    g = problem.graph
    return {
        "statement": problem.statement,
        "question": problem.question,
        "solution": solution.text,
        "op": g.op,
        "layout": problem.layout,
        "seed": problem.seed,
        "graph_digest": graphgen.graph_digest(g),
    }


def _cmd_gen(args) -> int:
    config = _config_from_args(args)
    out = _Writer(args.output)
    try:
        for i in range(args.n):
            problem, solution = _gen_one(config, args, i)
            out.record(gen_record(problem, solution))
    finally:
        out.close()
    return 0


_MODES = {"retry": aug.MODE_RETRY, "weak": aug.MODE_WEAK, "miss": aug.MODE_MISS}


MAX_RETRY_RATE = 0.99  # geometric insertion degenerates as the rate approaches 1


def _cmd_augment(args) -> int:
    if not 0.0 <= args.retry_rate <= MAX_RETRY_RATE:
        raise GsmgenError(f"retry_rate must lie in [0,1), got {args.retry_rate}"
                          if not 0.0 <= args.retry_rate < 1.0 else
                          f"retry_rate is capped at {MAX_RETRY_RATE}")
    out = _Writer(args.output)
    try:
        for i, rec in enumerate(_read_records(args.input)):
            problem = verify.problem_of_record(rec)
            script = render.script_from_text(problem.graph, rec["solution"])
            seed = args.seed * 500_009 + i
            if args.mode == "retry":
                sample = aug.inject_retry(script, problem.graph, args.retry_rate,
                                          seed, problem)
            elif args.mode == "weak":
                sample = aug.inject_retry_weak(script, args.retry_rate, seed, problem,
                                               whole_sentence=args.whole_sentence)
            else:
                sample = aug.inject_retry_miss(script, problem, args.retry_rate, seed)
            body = sample.to_json()
            if args.mask == "off":
                body["mask_spans"] = []
            body["problem"] = rec
            out.record(body)
    finally:
        out.close()
    return 0


def _cmd_verify(args) -> int:
    reports = []
    out = _Writer(args.output)
    try:
        for rec in _read_records(args.input):
            try:
                report = verify.verify_record(rec, tolerant_retry=args.tolerant_retry)
            except (GsmgenError, KeyError, ValueError) as exc:
                # a record that cannot even be interpreted is failed data, not a crash
                report = verify.VerifierReport(False, False, (-1, f"record: {exc}"),
                                               0, 0, 0, 0, None)
            reports.append(report)
            if not args.aggregate:
                out.record(report.to_json())
        if args.aggregate:
            out.record(verify.aggregate(reports))
    finally:
        out.close()
    return 0


def _cmd_eval(args) -> int:
    config = _config_from_args(args)
    op = args.op if args.op is not None else config.op_train_max
    problems = harness.build_problem_set(config, op, args.layout, args.n, args.seed,
                                         filter_context_len=args.filter_context_len)
    policy = harness.SyntheticOraclePolicy(args.policy_error_rate, args.seed)
    detector = None
    if args.detector:
        detector = harness.detector_preset(args.detector, args.seed)
    elif args.detector_accuracy is not None:
        detector = harness.ErrorDetector(args.detector_accuracy, args.seed)
    cfg = harness.DecodeConfig(mode=args.mode, beam_width=args.beam,
                               max_retries=args.max_retries,
                               max_tokens=args.max_tokens, seed=args.seed).validated()
    stats = harness.eval_accuracy(problems, policy, cfg, detector)
    stats.update({"op": op, "layout": args.layout, "n": args.n, "seed": args.seed,
                  "policy_error_rate": args.policy_error_rate,
                  "detector_accuracy": detector.accuracy if detector else None})
    json.dump(stats, sys.stdout)
    sys.stdout.write("\n")
    return 0


def _sample_of_record(rec: dict) -> aug.AugmentedSample:
    if "mode" in rec and "text" in rec:  # augment record
        prob = rec.get("problem")
        prefix = None
        if prob:
            problem = verify.problem_of_record(rec)
            prefix = problem.text
        return aug.AugmentedSample(rec["text"], rec["mode"], rec["retry_rate"], (),
                                   tuple(tuple(s) for s in rec["mask_spans"]),
                                   rec["seed"], rec["text"], prefix)
    problem = verify.problem_of_record(rec)  # plain gen record: no events, no masks
    return aug.AugmentedSample(rec["solution"], "none", 0.0, (), (), rec.get("seed", 0),
                               rec["solution"], problem.text)


def _cmd_pack(args) -> int:
    samples = [_sample_of_record(rec) for rec in _read_records(args.input)]
    sequences = corpus.pack(samples, args.context_len, args.seed)
    if args.format == "bin":
        if not args.output:
            raise GsmgenError("--format bin needs --output")
        corpus.write_packed(args.output, sequences, args.context_len)
        return 0
    out = _Writer(args.output)
    try:
        for seq in sequences:
            out.record({"ids": list(seq.ids), "mask": [int(b) for b in seq.mask]})
    finally:
        out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsmgen", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_problem_flags=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--output", default=None)
        if with_problem_flags:
            p.add_argument("--preset", choices=sorted(graphgen.PRESETS), default="med")
            p.add_argument("--config", default=None, help="JSON config file overriding the preset")
            p.add_argument("--universe", default=None)
            p.add_argument("--layout", choices=render.LAYOUTS, default="pq")
            p.add_argument("--op", type=int, default=None)

    g = sub.add_parser("gen", help="generate problems + canonical solutions")
    add_common(g)
    g.add_argument("--op-range", type=_parse_op_range, default=None, metavar="A..B")
    g.add_argument("--reask", action="store_true", help="resample the query parameter")
    g.add_argument("--no-answer", action="store_true", help="omit the final Answer sentence")
    g.add_argument("--n", type=int, default=1)
    g.set_defaults(fn=_cmd_gen)

    a = sub.add_parser("augment", help="inject retry fragments into solutions")
    add_common(a, with_problem_flags=False)
    a.add_argument("--input", default=None)
    a.add_argument("--mode", choices=sorted(_MODES), required=True)
    a.add_argument("--retry-rate", type=float, required=True)
    a.add_argument("--mask", choices=("on", "off"), default="on")
    a.add_argument("--whole-sentence", action="store_true",
                   help="weak mode: insert the entire later sentence")
    a.set_defaults(fn=_cmd_augment)

    v = sub.add_parser("verify", help="verify candidate solution texts")
    add_common(v, with_problem_flags=False)
    v.add_argument("--input", default=None)
    v.add_argument("--tolerant-retry", action="store_true",
                   help="do not fail solutions over retries of computable parameters")
    v.add_argument("--aggregate", action="store_true")
    v.set_defaults(fn=_cmd_verify)

    e = sub.add_parser("eval", help="decoding-controller accuracy evaluation")
    add_common(e)
    e.add_argument("--mode", choices=("greedy", "multinomial", "beam", "retry_upon_regret"),
                   default="greedy")
    e.add_argument("--beam", type=int, default=1)
    e.add_argument("--max-retries", type=int, default=harness.RETRY_BUDGET_PRESETS["default"])
    e.add_argument("--max-tokens", type=int, default=2048)
    e.add_argument("--detector", choices=sorted(harness.DETECTOR_PRESETS), default=None)
    e.add_argument("--detector-accuracy", type=float, default=None)
    e.add_argument("--policy-error-rate", type=float, default=0.0)
    e.add_argument("--n", type=int, default=4096)
    e.add_argument("--filter-context-len", type=int, default=None,
                   help="drop problems whose ground-truth solution exceeds this many tokens")
    e.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("pack", help="tokenize + pack records into sequences")
    add_common(p, with_problem_flags=False)
    p.add_argument("--input", default=None)
    p.add_argument("--context-len", type=int, required=True)
    p.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    p.set_defaults(fn=_cmd_pack)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GsmgenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (KeyError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
