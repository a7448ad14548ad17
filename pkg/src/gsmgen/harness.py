"""Decoding controllers driven against pluggable sentence-level policies.

A policy maps (problem, partial solution text) to a scored candidate list; the
controllers implement greedy, multinomial and beam decoding plus
"retry upon regret": after each generated sentence an error detector is
queried, and on a reported error the sentence is deleted and regenerated by
multinomial sampling, under a total per-solution retry budget.

The bundled SyntheticOraclePolicy stands in for a trained model: it knows the
graph, proposes a not-yet-computable parameter as its top candidate with
probability `error_prob`, and otherwise extends the shortest solution.
Detectors are modeled by a single per-sentence accuracy; `versionP` (accuracy
1.0) is the ground-truth detector and never misreports.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Protocol, Sequence

from .corpus import tokenize
from .graphgen import GenConfig, can_next, necessary_set, sample_problem_graph
from .render import LETTER_POOL, Problem, _chain_clauses, render_problem
from .semantics import AggSpec, decompose
from .verify import StepRecord, aggregate, parse_solution, verify_text

MAX_WRONG_CANDIDATES = 6  # shown per step; scores renormalize so P(wrong) stays error_prob


@dataclass(frozen=True)
class Candidate:
    text: str
    score: float          # log-probability under the policy
    param: str | None     # None for the terminal Answer sentence
    terminal: bool = False


class DecodePolicy(Protocol):
    def propose(self, problem: Problem, partial: str) -> list[Candidate]:
        """Non-empty scored candidates for the next sentence; finite scores."""
        ...


@dataclass(frozen=True)
class DecodeConfig:
    mode: str = "greedy"          # greedy | multinomial | beam | retry_upon_regret
    beam_width: int = 1
    max_retries: int = 10         # total per solution; the 50-retry preset is versionP50
    max_tokens: int = 2048
    seed: int = 0

    def validated(self) -> "DecodeConfig":
        if self.mode not in ("greedy", "multinomial", "beam", "retry_upon_regret"):
            raise ValueError(f"unknown decode mode {self.mode!r}")
        if self.max_retries < 0 or self.beam_width < 1 or self.max_tokens < 1:
            raise ValueError("invalid decode configuration")
        return self


DETECTOR_PRESETS = {"version1": 0.99, "version2": 0.99, "versionP": 1.0}
RETRY_BUDGET_PRESETS = {"default": 10, "versionP50": 50}


@dataclass(frozen=True)
class RetryEvent:
    step: int             # sentence index the deletion happened at
    param: str | None
    ground_truth_error: bool


@dataclass(frozen=True)
class DecodeResult:
    text: str
    trace: tuple[RetryEvent, ...] = ()
    truncated: bool = False


def _partial_state(problem: Problem, partial: str):
    """Declared parameters, their letters/values, and used letters from a partial."""
    defined: dict[str, int] = {}
    letters: dict[str, str] = {}
    used: set[str] = set()
    env: dict[str, int] = {}
    if partial:
        parsed = parse_solution(partial)
        for rec in parsed.records:
            if isinstance(rec, StepRecord) and not rec.retracted:
                defined[rec.param] = rec.clauses[-1].value
                letters[rec.param] = rec.letter
                for cl in rec.clauses:
                    used.add(cl.lhs)
                    env[cl.lhs] = cl.value
    return defined, letters, used, env


@dataclass(frozen=True)
class SyntheticOraclePolicy:
    """Oracle policy with a controllable per-step mistake rate.

    With error_prob 0 it reproduces a canonical shortest solution; wrong
    proposals always name parameters that truly cannot be computed yet.
    Stateless: every call derives its randomness from (seed, problem, partial),
    so instances are safely shared across workers.
    """

    error_prob: float = 0.0
    seed: int = 0

    def propose(self, problem: Problem, partial: str) -> list[Candidate]:
        g = problem.graph
        defined, letters, used, env = _partial_state(problem, partial)
        done = set(defined)
        needed = necessary_set(g)
        remaining = sorted(needed - done)
        if not remaining:
            return [Candidate(f"Answer: {g.params[g.query].value}.", 0.0, None, True)]

        rng = random.Random(f"pol:{self.seed}:{problem.statement}:{partial}")
        ready = [n for n in remaining if can_next(g, done, n)]
        wrong_pool = sorted(n for n in g.params
                            if n not in done and not can_next(g, done, n))
        q = self.error_prob if wrong_pool else 0.0

        pool_order = [c for c in _letter_order(self.seed, problem) if c not in used]

        def fresh_iter():
            return iter(pool_order)

        def step_text(name: str) -> str:
            it = fresh_iter()
            letter = next(it)
            recipe = g.params[name].recipe
            terms = tuple((letters[t[0]], letters[t[1]]) if isinstance(t, tuple)
                          else letters[t] for t in recipe.terms)
            chain = decompose(AggSpec(recipe.const, terms, recipe.combine,
                                      recipe.offset, recipe.scale), letter, env, lambda: next(it))
            clauses = _chain_clauses(chain, dict(env))
            return f"Define {name} as {letter}; " + "; ".join(clauses) + "."

        def wrong_text(name: str) -> str:
            letter = next(fresh_iter())
            return f"Define {name} as {letter}; so {letter} = 0."

        wrong_shown = wrong_pool
        if len(wrong_shown) > MAX_WRONG_CANDIDATES:
            wrong_shown = sorted(rng.sample(wrong_pool, MAX_WRONG_CANDIDATES))
        err = q > 0 and rng.random() < q
        intended = rng.choice(wrong_shown if err else ready)

        candidates = []
        score_correct = math.log((1.0 - q) / len(ready))
        for name in ready:
            candidates.append(Candidate(step_text(name), score_correct, name))
        if q > 0:
            score_wrong = math.log(q / len(wrong_shown))
            for name in wrong_shown:
                candidates.append(Candidate(wrong_text(name), score_wrong, name))
        candidates.sort(key=lambda c: (c.param != intended, -c.score, c.param))
        return candidates


_LETTER_CACHE: dict[tuple[int, str], list[str]] = {}


def _letter_order(seed: int, problem: Problem) -> list[str]:
    key = (seed, problem.statement)
    order = _LETTER_CACHE.get(key)
    if order is None:
        order = list(LETTER_POOL)
        random.Random(f"polletters:{seed}:{problem.statement}").shuffle(order)
        if len(_LETTER_CACHE) > 4096:
            _LETTER_CACHE.clear()
        _LETTER_CACHE[key] = order
    return order


@dataclass(frozen=True)
class ErrorDetector:
    """Reports the ground-truth can_next verdict with probability `accuracy`.

    Only sentences that define a parameter are examined; the terminal Answer
    sentence is never flagged.
    """

    accuracy: float = 1.0
    seed: int = 0

    def flags_error(self, problem: Problem, partial: str, candidate: Candidate) -> bool:
        if candidate.param is None:
            return False
        defined, _, _, _ = _partial_state(problem, partial)
        truth = not can_next(problem.graph, set(defined), candidate.param)
        rng = random.Random(f"det:{self.seed}:{problem.statement}:{partial}:{candidate.text}")
        return truth if rng.random() < self.accuracy else not truth

    def ground_truth(self, problem: Problem, partial: str, candidate: Candidate) -> bool:
        if candidate.param is None:
            return False
        defined, _, _, _ = _partial_state(problem, partial)
        return not can_next(problem.graph, set(defined), candidate.param)


def detector_preset(name: str, seed: int = 0) -> ErrorDetector:
    return ErrorDetector(DETECTOR_PRESETS[name], seed)


# ----------------------------- controllers -----------------------------

def _softmax_sample(rng: random.Random, candidates: Sequence[Candidate]) -> Candidate:
    top = max(c.score for c in candidates)
    weights = [math.exp(c.score - top) for c in candidates]
    return rng.choices(list(candidates), weights=weights, k=1)[0]


def _join(partial: str, sentence: str) -> str:
    return f"{partial} {sentence}" if partial else sentence


def decode(problem: Problem, policy: DecodePolicy, cfg: DecodeConfig,
           detector: ErrorDetector | None = None) -> DecodeResult:
    """Run the configured controller; greedy takes each step's top candidate,
    multinomial samples by softmax of scores, beam keeps the best partials by
    cumulative score. Token budget overruns yield a truncated (failing) text."""
    cfg = cfg.validated()
    if cfg.mode == "retry_upon_regret":
        if detector is None:
            raise ValueError("retry_upon_regret needs an error detector")
        return retry_upon_regret(problem, policy, detector, cfg)
    if cfg.mode == "beam":
        return _beam_decode(problem, policy, cfg)
    rng = random.Random(f"dec:{cfg.seed}:{problem.statement}")
    partial = ""
    tokens = 0
    while True:
        candidates = policy.propose(problem, partial)
        chosen = candidates[0] if cfg.mode == "greedy" else _softmax_sample(rng, candidates)
        tokens += len(tokenize(chosen.text)) + (1 if partial else 0)
        if tokens > cfg.max_tokens:
            return DecodeResult(partial, (), truncated=True)
        partial = _join(partial, chosen.text)
        if chosen.terminal:
            return DecodeResult(partial)


_ALIVE, _ANSWERED, _TRUNCATED = 0, 1, 2


def _beam_decode(problem: Problem, policy: DecodePolicy, cfg: DecodeConfig) -> DecodeResult:
    beams: list[tuple[float, str, int, int]] = [(0.0, "", 0, _ALIVE)]
    for _ in range(cfg.max_tokens):  # generous step bound; token budget ends sooner
        nxt: list[tuple[float, str, int, int]] = []
        alive = False
        for score, partial, tokens, state in beams:
            if state != _ALIVE:
                nxt.append((score, partial, tokens, state))
                continue
            alive = True
            for cand in policy.propose(problem, partial):
                t = tokens + len(tokenize(cand.text)) + (1 if partial else 0)
                if t > cfg.max_tokens:
                    nxt.append((score, partial, tokens, _TRUNCATED))
                    continue
                nxt.append((score + cand.score, _join(partial, cand.text), t,
                            _ANSWERED if cand.terminal else _ALIVE))
        nxt.sort(key=lambda b: -b[0])
        beams = nxt[:cfg.beam_width]
        if not alive:
            break
    answered = [b for b in beams if b[3] == _ANSWERED]
    best = answered[0] if answered else beams[0]
    return DecodeResult(best[1], (), truncated=best[3] != _ANSWERED)


def retry_upon_regret(problem: Problem, policy: DecodePolicy, detector: ErrorDetector,
                      cfg: DecodeConfig) -> DecodeResult:
    """Delete-and-regenerate controller. The base choice each step is greedy;
    regeneration uses multinomial sampling over the same policy distribution
    (the detector, not the policy, does the filtering). Retries are budgeted
    per solution; once exhausted, flagged sentences are kept as-is."""
    rng = random.Random(f"rur:{cfg.seed}:{problem.statement}")
    partial = ""
    tokens = 0
    retries = 0
    trace: list[RetryEvent] = []
    step = 0
    while True:
        candidates = policy.propose(problem, partial)
        chosen = candidates[0]
        while (not chosen.terminal and retries < cfg.max_retries
               and detector.flags_error(problem, partial, chosen)):
            trace.append(RetryEvent(step, chosen.param,
                                    detector.ground_truth(problem, partial, chosen)))
            retries += 1
            chosen = _softmax_sample(rng, candidates)
        tokens += len(tokenize(chosen.text)) + (1 if partial else 0)
        if tokens > cfg.max_tokens:
            return DecodeResult(partial, tuple(trace), truncated=True)
        partial = _join(partial, chosen.text)
        step += 1
        if chosen.terminal:
            return DecodeResult(partial, tuple(trace))


# ----------------------------- batch evaluation -----------------------------

def build_problem_set(config: GenConfig, op_target: int, layout: str,
                      n: int, seed: int,
                      filter_context_len: int | None = None) -> list[Problem]:
    """Deterministic problem set; per-problem seeds derive from (seed, index).

    With filter_context_len, problems whose error-free ground-truth solution
    exceeds that token budget are skipped (never judged on augmented length).
    """
    from .corpus import fits_eval_window
    from .errors import GenerationInfeasibleError
    from .render import render_solution

    problems: list[Problem] = []
    budget = max(64, 50 * n)
    for i in range(budget):
        if len(problems) == n:
            break
        g = sample_problem_graph(config, op_target, seed * 1_000_003 + i)
        problem = render_problem(g, layout, seed * 7_000_003 + i)
        if filter_context_len is not None:
            canonical = render_solution(g, problem.seed).text
            if not fits_eval_window(problem.text, canonical, filter_context_len):
                continue
        problems.append(problem)
    if len(problems) < n:
        raise GenerationInfeasibleError(
            f"only {len(problems)}/{n} problems fit within {filter_context_len} tokens")
    return problems


def eval_accuracy(problems: Sequence[Problem], policy: DecodePolicy, cfg: DecodeConfig,
                  detector: ErrorDetector | None = None) -> dict:
    """Decode + verify every problem; aggregates accuracy, the retry-count
    split by correctness, and unnecessary work among correct solutions."""
    if not problems:
        raise ValueError("problem set must be non-empty")
    reports = []
    retry_totals = []
    for problem in problems:
        result = decode(problem, policy, cfg, detector)
        reports.append(verify_text(problem, result.text))
        retry_totals.append(len(result.trace))
    stats = aggregate(reports)
    stats["mode"] = cfg.mode
    stats["beam_width"] = cfg.beam_width
    stats["max_retries"] = cfg.max_retries
    stats["mean_controller_retries"] = sum(retry_totals) / len(retry_totals)
    return stats
