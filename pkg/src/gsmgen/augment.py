"""Retry training data: wrong "Define X as [BACK]." fragments spliced into
canonical solutions, with label-mask spans over the erroneous text.

Three modes share one geometric insertion process (an extra event survives
each round with probability retry_rate):

* retry      -- true errors: parameters that really cannot be computed yet,
                drawn with graph access, inserted at the start of each step.
* retry_weak -- fake mistakes: the parameter of a strictly-later step,
                inserted at the end of each sentence; no graph access needed.
                A flag switches to inserting the entire later sentence.
* retry_miss -- parameters mentioned in the problem statement that have not
                appeared in the solution (or as an earlier insertion) yet.

Stripping every inserted fragment (and its [BACK]) recovers the canonical
text exactly; mask spans cover only the erroneous fragment, never [BACK].
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .graphgen import DependencyGraph
from .render import Problem, SolutionScript, mentioned_params

BACK_TOKEN = "[BACK]"

MODE_RETRY = "retry"
MODE_WEAK = "retry_weak"
MODE_MISS = "retry_miss"


@dataclass(frozen=True)
class AugmentEvent:
    position: int          # index of the step the insertion precedes (n = after last)
    param: str | None      # None when the position had no eligible wrong parameter
    suppressed: bool = False


@dataclass(frozen=True)
class AugmentedSample:
    text: str                                   # augmented solution text
    mode: str
    retry_rate: float
    events: tuple[AugmentEvent, ...]
    mask_spans: tuple[tuple[int, int], ...]     # half-open char ranges into text
    seed: int
    canonical_text: str
    problem_text: str | None = None             # statement/question prefix, for packing
    inserted_ranges: tuple[tuple[int, int], ...] = ()  # full extents incl. [BACK] + separator

    @property
    def full_text(self) -> str:
        if self.problem_text is None:
            return self.text
        return f"{self.problem_text} {self.text}"

    def stripped(self) -> str:
        """Remove every inserted extent; must reproduce the canonical text."""
        out = []
        pos = 0
        for start, end in self.inserted_ranges:
            out.append(self.text[pos:start])
            pos = end
        out.append(self.text[pos:])
        return "".join(out)

    def to_json(self) -> dict:
        return {
            "text": self.text,
            "mode": self.mode,
            "retry_rate": self.retry_rate,
            "events": [{"position": e.position, "param": e.param, "suppressed": e.suppressed}
                       for e in self.events],
            "mask_spans": [list(span) for span in self.mask_spans],
            "seed": self.seed,
        }


def mask_spans(sample: AugmentedSample) -> list[tuple[int, int]]:
    """Character ranges to exclude from the training loss ([BACK] stays unmasked)."""
    return list(sample.mask_spans)


def strip_retries(text: str) -> str:
    """Textual strip for parameter-name retry fragments (works on foreign texts).

    Fragment bodies never contain ';', '=' or '.', which keeps the pattern from
    swallowing real solution steps.
    """
    import re
    out = re.sub(r"Define [^;=.]*? as \[BACK\]\. ?", "", text)
    return re.sub(r"  +", " ", out).strip()


def _geometric_events(rng: random.Random, rate: float):
    """Yield until the geometric coin fails; caller supplies candidates."""
    while rng.random() < rate:
        yield


def _assemble(pieces: list[tuple[str, dict | None]], mode: str, rate: float,
              events: list[AugmentEvent], seed: int, canonical: str,
              problem_text: str | None) -> AugmentedSample:
    text_parts = [p for p, _ in pieces]
    text = " ".join(text_parts)
    spans: list[tuple[int, int]] = []
    ranges: list[tuple[int, int]] = []
    # pieces in a text-final inserted run have no following separator to
    # absorb, so each takes its preceding space instead (ranges stay contiguous)
    final_run = [False] * len(pieces)
    tail = True
    for i in range(len(pieces) - 1, -1, -1):
        tail = tail and pieces[i][1] is not None
        final_run[i] = tail
    offset = 0
    for i, (piece, meta) in enumerate(pieces):
        if meta is not None:
            if final_run[i]:
                ranges.append((offset - 1, offset + len(piece)))
            else:
                ranges.append((offset, offset + len(piece) + 1))
            spans.append((offset, offset + meta["mask_len"]))
        offset += len(piece) + 1
    return AugmentedSample(text, mode, rate, tuple(events), tuple(spans), seed,
                           canonical, problem_text, tuple(ranges))


def _fragment(param: str) -> tuple[str, dict]:
    body = f"Define {param} as"
    return f"{body} {BACK_TOKEN}.", {"mask_len": len(body)}


def _sentence_fragment(sentence: str) -> tuple[str, dict]:
    return f"{sentence} {BACK_TOKEN}.", {"mask_len": len(sentence)}


def _check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"retry_rate must lie in [0,1), got {rate}")


def inject_retry(solution: SolutionScript, g: DependencyGraph, retry_rate: float,
                 seed: int, problem: Problem | None = None) -> AugmentedSample:
    """True-error mode: before each step, geometrically insert parameters that
    cannot be computed at that prefix (and are not defined yet). A parameter
    is not repeated within one position's run; repeats across positions are
    allowed. Positions with no eligible parameter record a suppressed event."""
    _check_rate(retry_rate)
    rng = random.Random(f"aug:retry:{seed}")
    computed: set[str] = set()
    pieces: list[tuple[str, dict | None]] = []
    events: list[AugmentEvent] = []
    for i, step in enumerate(solution.steps):
        here: set[str] = set()
        for _ in _geometric_events(rng, retry_rate):
            pool = sorted(
                name for name, p in g.params.items()
                if name not in computed and name not in here
                and any(o not in computed for o in p.operands))
            if not pool:
                events.append(AugmentEvent(i, None, suppressed=True))
                break
            wrong = rng.choice(pool)
            here.add(wrong)
            pieces.append((*_fragment(wrong),))
            events.append(AugmentEvent(i, wrong))
        pieces.append((step.sentence, None))
        computed.add(step.param)
    if solution.include_answer:
        pieces.append((f"Answer: {solution.answer}.", None))
    return _assemble(pieces, MODE_RETRY, retry_rate, events, seed, solution.text,
                     problem.text if problem else None)


def inject_retry_weak(solution: SolutionScript, retry_rate: float, seed: int,
                      problem: Problem | None = None,
                      whole_sentence: bool = False) -> AugmentedSample:
    """Fake-mistake mode: at the end of each sentence, geometrically insert the
    parameter name (or, with whole_sentence, the entire sentence) of a
    uniformly chosen strictly-later step. Needs no graph access."""
    _check_rate(retry_rate)
    rng = random.Random(f"aug:weak:{seed}")
    steps = solution.steps
    pieces: list[tuple[str, dict | None]] = []
    events: list[AugmentEvent] = []
    for i, step in enumerate(steps):
        pieces.append((step.sentence, None))
        position = i + 1
        for _ in _geometric_events(rng, retry_rate):
            later = steps[position:]
            if not later:
                events.append(AugmentEvent(position, None, suppressed=True))
                break
            pick = rng.choice(later)
            if whole_sentence:
                pieces.append((*_sentence_fragment(pick.sentence),))
            else:
                pieces.append((*_fragment(pick.param),))
            events.append(AugmentEvent(position, pick.param))
    if solution.include_answer:
        pieces.append((f"Answer: {solution.answer}.", None))
    return _assemble(pieces, MODE_WEAK, retry_rate, events, seed, solution.text,
                     problem.text if problem else None)


def inject_retry_miss(solution: SolutionScript, problem: Problem, retry_rate: float,
                      seed: int) -> AugmentedSample:
    """Statement-pool mode: candidates are parameters named in the problem
    statement that are neither defined yet nor inserted earlier in this sample."""
    _check_rate(retry_rate)
    rng = random.Random(f"aug:miss:{seed}")
    statement_pool = mentioned_params(problem.statement)
    used: set[str] = set()
    defined: set[str] = set()
    pieces: list[tuple[str, dict | None]] = []
    events: list[AugmentEvent] = []
    for i, step in enumerate(solution.steps):
        pieces.append((step.sentence, None))
        defined.add(step.param)
        position = i + 1
        for _ in _geometric_events(rng, retry_rate):
            pool = [p for p in statement_pool if p not in defined and p not in used]
            if not pool:
                events.append(AugmentEvent(position, None, suppressed=True))
                break
            wrong = rng.choice(pool)
            used.add(wrong)
            pieces.append((*_fragment(wrong),))
            events.append(AugmentEvent(position, wrong))
    if solution.include_answer:
        pieces.append((f"Answer: {solution.answer}.", None))
    return _assemble(pieces, MODE_MISS, retry_rate, events, seed, solution.text,
                     problem.text if problem else None)
