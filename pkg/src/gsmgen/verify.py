"""Strict parsing and checking of candidate solution texts.

The parser accepts exactly the closed grammar: define-steps with "=" reduction
clauses, retry fragments ("Define X as [BACK]." or a full sentence retracted
by a following "[BACK]."), and a final "Answer: v.". All semantic failures are
report fields, never exceptions; malformed text raises ParseError with the
offending position, and `verify_text` folds that into a failed report.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import ParseError
from .graphgen import can_next, necessary_set
from .render import ANSWER_PREFIX, Problem, iter_sentences, problem_from_text, split_param_name
from .semantics import mod_eval

BACK_TOKEN = "[BACK]"

_SYM = r"[A-Za-z]|\d{1,2}"
_BINARY_RE = re.compile(rf"^({_SYM}) ([+*-]) ({_SYM})$")
_VALUE_RE = re.compile(r"^(?:0|1?\d|2[0-2])$")  # 0..22, no leading zeros


@dataclass(frozen=True)
class Clause:
    lhs: str
    a: str | None      # operand symbol (letter or literal); None for a bare constant
    op: str | None
    b: str | None
    da: int | None     # displayed operand values (binary form only)
    db: int | None
    value: int


@dataclass(frozen=True)
class StepRecord:
    param: str
    letter: str
    clauses: tuple[Clause, ...]
    offset: int
    retracted: bool = False


@dataclass(frozen=True)
class RetryRecord:
    param: str
    offset: int


Record = Union[StepRecord, RetryRecord]


@dataclass(frozen=True)
class ParsedSolution:
    records: tuple[Record, ...]
    answer: int | None
    retry_count: int


def _parse_value(text: str, offset: int) -> int:
    if not _VALUE_RE.match(text):
        raise ParseError(f"not a value in [0,23): {text!r}", offset)
    return int(text)


def _parse_clause(raw: str, offset: int, is_final: bool, letter: str,
                  used_letters: set[str]) -> Clause:
    if is_final:
        if not raw.startswith("so "):
            raise ParseError(f"final clause must start with 'so': {raw!r}", offset)
        raw = raw[3:]
    elif raw.startswith("so "):
        raise ParseError(f"'so' before the final clause: {raw!r}", offset)
    segments = raw.split(" = ")
    lhs = segments[0]
    if not re.match(r"^[A-Za-z]$", lhs):
        raise ParseError(f"bad letter {lhs!r}", offset)
    if is_final and lhs != letter:
        raise ParseError(f"clause defines {lhs!r} but step declared {letter!r}", offset)
    if lhs in used_letters:
        raise ParseError(f"duplicate letter {lhs!r}", offset)
    if len(segments) == 2:
        return Clause(lhs, None, None, None, None, None, _parse_value(segments[1], offset))
    if len(segments) == 3:
        src, value = segments[1], segments[2]
        if not re.match(r"^[A-Za-z]$", src):
            raise ParseError(f"copy source must be a letter: {src!r}", offset)
        return Clause(lhs, src, None, None, None, None, _parse_value(value, offset))
    if len(segments) == 4:
        sym = _BINARY_RE.match(segments[1])
        num = _BINARY_RE.match(segments[2])
        if not sym or not num:
            raise ParseError(f"bad arithmetic clause {raw!r}", offset)
        if sym.group(2) != num.group(2):
            raise ParseError(f"operator mismatch in {raw!r}", offset)
        da = _parse_value(num.group(1), offset)
        db = _parse_value(num.group(3), offset)
        return Clause(lhs, sym.group(1), sym.group(2), sym.group(3), da, db,
                      _parse_value(segments[3], offset))
    raise ParseError(f"malformed clause {raw!r}", offset)


def parse_solution(text: str) -> ParsedSolution:
    if not text.strip():
        raise ParseError("empty solution", 0)
    records: list[Record] = []
    answer: int | None = None
    used_letters: set[str] = set()
    for sentence, offset in iter_sentences(text):
        if answer is not None:
            raise ParseError("content after the answer sentence", offset)
        body = sentence[:-1]  # drop the terminating period
        if body == BACK_TOKEN:
            if not records or not isinstance(records[-1], StepRecord) or records[-1].retracted:
                raise ParseError("dangling [BACK]", offset)
            step = records[-1]
            for cl in step.clauses:
                used_letters.discard(cl.lhs)
            records[-1] = StepRecord(step.param, step.letter, step.clauses,
                                     step.offset, retracted=True)
            continue
        if body.startswith(ANSWER_PREFIX):
            answer = _parse_value(body[len(ANSWER_PREFIX):], offset)
            continue
        if not body.startswith("Define "):
            raise ParseError(f"unrecognized sentence {body!r}", offset)
        head, sep, rest = body[len("Define "):].partition(" as ")
        if not sep:
            raise ParseError(f"missing 'as' in {body!r}", offset)
        param = "'s ".join(split_param_name(head, offset))
        if rest == BACK_TOKEN:
            records.append(RetryRecord(param, offset))
            continue
        pieces = rest.split("; ")
        letter = pieces[0]
        if not re.match(r"^[A-Za-z]$", letter):
            raise ParseError(f"bad step letter {letter!r}", offset)
        raw_clauses = pieces[1:]
        if not raw_clauses:
            raise ParseError(f"step without clauses: {body!r}", offset)
        clauses = []
        for i, raw in enumerate(raw_clauses):
            clause = _parse_clause(raw, offset, i == len(raw_clauses) - 1, letter, used_letters)
            used_letters.add(clause.lhs)
            clauses.append(clause)
        records.append(StepRecord(param, letter, tuple(clauses), offset))
    retry_count = sum(1 for r in records
                      if isinstance(r, RetryRecord) or (isinstance(r, StepRecord) and r.retracted))
    return ParsedSolution(tuple(records), answer, retry_count)


# ----------------------------- verification -----------------------------

@dataclass(frozen=True)
class VerifierReport:
    fully_correct: bool
    answer_correct: bool
    first_error: tuple[int, str] | None
    retry_count: int
    unnecessary_params: int
    unnecessary_ops: int
    spurious_retries: int
    answer: int | None

    def to_json(self) -> dict:
        return {
            "fully_correct": self.fully_correct,
            "answer_correct": self.answer_correct,
            "first_error": list(self.first_error) if self.first_error else None,
            "retry_count": self.retry_count,
            "unnecessary_params": self.unnecessary_params,
            "unnecessary_ops": self.unnecessary_ops,
            "spurious_retries": self.spurious_retries,
            "answer": self.answer,
        }


def verify(prob: Problem, parsed: ParsedSolution, tolerant_retry: bool = False) -> VerifierReport:
    """Check a parsed solution against the problem's graph.

    Per step, in order: (a) the defined parameter must be computable at that
    prefix; (b) every clause must resolve its operands and state correct mod-23
    values, ending in the parameter's true value; (c) retry fragments must name
    parameters that were indeed not computable (otherwise they are fake
    mistakes -- counted, and failed unless tolerant_retry). The final answer,
    when present, must equal the query's value.
    """
    g = prob.graph
    needed = necessary_set(g)
    computed: set[str] = set()
    declared: dict[str, int] = {}
    env: dict[str, int] = {}
    first_error: tuple[int, str] | None = None
    unnecessary_params = unnecessary_ops = spurious = 0

    def fail(idx: int, reason: str) -> None:
        nonlocal first_error
        if first_error is None:
            first_error = (idx, reason)

    for idx, rec in enumerate(parsed.records):
        wrong_name = rec.param if isinstance(rec, RetryRecord) else (
            rec.param if rec.retracted else None)
        if wrong_name is not None:
            if wrong_name not in g.params:
                fail(idx, "unknown-parameter")
                continue
            if can_next(g, computed, wrong_name):
                spurious += 1
                if not tolerant_retry:
                    fail(idx, "spurious-retry")
            continue

        assert isinstance(rec, StepRecord)
        if rec.param not in g.params:
            fail(idx, "unknown-parameter")
            continue
        if not can_next(g, computed, rec.param):
            fail(idx, "already-defined" if rec.param in computed else "not-ready")
        for cl in rec.clauses:
            stated = cl.value
            if cl.op is None and cl.a is None:
                pass  # bare constant; checked against the true value below
            elif cl.op is None:
                src = env.get(cl.a)
                if src is None:
                    fail(idx, "unresolved-operand")
                elif src != stated:
                    fail(idx, "wrong-value")
            else:
                for sym, shown in ((cl.a, cl.da), (cl.b, cl.db)):
                    actual = int(sym) if sym.isdigit() else env.get(sym)
                    if actual is None:
                        fail(idx, "unresolved-operand")
                    elif actual != shown:
                        fail(idx, "operand-value-mismatch")
                if mod_eval(cl.da, cl.op, cl.db) != stated:
                    fail(idx, "wrong-value")
            env[cl.lhs] = stated
        final = rec.clauses[-1].value
        if final != g.params[rec.param].value:
            fail(idx, "wrong-value")
        computed.add(rec.param)
        declared[rec.param] = final
        if rec.param not in needed:
            unnecessary_params += 1
            unnecessary_ops += len(rec.clauses)

    truth = g.params[g.query].value
    query_ok = g.query in computed and declared.get(g.query) == truth
    answer_ok = query_ok and (parsed.answer is None or parsed.answer == truth)
    fully = first_error is None and answer_ok
    answer = parsed.answer if parsed.answer is not None else (
        declared.get(g.query) if query_ok else None)
    return VerifierReport(fully, answer_ok, first_error, parsed.retry_count,
                          unnecessary_params, unnecessary_ops, spurious, answer)


def verify_text(prob: Problem, text: str, tolerant_retry: bool = False) -> VerifierReport:
    """Parse + verify; malformed text becomes a failed report, not an exception."""
    try:
        parsed = parse_solution(text)
    except ParseError as exc:
        return VerifierReport(False, False, (-1, f"parse: {exc}"),
                              text.count(BACK_TOKEN), 0, 0, 0, None)
    return verify(prob, parsed, tolerant_retry)


# ----------------------------- batch / aggregate -----------------------------

def problem_of_record(record: dict) -> Problem:
    body = record.get("problem", record)
    return problem_from_text(body["statement"], body["question"],
                             body.get("layout", "pq"), body.get("seed", 0))


def candidate_of_record(record: dict) -> str:
    for key in ("candidate", "text", "solution"):
        if key in record:
            return record[key]
    raise KeyError("record has no candidate/text/solution field")


def verify_record(record: dict, tolerant_retry: bool = False) -> VerifierReport:
    return verify_text(problem_of_record(record), candidate_of_record(record), tolerant_retry)


def aggregate(reports: list[VerifierReport]) -> dict:
    """Accuracy plus the retry/unnecessary statistics, split by correctness."""
    def mean(values: list[float]) -> float | None:
        return sum(values) / len(values) if values else None

    correct = [r for r in reports if r.fully_correct]
    wrong = [r for r in reports if not r.fully_correct]
    return {
        "n": len(reports),
        "accuracy": len(correct) / len(reports) if reports else None,
        "answer_accuracy": mean([1.0 if r.answer_correct else 0.0 for r in reports]),
        "mean_retries_correct": mean([float(r.retry_count) for r in correct]),
        "mean_retries_wrong": mean([float(r.retry_count) for r in wrong]),
        "mean_unnecessary_ops_correct": mean([float(r.unnecessary_ops) for r in correct]),
        "mean_unnecessary_params_correct": mean([float(r.unnecessary_params) for r in correct]),
    }
