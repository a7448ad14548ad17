"""English rendering of problems and canonical shortest solutions, plus the
inverse parser that rebuilds a dependency graph from a problem statement.

The sentence grammar is closed: one template family for rules ("The number of
each X's Y equals ..."), one question form, and one solution step form
("Define X's Y as L; ...; so L = ...."). Verification and tokenization depend
on these exact frames, so changes here are contract changes.
"""

from __future__ import annotations

import random
import re
import string
from dataclasses import dataclass

from .errors import ParseError
from .graphgen import (INSTANCE, DependencyGraph, StructureGraph, _UNIVERSES,
                       _abstract_catalog, _assemble, can_next, closure_op,
                       necessary_set, param_name)
from .semantics import AggSpec, BinOpChain, decompose

LAYOUTS = ("pq", "qp")

LETTER_POOL = string.ascii_lowercase + string.ascii_uppercase

ANSWER_PREFIX = "Answer: "


@dataclass(frozen=True)
class Problem:
    graph: DependencyGraph
    layout: str
    statement: str
    question: str
    seed: int

    @property
    def text(self) -> str:
        if self.layout == "qp":
            return f"{self.question} {self.statement}"
        return f"{self.statement} {self.question}"


@dataclass(frozen=True)
class SolutionStep:
    param: str
    letter: str
    chain: BinOpChain
    sentence: str


@dataclass(frozen=True)
class SolutionScript:
    steps: tuple[SolutionStep, ...]
    answer: int
    include_answer: bool = True

    @property
    def text(self) -> str:
        body = " ".join(s.sentence for s in self.steps)
        if self.include_answer:
            return f"{body} {ANSWER_PREFIX}{self.answer}."
        return body


# ----------------------------- rendering -----------------------------

def _core_text(recipe: AggSpec) -> str:
    terms = [t for t in recipe.terms]
    if recipe.combine == "-":
        return f"the difference of each {terms[0]} and each {terms[1]}"
    if len(terms) == 1:
        return f"each {terms[0]}"
    head = ", ".join(f"each {t}" for t in terms[:-1])
    return f"the sum of {head} and each {terms[-1]}"


def rule_sentence(name: str, recipe: AggSpec) -> str:
    if recipe.const is not None:
        rhs = str(recipe.const)
    else:
        rhs = _core_text(recipe)
        if recipe.scale is not None:
            rhs = f"{recipe.scale} times as much as {rhs}"
        if recipe.offset is not None:
            rhs = f"{recipe.offset} more than {rhs}"
    return f"The number of each {name} equals {rhs}."


def question_sentence(g: DependencyGraph) -> str:
    q = g.parameter(g.query)
    return f"How many {q.target} does {q.owner} have?"


def render_problem(g: DependencyGraph, layout: str, seed: int) -> Problem:
    """One sentence per instance rule, order shuffled by seed."""
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}")
    sentences = [rule_sentence(p.name, p.recipe)
                 for p in g.params.values() if p.kind == INSTANCE]
    random.Random(f"prob:{seed}").shuffle(sentences)
    return Problem(g, layout, " ".join(sentences), question_sentence(g), seed)


def _chain_clauses(chain: BinOpChain, env: dict[str, int]) -> list[str]:
    clauses = []
    for i, step in enumerate(chain.steps):
        if step.op is None:
            if step.a.isdigit():
                expr = str(step.value)
            else:
                expr = f"{step.a} = {step.value}"
        else:
            da = step.a if step.a.isdigit() else env[step.a]
            db = step.b if step.b.isdigit() else env[step.b]
            expr = f"{step.a} {step.op} {step.b} = {da} {step.op} {db} = {step.value}"
        env[step.lhs] = step.value
        prefix = "so " if i == len(chain.steps) - 1 else ""
        clauses.append(f"{prefix}{step.lhs} = {expr}")
    return clauses


def render_solution(g: DependencyGraph, seed: int, include_answer: bool = True) -> SolutionScript:
    """Canonical shortest solution: defines exactly the necessary set, in a
    randomized topological order, with collision-free single-letter names."""
    rng = random.Random(f"sol:{seed}")
    needed = necessary_set(g)
    pool = list(LETTER_POOL)
    rng.shuffle(pool)
    pool_iter = iter(pool)

    def fresh() -> str:
        try:
            return next(pool_iter)
        except StopIteration:
            raise ValueError("solution needs more than 52 letters") from None

    defined: set[str] = set()
    letters: dict[str, str] = {}
    env: dict[str, int] = {}
    steps: list[SolutionStep] = []
    while len(defined) < len(needed):
        ready = sorted(n for n in needed
                       if n not in defined and can_next(g, defined, n))
        name = rng.choice(ready)
        letter = fresh()
        recipe = g.params[name].recipe
        terms = tuple((letters[t[0]], letters[t[1]]) if isinstance(t, tuple) else letters[t]
                      for t in recipe.terms)
        chain = decompose(AggSpec(recipe.const, terms, recipe.combine,
                                  recipe.offset, recipe.scale), letter, env, fresh)
        clauses = _chain_clauses(chain, env)
        sentence = f"Define {name} as {letter}; " + "; ".join(clauses) + "."
        steps.append(SolutionStep(name, letter, chain, sentence))
        letters[name] = letter
        defined.add(name)
    return SolutionScript(tuple(steps), g.params[g.query].value, include_answer)


def sample_text(problem: Problem, solution_text: str) -> str:
    """Full training text for one problem: statement/question per layout + solution."""
    return f"{problem.text} {solution_text}"


def script_from_text(g: DependencyGraph, text: str) -> SolutionScript:
    """Rebuild a SolutionScript from canonical solution text (no retry fragments).

    Used by pipeline stages that receive solutions as JSONL rather than live
    objects; chains are not reconstructed (augmentation never needs them).
    """
    from .verify import StepRecord, parse_solution  # local import avoids a cycle

    parsed = parse_solution(text)
    steps = []
    sentences = [s for s, _ in iter_sentences(text)]
    body = [s for s in sentences if not s.startswith(ANSWER_PREFIX)]
    if len(body) != len(parsed.records):
        raise ParseError("augmentation expects a canonical solution without retries")
    for rec, sentence in zip(parsed.records, body):
        if not isinstance(rec, StepRecord) or rec.retracted:
            raise ParseError("augmentation expects a canonical solution without retries")
        steps.append(SolutionStep(rec.param, rec.letter, BinOpChain(()), sentence))
    answer = parsed.answer if parsed.answer is not None else g.params[g.query].value
    return SolutionScript(tuple(steps), answer, include_answer=parsed.answer is not None)


# ----------------------------- statement parsing -----------------------------

_ITEM_TO_UNIVERSE: dict[str, tuple[str, int]] = {}
_ALL_CATEGORIES: set[str] = set()
for _uname, _pack in _UNIVERSES.items():
    _ALL_CATEGORIES.update(_pack["categories"])
    for _layer_idx, _pool in enumerate(_pack["items"]):
        for _item in _pool:
            _ITEM_TO_UNIVERSE[_item] = (_uname, _layer_idx)
_NAME_LEXICON = set(_ITEM_TO_UNIVERSE) | _ALL_CATEGORIES


def split_param_name(text: str, offset: int = 0) -> tuple[str, str]:
    """Split "Owner's Target" against the closed name lexicon."""
    hits = []
    start = 0
    while True:
        i = text.find("'s ", start)
        if i < 0:
            break
        owner, target = text[:i], text[i + 3:]
        if owner in _ITEM_TO_UNIVERSE and target in _NAME_LEXICON:
            hits.append((owner, target))
        start = i + 1
    if len(hits) != 1:
        kind = "ambiguous" if hits else "unknown"
        raise ParseError(f"{kind} parameter name {text!r}", offset)
    return hits[0]


_SENTENCE_RE = re.compile(r"^The number of each (.+?) equals (.+)\.$")
_QUESTION_RE = re.compile(r"^How many (.+) does (.+) have\?$")


def parse_rule_sentence(sentence: str, offset: int = 0) -> tuple[str, AggSpec]:
    m = _SENTENCE_RE.match(sentence)
    if not m:
        raise ParseError(f"not a rule sentence: {sentence!r}", offset)
    lhs_owner, lhs_target = split_param_name(m.group(1), offset)
    rhs = m.group(2)
    offset_k = scale_k = None
    mo = re.match(r"^(\d+) more than (.+)$", rhs)
    if mo:
        offset_k, rhs = int(mo.group(1)), mo.group(2)
    ms = re.match(r"^(\d+) times as much as (.+)$", rhs)
    if ms:
        scale_k, rhs = int(ms.group(1)), ms.group(2)
    if rhs.isdigit():
        if offset_k is not None or scale_k is not None:
            raise ParseError(f"modifier on a constant in {sentence!r}", offset)
        return param_name(lhs_owner, lhs_target), AggSpec(const=int(rhs))
    combine = "+"
    if rhs.startswith("the sum of each "):
        parts = re.split(r", each | and each ", rhs[len("the sum of each "):])
    elif rhs.startswith("the difference of each "):
        parts = rhs[len("the difference of each "):].split(" and each ")
        combine = "-"
        if len(parts) != 2:
            raise ParseError(f"difference needs two operands: {sentence!r}", offset)
    elif rhs.startswith("each "):
        parts = [rhs[len("each "):]]
    else:
        raise ParseError(f"unrecognized rule form: {sentence!r}", offset)
    terms = tuple(param_name(*split_param_name(p, offset)) for p in parts)
    return param_name(lhs_owner, lhs_target), AggSpec(
        terms=terms, combine=combine, offset=offset_k, scale=scale_k)


def iter_sentences(text: str):
    """Yield (sentence, offset) for period-terminated sentences; periods only
    ever terminate sentences in this grammar."""
    pos = 0
    n = len(text)
    while pos < n:
        while pos < n and text[pos] == " ":
            pos += 1
        if pos >= n:
            break
        end = text.find(".", pos)
        qmark = text.find("?", pos)
        if 0 <= qmark < end or (end < 0 <= qmark):
            end = qmark
        if end < 0:
            raise ParseError("unterminated sentence", pos)
        yield text[pos:end + 1], pos
        pos = end + 1


def mentioned_params(statement: str) -> list[str]:
    """Parameter names appearing in a statement (definitions and operands), in order."""
    seen: list[str] = []
    for sentence, offset in iter_sentences(statement):
        name, recipe = parse_rule_sentence(sentence, offset)
        for candidate in [name, *(t for t in recipe.terms if isinstance(t, str))]:
            if candidate not in seen:
                seen.append(candidate)
    return seen


def problem_from_text(statement: str, question: str, layout: str = "pq",
                      seed: int = 0) -> Problem:
    """Rebuild the dependency graph a statement describes; the statement is the
    source of truth, so verification needs no side channel to the generator."""
    recipes: dict[str, AggSpec] = {}
    owners_targets: list[tuple[str, str]] = []
    for sentence, offset in iter_sentences(statement):
        name, recipe = parse_rule_sentence(sentence, offset)
        owner, target = split_param_name(name, offset)
        if target in _ALL_CATEGORIES:
            raise ParseError(f"cannot assign a rule to the total {name!r}", offset)
        if name in recipes:
            raise ParseError(f"duplicate rule for {name!r}", offset)
        recipes[name] = recipe
        owners_targets.append((owner, target))

    items: set[str] = set()
    for owner, target in owners_targets:
        items.add(owner)
        items.add(target)
    for recipe in recipes.values():
        for term in recipe.terms:
            owner, target = split_param_name(term)
            items.add(owner)
            if target in _ITEM_TO_UNIVERSE:
                items.add(target)
    universes = {_ITEM_TO_UNIVERSE[i][0] for i in items}
    if len(universes) != 1:
        raise ParseError(f"statement mixes vocabulary universes {sorted(universes)}")
    uname = universes.pop()
    pack = _UNIVERSES[uname]
    layers = tuple(tuple(i for i in pack["items"][idx] if i in items)
                   for idx in range(len(pack["items"])))
    rank = {item: (i, j) for i, layer in enumerate(layers) for j, item in enumerate(layer)}
    edges = tuple(sorted(owners_targets, key=lambda e: (rank[e[0]], rank[e[1]])))
    sg = StructureGraph(uname, tuple(pack["categories"]), layers, edges)
    sg.validate()

    abstracts, _ = _abstract_catalog(sg)
    known = {param_name(o, t) for o, t in edges} | {param_name(o, c) for o, c, _ in abstracts}
    for name, recipe in recipes.items():
        for term in recipe.terms:
            if term not in known:
                raise ParseError(f"operand {term!r} has no definition in this problem")
    params = _assemble(sg, recipes, abstracts)

    qm = _QUESTION_RE.match(question)
    if not qm:
        raise ParseError(f"not a question: {question!r}")
    q_target, q_owner = qm.group(1), qm.group(2)
    query = param_name(q_owner, q_target)
    if query not in params:
        raise ParseError(f"question asks about unknown parameter {query!r}")
    g = DependencyGraph(sg, params, query, 0)
    g = DependencyGraph(sg, params, query, closure_op(g, query))
    return Problem(g, layout, statement, question, seed)
