"""Arithmetic over Z/23 and binary-operation decomposition of solution steps.

Every quantity in a problem is an integer in [0, 23); subtraction wraps back
into that range. A parameter whose recipe aggregates several operands is
written out as a left-associated chain of binary steps, one "=" reduction per
step; the chain length is exactly what the op difficulty metric charges for
that parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .errors import UnresolvedOperandError

MODULUS = 23

OPS = ("+", "-", "*")


def mod_eval(lhs: int, operator: str, rhs: int) -> int:
    """Evaluate one binary operation mod 23 (subtraction wraps into [0,23))."""
    if operator == "+":
        return (lhs + rhs) % MODULUS
    if operator == "-":
        return (lhs - rhs) % MODULUS
    if operator == "*":
        return (lhs * rhs) % MODULUS
    raise ValueError(f"unsupported operator {operator!r}")


# A term is either a single symbol (previously defined letter) or a product of
# two symbols (count x subtotal, used by hierarchical totals).
Term = Union[str, tuple[str, str]]


@dataclass(frozen=True)
class AggSpec:
    """Normalized recipe for one parameter, ready for binary decomposition.

    `const` recipes have no terms. Otherwise `terms` combine with `combine`
    ("+" or "-"; "-" only ever pairs two terms), and an optional offset
    ("k more than ...") or scale ("k times as much as ...") applies last.
    """

    const: int | None = None
    terms: tuple[Term, ...] = ()
    combine: str = "+"
    offset: int | None = None
    scale: int | None = None

    def n_binary_ops(self) -> int:
        """Binary operations the decomposed chain performs."""
        if self.const is not None:
            return 0
        n = len(self.terms) - 1
        n += sum(1 for t in self.terms if isinstance(t, tuple))
        if self.scale is not None:
            n += 1
        if self.offset is not None:
            n += 1
        return n

    def chain_len(self) -> int:
        """Number of "=" reduction clauses; what the op metric charges."""
        return max(1, self.n_binary_ops())


@dataclass(frozen=True)
class ChainStep:
    """One "=" reduction. `op` None means plain assignment (constant or copy)."""

    lhs: str
    a: str  # letter or decimal literal
    op: str | None
    b: str | None
    value: int


@dataclass(frozen=True)
class BinOpChain:
    steps: tuple[ChainStep, ...]

    @property
    def value(self) -> int:
        return self.steps[-1].value


def _resolve(symbol: str, env: Mapping[str, int]) -> int:
    if symbol.isdigit():
        return int(symbol)
    if symbol not in env:
        raise UnresolvedOperandError(f"operand {symbol!r} is not defined yet")
    return env[symbol]


def decompose(spec: AggSpec, letter: str, env: Mapping[str, int],
              fresh: Callable[[], str]) -> BinOpChain:
    """Flatten `spec` into a left-associated chain whose last step defines `letter`.

    `env` maps already-defined letters to their values; `fresh` hands out
    intermediate letters that must not clash with anything defined so far.
    Raises UnresolvedOperandError if an operand is absent from env -- the
    evaluation-time face of a parameter that was not computable yet.
    """
    if spec.const is not None:
        return BinOpChain((ChainStep(letter, str(spec.const), None, None, spec.const % MODULUS),))

    total = spec.n_binary_ops()
    if total == 0:
        sym = spec.terms[0]
        assert isinstance(sym, str)
        return BinOpChain((ChainStep(letter, sym, None, None, _resolve(sym, env)),))

    steps: list[ChainStep] = []
    scratch: dict[str, int] = dict(env)
    emitted = 0

    def emit(a: str, op: str, b: str) -> str:
        nonlocal emitted
        value = mod_eval(_resolve(a, scratch), op, _resolve(b, scratch))
        emitted += 1
        lhs = letter if emitted == total else fresh()
        steps.append(ChainStep(lhs, a, op, b, value))
        scratch[lhs] = value
        return lhs

    def materialize(term: Term) -> str:
        if isinstance(term, tuple):
            return emit(term[0], "*", term[1])
        return term

    acc = materialize(spec.terms[0])
    for term in spec.terms[1:]:
        acc = emit(acc, spec.combine, materialize(term))
    if spec.scale is not None:
        acc = emit(str(spec.scale), "*", acc)
    if spec.offset is not None:
        acc = emit(str(spec.offset), "+", acc)
    return BinOpChain(tuple(steps))


def evaluate(spec: AggSpec, env: Mapping[str, int]) -> int:
    """Direct (non-decomposed) evaluation; the oracle the chain must agree with."""
    if spec.const is not None:
        return spec.const % MODULUS
    values = []
    for term in spec.terms:
        if isinstance(term, tuple):
            values.append(_resolve(term[0], env) * _resolve(term[1], env))
        else:
            values.append(_resolve(term, env))
    if spec.combine == "-":
        out = values[0] - sum(values[1:])
    else:
        out = sum(values)
    if spec.scale is not None:
        out *= spec.scale
    if spec.offset is not None:
        out += spec.offset
    return out % MODULUS
