"""Compile interaction histories into first-order logic queries.

A history of (item, polarity) events becomes an ordered disjunction of
signed literals over binary predicates: one literal per event, evaluated
left to right. Only positive targets are ever implied; rules concluding a
negative interaction are never generated. The exponential full expansion
(every nonempty conjunction of literals) is provided purely as a small-n
testing oracle and is never fed to the neural evaluator.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

from .errors import ContractError

MAX_EXPANSION_N = 12


@dataclass(frozen=True)
class Literal:
    """A signed user-item predicate: Pos(u, v) when positive, else Neg(u, v)."""
    user: int
    item: int
    positive: bool


@dataclass(frozen=True)
class QueryExpression:
    """Chronological disjunction of literals, optionally implying a target item."""
    literals: tuple[Literal, ...]
    implied_target: int | None = None


@dataclass(frozen=True)
class FullExpansion:
    """All 2^n - 1 nonempty conjunction terms over a query's literals."""
    terms: tuple[tuple[Literal, ...], ...]


def build_query(history: Sequence[tuple[int, bool]], user: int,
                n_max: int | None = None,
                implied_target: int | None = None) -> QueryExpression:
    """Turn an ordered (item, polarity) history into its singleton-literal query."""
    n = len(history)
    if n < 1:
        raise ContractError("build_query: history must contain at least one event")
    if n_max is not None and n > n_max:
        raise ContractError(f"build_query: history length {n} exceeds n_max={n_max}")
    literals = tuple(Literal(user, item, bool(pos)) for item, pos in history)
    return QueryExpression(literals=literals, implied_target=implied_target)


def expand_full(history: Sequence[tuple[int, bool]], user: int) -> FullExpansion:
    """Enumerate every nonempty conjunction of literals (testing oracle).

    Terms are ordered by ascending subset size, lexicographically by literal
    position within each size, so the first n terms are exactly the
    singleton literals of ``build_query``.
    """
    n = len(history)
    if n < 1:
        raise ContractError("expand_full: history must contain at least one event")
    if n > MAX_EXPANSION_N:
        raise ContractError(
            f"expand_full: history length {n} exceeds the oracle scale guard "
            f"({MAX_EXPANSION_N})")
    literals = build_query(history, user).literals
    terms = []
    for size in range(1, n + 1):
        for picks in combinations(range(n), size):
            terms.append(tuple(literals[i] for i in picks))
    return FullExpansion(terms=tuple(terms))


def term_count(n: int) -> int:
    """Number of terms in the full expansion of an n-event history: 2^n - 1."""
    if not (1 <= n <= 62):
        raise ContractError(f"term_count: n={n} outside [1, 62]")
    return (1 << n) - 1


def format_query(expr: QueryExpression) -> str:
    """Render a query for inspection, e.g. ``Pos(u1,v3) ∨ Neg(u1,v7) → v?``."""
    parts = [
        f"{'Pos' if lit.positive else 'Neg'}(u{lit.user},v{lit.item})"
        for lit in expr.literals
    ]
    target = f"v{expr.implied_target}" if expr.implied_target is not None else "v?"
    return " ∨ ".join(parts) + f" → {target}"
