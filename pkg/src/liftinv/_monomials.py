"""Canonical monomial ordering shared by polynomial evaluation and the d-lift.

Exponents of a fixed degree are listed in graded-lexicographic order, e.g. for
``n = 2, d = 2``: ``(2, 0), (1, 1), (0, 2)``.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb, factorial


@lru_cache(maxsize=None)
def exponents_of_degree(n: int, d: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for combo in combinations_with_replacement(range(n), d):
        alpha = [0] * n
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    return tuple(out)


@lru_cache(maxsize=None)
def exponents_up_to(n: int, d: int, start: int = 0) -> tuple[tuple[int, ...], ...]:
    out: list[tuple[int, ...]] = []
    for k in range(start, d + 1):
        out.extend(exponents_of_degree(n, k))
    return tuple(out)


def multinomial(alpha) -> int:
    """``|alpha|! / (alpha_1! ... alpha_n!)``."""
    out = factorial(sum(alpha))
    for a in alpha:
        out //= factorial(a)
    return out


def count_of_degree(n: int, d: int) -> int:
    return comb(n + d - 1, d)


def graded_key(alpha) -> tuple:
    """Sort key reproducing the canonical order across degrees."""
    return (sum(alpha), tuple(-a for a in alpha))
