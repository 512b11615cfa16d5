"""Slow, independent reference implementations used to freeze expected values.

Everything here works on plain Python numbers with exact rationals where it
matters, and shares no code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction


def block_of(c: float, a: float) -> int:
    """The k with a**k <= c < a**(k+1), by walking integer powers."""
    k = 0
    while a**k > c:
        k -= 1
    while a ** (k + 1) <= c:
        k += 1
    return k


def blocks(terms, a: float, d: int) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    for n, c in enumerate(terms, start=1):
        out.setdefault(block_of(c, a), []).append(n)
    return out


def block_sums(terms, a: float, d: int) -> dict[int, Fraction]:
    return {
        k: sum(Fraction(1) / Fraction(terms[n - 1]) ** d for n in idx)
        for k, idx in blocks(terms, a, d).items()
    }


def window(terms, t: float, a: float, d: int) -> Fraction:
    return sum(
        (Fraction(1) / Fraction(c) ** d for c in terms if t <= c < a * t), Fraction(0)
    )


def growth(terms, d: int) -> float:
    ordered = sorted(terms)
    return max((m ** (1.0 / d)) / c for m, c in enumerate(ordered, start=1))


def harmonic_tail(n_terms: int) -> Fraction:
    """sum_{n=1}^{N} 1/(1+n) = H_{N+1} - 1, exactly."""
    return sum((Fraction(1, n + 1) for n in range(1, n_terms + 1)), Fraction(0))


def sphere(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)
