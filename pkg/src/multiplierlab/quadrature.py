"""Adaptive Simpson quadrature and half-line moments of the bump kernels."""

from __future__ import annotations

import math
from typing import Callable

DEFAULT_TOL = 1e-9
# rational moments are integrated on [0, scale * 2**PANELS] in doubling panels
PANELS = 12


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = DEFAULT_TOL,
    max_depth: int = 48,
) -> tuple[float, float]:
    """Integrate ``f`` over [a, b] by adaptive Simpson with Richardson correction.

    Returns ``(value, error_estimate)``; the estimate is the sum of the
    per-interval ``|S2 - S1| / 15`` terms.
    """
    if a == b:
        return 0.0, 0.0
    if a > b:
        value, err = adaptive_simpson(f, b, a, tol, max_depth)
        return -value, err

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    parts: list[float] = []
    errors: list[float] = []
    while stack:
        lo, hi, flo, fmid, fhi, s1, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        s2 = left + right
        delta = s2 - s1
        if abs(delta) <= 15.0 * eps or depth >= max_depth:
            parts.append(s2 + delta / 15.0)
            errors.append(abs(delta) / 15.0)
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, 0.5 * eps, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, 0.5 * eps, depth + 1))
    return math.fsum(parts), math.fsum(errors)


def rational_moment(
    q: float, scale: float = 1.0, power: float = 0.0, tol: float = DEFAULT_TOL
) -> tuple[float, float]:
    """``int_0^inf y**power / (1 + (y/scale)**q) dy`` with an error bound.

    Quadrature covers [0, Y] with Y = scale * 2**PANELS. Beyond Y the
    integrand expands as sum_j (-1)**(j+1) y**power (scale/y)**(j q), an
    alternating series with decreasing terms, so two terms are added and the
    third bounds the remainder. Requires ``q > power + 1``.
    """
    if not q > power + 1:
        raise ValueError(f"moment diverges: need q > power + 1, got q={q}, power={power}")

    def integrand(y: float) -> float:
        return y**power / (1.0 + (y / scale) ** q)

    edges = [0.0] + [scale * 2.0**j for j in range(PANELS + 1)]
    panel_tol = tol / len(edges)
    values, errors = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, e = adaptive_simpson(integrand, lo, hi, panel_tol)
        values.append(v)
        errors.append(e)

    big = edges[-1]

    def tail_term(j: int) -> float:
        expo = j * q - power - 1.0
        return scale ** (power + 1.0) * (scale / big) ** expo / expo

    values += [tail_term(1), -tail_term(2)]
    errors.append(tail_term(3))
    return math.fsum(values), math.fsum(errors)


def rational_full_moment(q: float, power: float = 0.0) -> float:
    """Closed form ``int_0^inf y**power / (1 + y**q) dy = (pi/q) / sin((power+1) pi / q)``."""
    s = power + 1.0
    return (math.pi / q) / math.sin(s * math.pi / q)
