"""Bump kernels and radial series functions built from them.

A :class:`RadialSeriesFunction` is a profile on the half-line

    F(y) = w_0 K_0(y) + sum_m w_m K_m(y / s_m - tau_m)

together with a lift to R^d: ``y = |x|`` ("norm") or ``y = |x|**d``
("power"). Only finitely many terms are stored; the unmaterialized remainder
is described by certified bounds on its sup and its integral, and by the
point beyond which it can be nonzero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping

import numpy as np

LIFTS = ("norm", "power")
_CHUNK = 1 << 22


@dataclass(frozen=True)
class BumpKernel:
    """Continuous, nonnegative kernel with values in [0, 1].

    rational:  1 / (1 + |u|**q), q > 1.
    trapezoid: 1 on [p0, p1], linear ramps to 0 over [p0 - w_left, p0] and
               [p1, p1 + w_right], 0 elsewhere.
    """

    kind: str
    q: float = 0.0
    p0: float = 0.0
    p1: float = 0.0
    w_left: float = 0.0
    w_right: float = 0.0

    def __post_init__(self) -> None:
        if self.kind == "rational":
            if not self.q > 1:
                raise ValueError(f"rational kernel needs q > 1, got {self.q}")
        elif self.kind == "trapezoid":
            if not (self.p0 <= self.p1 and self.w_left > 0 and self.w_right > 0):
                raise ValueError("trapezoid kernel needs p0 <= p1 and positive ramp widths")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    @classmethod
    def rational(cls, q: float) -> "BumpKernel":
        return cls("rational", q=float(q))

    @classmethod
    def trapezoid(cls, p0: float, p1: float, w_left: float, w_right: float) -> "BumpKernel":
        return cls("trapezoid", p0=float(p0), p1=float(p1), w_left=float(w_left), w_right=float(w_right))

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "rational":
            return (-math.inf, math.inf)
        return (self.p0 - self.w_left, self.p1 + self.w_right)

    @property
    def lipschitz(self) -> float:
        if self.kind == "trapezoid":
            return max(1.0 / self.w_left, 1.0 / self.w_right)
        # max of |d/du (1 + u^q)^-1| is attained at u^q = (q-1)/(q+1)
        q = self.q
        u = ((q - 1.0) / (q + 1.0)) ** (1.0 / q)
        return q * u ** (q - 1.0) / (1.0 + u**q) ** 2

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "rational":
            return 1.0 / (1.0 + np.power(np.abs(u), self.q))
        lo, hi = self.support
        # plateau tested by comparison so it evaluates to exactly 1.0
        rising = (u - lo) / self.w_left
        falling = (hi - u) / self.w_right
        ramp = np.where(u < self.p0, rising, falling)
        out = np.where((u > lo) & (u < hi), ramp, 0.0)
        return np.where((u >= self.p0) & (u <= self.p1), 1.0, out)

    def area_from(self, start: float) -> float:
        """Exact ``int_start^inf K(u) du`` for the trapezoid kind."""
        if self.kind != "trapezoid":
            raise ValueError("closed-form area is only available for trapezoid kernels")
        lo, hi = self.support
        pieces = [
            (lo, self.p0, lambda u: (u - lo) / self.w_left),
            (self.p0, self.p1, lambda u: 1.0),
            (self.p1, hi, lambda u: (hi - u) / self.w_right),
        ]
        total = []
        for a, b, fn in pieces:
            a = max(a, start)
            if b > a:
                total.append(0.5 * (b - a) * (fn(a) + fn(b)))
        return math.fsum(total)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "rational":
            return {"kind": "rational", "q": self.q}
        return {
            "kind": "trapezoid",
            "p0": self.p0,
            "p1": self.p1,
            "w_left": self.w_left,
            "w_right": self.w_right,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "BumpKernel":
        kind = obj.get("kind")
        if kind == "rational":
            return cls.rational(obj["q"])
        if kind == "trapezoid":
            return cls.trapezoid(obj["p0"], obj["p1"], obj["w_left"], obj["w_right"])
        raise ValueError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class SeriesTerm:
    """One summand ``weight * kernel(y / scale - shift)``."""

    weight: float
    scale: float
    shift: float
    kernel: BumpKernel

    def __post_init__(self) -> None:
        if not (self.weight > 0 and self.scale > 0 and self.shift >= 0):
            raise ValueError(f"series term needs weight > 0, scale > 0, shift >= 0: {self}")

    @property
    def support(self) -> tuple[float, float]:
        lo, hi = self.kernel.support
        return ((lo + self.shift) * self.scale, (hi + self.shift) * self.scale)

    def __call__(self, y) -> np.ndarray:
        return self.weight * self.kernel(np.asarray(y, dtype=float) / self.scale - self.shift)

    def to_dict(self) -> dict[str, Any]:
        return {"w": self.weight, "s": self.scale, "tau": self.shift, "kernel": self.kernel.to_dict()}

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "SeriesTerm":
        return cls(float(obj["w"]), float(obj["s"]), float(obj["tau"]), BumpKernel.from_dict(obj["kernel"]))


def coalesce_terms(terms: Iterable[SeriesTerm]) -> list[SeriesTerm]:
    """Merge terms that share scale, shift and kernel by adding their weights."""
    groups: dict[tuple, list[float]] = {}
    for t in terms:
        groups.setdefault((t.scale, t.shift, t.kernel), []).append(t.weight)
    return [
        SeriesTerm(math.fsum(ws), s, tau, kernel) for (s, tau, kernel), ws in groups.items()
    ]


def _finite_or_none(x: float):
    return x if math.isfinite(x) else None


def _none_to_inf(x):
    return math.inf if x is None else float(x)


@dataclass(frozen=True, eq=False)
class RadialSeriesFunction:
    """Truncated kernel series with certified remainder bounds.

    ``sup_remainder`` bounds the sup of the unmaterialized terms and
    ``integral_remainder`` their half-line integral; both are zero for a
    finite object. The remainder vanishes identically on
    ``[0, remainder_start)``.
    """

    base: tuple[float, BumpKernel] | None = None
    terms: tuple[SeriesTerm, ...] = ()
    d: int = 1
    lift: str = "power"
    sup_remainder: float = 0.0
    integral_remainder: float = 0.0
    remainder_start: float = math.inf
    _groups: list = field(default_factory=list, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.lift not in LIFTS:
            raise ValueError(f"lift must be one of {LIFTS}")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "_groups", self._build_groups(len(self.terms)))

    def _build_groups(self, count: int) -> list:
        by_kernel: dict[BumpKernel, list[SeriesTerm]] = {}
        for t in self.terms[:count]:
            by_kernel.setdefault(t.kernel, []).append(t)
        groups = []
        for kernel, ts in by_kernel.items():
            arr = np.array([[t.weight, t.scale, t.shift] for t in ts])
            groups.append((kernel, arr[:, 0:1], arr[:, 1:2], arr[:, 2:3]))
        return groups

    @property
    def is_empty(self) -> bool:
        return self.base is None and not self.terms

    def profile(self, y, truncation: int | None = None) -> np.ndarray:
        """Evaluate the half-line profile using the first ``truncation`` terms."""
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        out = np.zeros_like(flat)
        if self.base is not None:
            w0, k0 = self.base
            out += w0 * k0(flat)
        groups = self._groups if truncation is None or truncation >= len(self.terms) else self._build_groups(truncation)
        for kernel, w, s, tau in groups:
            step = max(1, _CHUNK // max(1, w.shape[0]))
            for lo in range(0, flat.size, step):
                chunk = flat[lo : lo + step]
                out[lo : lo + step] += np.sum(w * kernel(chunk[None, :] / s - tau), axis=0)
        return out.reshape(y.shape)

    def lifted_argument(self, points) -> np.ndarray:
        """Map points of R^d (shape (..., d), or scalars when d == 1) to y."""
        pts = np.asarray(points, dtype=float)
        if self.d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1):
            rho = np.abs(pts)
        else:
            rho = np.linalg.norm(pts, axis=-1)
        return rho if self.lift == "norm" else np.power(rho, self.d)

    def __call__(self, points) -> np.ndarray:
        return self.profile(self.lifted_argument(points))

    def sup_tail_bound(self, truncation: int) -> float:
        """Bound on the sup over y of everything beyond the first ``truncation`` terms."""
        stored = [t.weight for t in self.terms[truncation:]]
        return math.fsum(stored) + self.sup_remainder

    def evaluate(self, y, truncation: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Profile values and pointwise error bounds for a truncation."""
        y = np.asarray(y, dtype=float)
        m = len(self.terms) if truncation is None else min(truncation, len(self.terms))
        values = self.profile(y, m)
        err = np.zeros_like(values)
        for t in self.terms[m:]:
            lo, hi = t.support
            err += np.where((y >= lo) & (y <= hi), t.weight, 0.0)
        if self.sup_remainder:
            err = err + np.where(y >= self.remainder_start, self.sup_remainder, 0.0)
        return values, err

    def to_dict(self) -> dict[str, Any]:
        return {
            "base": None if self.base is None else {"w": self.base[0], "kernel": self.base[1].to_dict()},
            "terms": [t.to_dict() for t in self.terms],
            "d": self.d,
            "lift": self.lift,
            "sup_remainder": _finite_or_none(self.sup_remainder),
            "integral_remainder": _finite_or_none(self.integral_remainder),
            "remainder_start": _finite_or_none(self.remainder_start),
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "RadialSeriesFunction":
        base = obj.get("base")
        return cls(
            base=None if base is None else (float(base["w"]), BumpKernel.from_dict(base["kernel"])),
            terms=tuple(SeriesTerm.from_dict(t) for t in obj.get("terms", [])),
            d=int(obj.get("d", 1)),
            lift=obj.get("lift", "power"),
            sup_remainder=_none_to_inf(obj.get("sup_remainder", 0.0)),
            integral_remainder=_none_to_inf(obj.get("integral_remainder", 0.0)),
            remainder_start=_none_to_inf(obj.get("remainder_start")),
        )


def radial_lift(fn, d: int):
    """The function x -> F(|x|**d) on R^d.

    A :class:`RadialSeriesFunction` comes back re-tagged (still serializable);
    any other vectorized profile callable is wrapped in a closure.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if isinstance(fn, RadialSeriesFunction):
        return replace(fn, d=d, lift="power")

    def lifted(points):
        pts = np.asarray(points, dtype=float)
        rho = np.abs(pts) if d == 1 and (pts.ndim == 0 or pts.shape[-1] != 1) else np.linalg.norm(pts, axis=-1)
        return fn(np.power(rho, d))

    return lifted
