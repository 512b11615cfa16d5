"""Multiplier sequences and the three equivalent boundedness statistics.

For a positive sequence (c_n) and a dimension d, three finite-data statistics
describe how fast the sequence grows:

* growth statistic ``L = max_m m**(1/d) / c'_m`` over the nondecreasing
  rearrangement ``c'``;
* block ratio ``M' = max_k |A_k| / a**(k*d)`` with
  ``A_k = {n : a**k <= c_n < a**(k+1)}``;
* window sum ``M = sup_t sum_{t <= c_n < a*t} c_n**(-d)``.

On an infinite sequence the three are bounded together or unbounded together.
On a stored prefix they obey explicit inequalities, which ``classify`` checks
exactly (up to a few ulps of float rounding).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import accumulate
from typing import Any, Mapping

import numpy as np

ULP_SLACK = 4
DEFAULT_BASE = 2.0
FAMILIES = ("power", "log", "packed", "constant", "convergent", "ceil")

# running growth statistic must still rise by this log2-slope over the last
# doubling of the prefix to count as evidence of unboundedness
GROWTH_SLOPE_THRESHOLD = 0.05


class SequenceError(ValueError):
    """Malformed sequence data or out-of-range parameter."""


def leq_ulps(lhs: float, rhs: float, ulps: int = ULP_SLACK) -> bool:
    """``lhs <= rhs`` allowing ``ulps`` units in the last place of ``rhs``."""
    return lhs <= rhs + ulps * math.ulp(rhs)


def _param(params: Mapping[str, Any], name: str, family: str, default=None) -> float:
    if name in params:
        value = params[name]
    elif default is not None:
        value = default
    else:
        raise SequenceError(f"field 'params.{name}' is required by family '{family}'")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise SequenceError(f"field 'params.{name}' must be a number, got {value!r}") from None


def family_terms(family: str, params: Mapping[str, Any], n_terms: int) -> np.ndarray:
    """Generate the first ``n_terms`` terms of a built-in family.

    Families:
        power:      scale * n**p + amp * sin(n)      (terms must stay positive)
        log:        scale * log(n + shift)
        packed:     round(copies_base**j) copies of value_base**j, j = 0, 1, ...
        constant:   value
        convergent: limit + scale / n
        ceil:       ceil of an inner family, ``params = {"inner": {...}}``
    """
    if n_terms < 1:
        raise SequenceError("field 'N' must be >= 1")
    n = np.arange(1, n_terms + 1, dtype=float)
    if family == "power":
        p = _param(params, "p", family)
        scale = _param(params, "scale", family, 1.0)
        amp = _param(params, "amp", family, 0.0)
        if not scale > 0:
            raise SequenceError("field 'params.scale' must be > 0 for the power family")
        return scale * np.power(n, p) + amp * np.sin(n)
    if family == "log":
        scale = _param(params, "scale", family, 1.0)
        shift = _param(params, "shift", family, 1.0)
        return scale * np.log(n + shift)
    if family == "packed":
        value_base = _param(params, "value_base", family, 2.0)
        copies_base = _param(params, "copies_base", family, 4.0)
        out = np.empty(n_terms)
        pos, j = 0, 0
        while pos < n_terms:
            take = min(max(int(round(copies_base**j)), 1), n_terms - pos)
            out[pos : pos + take] = np.power(value_base, float(j))
            pos += take
            j += 1
        return out
    if family == "constant":
        return np.full(n_terms, _param(params, "value", family))
    if family == "convergent":
        limit = _param(params, "limit", family)
        scale = _param(params, "scale", family, 1.0)
        return limit + scale / n
    if family == "ceil":
        inner = params.get("inner")
        if not isinstance(inner, Mapping) or "family" not in inner:
            raise SequenceError("field 'params.inner' must be an object with a 'family'")
        return np.ceil(family_terms(inner["family"], inner.get("params", {}), n_terms))
    raise SequenceError(f"field 'family': unknown family {family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True, eq=False)
class MultiplierSequence:
    """A finite, strictly positive prefix c_1..c_N of a multiplier sequence.

    ``family``/``params`` optionally name the closed-form generator the terms
    came from; when present the terms are checked against it.
    """

    terms: np.ndarray
    d: int = 1
    family: str | None = None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        terms = np.array(self.terms, dtype=float).ravel()
        if terms.size < 1:
            raise SequenceError("field 'terms' must hold at least one term")
        if not np.all(np.isfinite(terms)) or not np.all(terms > 0):
            raise SequenceError("field 'terms' must be finite and strictly positive")
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 1:
            raise SequenceError(f"field 'd' must be a positive integer, got {self.d!r}")
        if self.family is not None:
            expected = family_terms(self.family, self.params, terms.size)
            if not np.allclose(terms, expected, rtol=1e-12, atol=0.0):
                raise SequenceError(f"field 'terms' disagrees with family {self.family!r}")
        terms.setflags(write=False)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "params", dict(self.params))

    @classmethod
    def from_family(cls, family: str, n_terms: int, d: int = 1, **params: Any) -> "MultiplierSequence":
        return cls(family_terms(family, params, n_terms), d=d, family=family, params=params)

    def __len__(self) -> int:
        return int(self.terms.size)

    def prefix(self, n_terms: int) -> "MultiplierSequence":
        if not 1 <= n_terms <= len(self):
            raise SequenceError(f"prefix length {n_terms} outside 1..{len(self)}")
        return MultiplierSequence(self.terms[:n_terms], self.d, self.family, self.params)

    def to_dict(self, include_terms: bool | None = None) -> dict[str, Any]:
        """JSON form ``{"d", "terms", "family", "params", "N"}``.

        Terms are omitted for family-tagged sequences unless requested, since
        they regenerate bit-exactly from the family.
        """
        out: dict[str, Any] = {"d": self.d, "N": len(self)}
        if self.family is not None:
            out["family"] = self.family
            out["params"] = dict(self.params)
        if include_terms or (include_terms is None and self.family is None):
            out["terms"] = self.terms.tolist()
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "MultiplierSequence":
        if not isinstance(obj, Mapping):
            raise SequenceError("sequence input must be a JSON object")
        if "d" not in obj:
            raise SequenceError("field 'd' is missing")
        d = obj["d"]
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise SequenceError(f"field 'd' must be a positive integer, got {d!r}")
        family = obj.get("family")
        params = obj.get("params") or {}
        if not isinstance(params, Mapping):
            raise SequenceError("field 'params' must be an object")
        if "terms" in obj:
            terms = obj["terms"]
            if not isinstance(terms, list) or not all(
                isinstance(t, (int, float)) and not isinstance(t, bool) for t in terms
            ):
                raise SequenceError("field 'terms' must be a list of numbers")
            return cls(terms, d=d, family=family, params=params)
        if family is None:
            raise SequenceError("field 'terms' is missing (and no 'family' to generate it)")
        n_terms = obj.get("N", params.get("N"))
        if not isinstance(n_terms, int) or isinstance(n_terms, bool):
            raise SequenceError("field 'N' must be an integer when 'terms' is absent")
        params = {k: v for k, v in params.items() if k != "N"}
        return cls.from_family(family, n_terms, d=d, **params)


def _check_base(a: float) -> float:
    a = float(a)
    if not a > 1.0 or not math.isfinite(a):
        raise SequenceError(f"base a must be > 1, got {a!r}")
    return a


def apow(a: float, k) -> np.ndarray | float:
    """``a**k`` through one code path, so block edges agree everywhere."""
    return np.power(np.float64(a), np.asarray(k, dtype=float))


def inverse_powers(values: np.ndarray, d: int) -> np.ndarray:
    return np.power(values, -float(d))


def sorted_order(seq: MultiplierSequence) -> np.ndarray:
    """Indices (0-based) of the nondecreasing rearrangement; ties by index."""
    return np.argsort(seq.terms, kind="stable")


def sorted_view(seq: MultiplierSequence) -> np.ndarray:
    return seq.terms[sorted_order(seq)]


def running_growth(seq: MultiplierSequence) -> np.ndarray:
    """Running maximum of m**(1/d) / c'_m over the sorted view."""
    m = np.arange(1, len(seq) + 1, dtype=float)
    return np.maximum.accumulate(np.power(m, 1.0 / seq.d) / sorted_view(seq))


def growth_statistic(seq: MultiplierSequence) -> float:
    return float(running_growth(seq)[-1])


def block_keys(values: np.ndarray, a: float) -> np.ndarray:
    """k(n) with a**k <= c_n < a**(k+1), settled by direct comparison.

    The log estimate can be off by one next to a block edge; the comparison
    loop moves it onto the side dictated by ``apow``.
    """
    values = np.asarray(values, dtype=float)
    k = np.floor(np.log(values) / math.log(a))
    for _ in range(64):
        low = values < apow(a, k)
        high = values >= apow(a, k + 1)
        if not (low.any() or high.any()):
            break
        k = k - low + high
    return k.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Block:
    k: int
    indices: np.ndarray  # 1-based, increasing
    count: int
    ratio: float  # |A_k| / a**(k d)
    block_sum: float  # sum of c_n**(-d) over A_k


@dataclass(frozen=True, eq=False)
class DyadicProfile:
    a: float
    d: int
    blocks: dict[int, Block]
    keys: np.ndarray  # k(n) for n = 1..N, stored 0-based

    @property
    def max_ratio(self) -> float:
        return max(b.ratio for b in self.blocks.values())

    def key_of(self, n: int) -> int:
        return int(self.keys[n - 1])


def dyadic_profile(seq: MultiplierSequence, a: float = DEFAULT_BASE) -> DyadicProfile:
    a = _check_base(a)
    keys = block_keys(seq.terms, a)
    inv = inverse_powers(seq.terms, seq.d)
    order = np.argsort(keys, kind="stable")
    uniq, starts, counts = np.unique(keys[order], return_index=True, return_counts=True)
    blocks: dict[int, Block] = {}
    for k, start, count in zip(uniq.tolist(), starts.tolist(), counts.tolist()):
        members = order[start : start + count]
        blocks[k] = Block(
            k=k,
            indices=members + 1,
            count=count,
            ratio=count / float(apow(a, k * seq.d)),
            block_sum=math.fsum(inv[members].tolist()),
        )
    keys.setflags(write=False)
    return DyadicProfile(a=a, d=seq.d, blocks=blocks, keys=keys)


def window_sum(seq: MultiplierSequence, t: float, a: float = DEFAULT_BASE) -> float:
    """Correctly rounded sum of c_n**(-d) over the half-open window t <= c_n < a*t."""
    a = _check_base(a)
    if not t > 0:
        raise SequenceError(f"window start t must be > 0, got {t!r}")
    mask = (seq.terms >= t) & (seq.terms < a * t)
    return math.fsum(inverse_powers(seq.terms[mask], seq.d).tolist())


class _ExactPrefix:
    """Exact prefix sums of c**(-d) over sorted terms.

    Each double is an integer times a power of two, so the sums are held as
    Python ints over a common exponent; int / int is correctly rounded, which
    makes every window sum agree bit-for-bit with ``math.fsum``.
    """

    def __init__(self, values: np.ndarray, d: int) -> None:
        inv = inverse_powers(values, d)
        mant, expo = np.frexp(inv)
        mant_int = (mant * 2.0**53).astype(np.int64)
        shift = expo.astype(np.int64) - 53
        self._base = int(shift.min())
        shift -= self._base
        ints = [m << s for m, s in zip(mant_int.tolist(), shift.tolist())]
        self._prefix = [0, *accumulate(ints)]

    def between(self, lo: int, hi: int) -> float:
        total = self._prefix[hi] - self._prefix[lo]
        if self._base >= 0:
            return float(total << self._base)
        return total / (1 << -self._base)


@dataclass(frozen=True)
class ClassificationReport:
    d: int
    a: float
    n_terms: int
    growth_stat: float
    max_ratio: float
    max_window: float
    verdict: str
    evidence: dict[str, Any]
    cross_bounds: dict[str, dict[str, Any]]

    @property
    def bounded(self) -> bool:
        return self.verdict in ("bounded-evidence", "analytic-bounded")

    @property
    def cross_bounds_hold(self) -> bool:
        return all(c["holds"] for c in self.cross_bounds.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "d": self.d,
            "a": self.a,
            "n_terms": self.n_terms,
            "growth_stat": self.growth_stat,
            "max_ratio": self.max_ratio,
            "max_window": self.max_window,
            "verdict": self.verdict,
            "evidence": self.evidence,
            "cross_bounds": self.cross_bounds,
        }


def analytic_verdict(family: str | None, params: Mapping[str, Any], d: int) -> str | None:
    """Closed-form answer for power-type families, else None.

    c_n ~ scale * n**p admits a rearrangement with n**(1/d)/c_n bounded iff
    p >= 1/d; a bounded sine perturbation or a ceiling does not change that.
    """
    if family == "power":
        return "analytic-bounded" if float(params["p"]) * d >= 1.0 else "analytic-unbounded"
    if family == "ceil":
        inner = params.get("inner", {})
        return analytic_verdict(inner.get("family"), inner.get("params", {}), d)
    return None


def classify(seq: MultiplierSequence, a: float = DEFAULT_BASE) -> ClassificationReport:
    """Compute all three statistics on the stored prefix and cross-check them.

    Window sums are probed at t in {a**k} over present blocks and at every
    distinct term value; the supremum over t > 0 is attained at a term value,
    so this gives the exact finite-data M.
    """
    a = _check_base(a)
    d = seq.d
    values = sorted_view(seq)
    n_terms = values.size

    running = running_growth(seq)
    growth = float(running[-1])
    growth_argmax = int(np.argmax(np.power(np.arange(1, n_terms + 1, dtype=float), 1.0 / d) / values)) + 1

    profile = dyadic_profile(seq, a)
    ks = sorted(profile.blocks)
    ratios = [profile.blocks[k].ratio for k in ks]
    max_ratio = max(ratios)
    max_ratio_k = ks[int(np.argmax(ratios))]

    probes = np.union1d(apow(a, np.array(ks, dtype=float)), values)
    lo = np.searchsorted(values, probes, side="left")
    hi = np.searchsorted(values, a * probes, side="left")
    exact = _ExactPrefix(values, d)
    windows = np.array([exact.between(i, j) for i, j in zip(lo.tolist(), hi.tolist())])
    max_window = float(windows.max())
    max_window_t = float(probes[int(np.argmax(windows))])

    # (i) => (iii): every block ratio below (L a)^d
    ratio_bound = (growth * a) ** d
    # (iii) => (ii): every window sum at most twice the max block ratio
    window_bound = 2.0 * max_ratio
    # (ii) => (i'): growth statistic at most (M / (1 - a^-d))^(1/d)
    count_factor = max_window / (1.0 - a ** (-d))
    growth_bound = count_factor ** (1.0 / d)
    # counting bound |{n : c_n < t}| <= t^d M / (1 - a^-d) at every probe
    count_limits = np.power(probes, d) * count_factor
    count_ok = [leq_ulps(float(c), float(lim)) for c, lim in zip(lo.tolist(), count_limits.tolist())]
    worst_count = int(np.argmax(lo / count_limits))

    cross_bounds = {
        "ratio_below_growth_bound": {
            "holds": max_ratio < ratio_bound or leq_ulps(max_ratio, ratio_bound),
            "measured": max_ratio,
            "bound": ratio_bound,
        },
        "window_below_twice_ratio": {
            "holds": leq_ulps(max_window, window_bound),
            "measured": max_window,
            "bound": window_bound,
        },
        "growth_below_window_bound": {
            "holds": leq_ulps(growth, growth_bound),
            "measured": growth,
            "bound": growth_bound,
        },
        "counting_bound": {
            "holds": all(count_ok),
            "measured": int(lo[worst_count]),
            "bound": float(count_limits[worst_count]),
            "t": float(probes[worst_count]),
        },
    }

    half = running[(n_terms + 1) // 2 - 1]
    slope = math.log2(growth / half) if n_terms >= 2 else 0.0
    half_keys = [k for k in ks if profile.blocks[k].indices.min() <= (n_terms + 1) // 2]
    evidence = {
        "growth_argmax_m": growth_argmax,
        "growth_half_prefix": float(half),
        "growth_log2_slope": slope,
        "max_ratio_k": max_ratio_k,
        "max_ratio_first_half": max(profile.blocks[k].ratio for k in half_keys),
        "max_window_t": max_window_t,
        "n_blocks": len(ks),
    }

    verdict = analytic_verdict(seq.family, seq.params, d)
    if verdict is None:
        verdict = "unbounded-evidence" if slope > GROWTH_SLOPE_THRESHOLD else "bounded-evidence"

    return ClassificationReport(
        d=d,
        a=a,
        n_terms=n_terms,
        growth_stat=growth,
        max_ratio=max_ratio,
        max_window=max_window,
        verdict=verdict,
        evidence=evidence,
        cross_bounds=cross_bounds,
    )


def improve_sequence(seq: MultiplierSequence) -> MultiplierSequence:
    """Termwise ceiling b_n = ceil(c_n): integer multipliers with b_n/c_n -> 1."""
    terms = np.ceil(seq.terms)
    if seq.family is None:
        return MultiplierSequence(terms, d=seq.d)
    inner = {"family": seq.family, "params": dict(seq.params)}
    return MultiplierSequence(terms, d=seq.d, family="ceil", params={"inner": inner})


def tends_to_infinity(terms: np.ndarray) -> bool:
    """Finite-prefix trend check for c_n -> infinity.

    Accepts when the minimum over the second half of the prefix is at least
    twice the overall minimum. A convergent or constant sequence fails it;
    the check is evidence only.
    """
    terms = np.asarray(terms, dtype=float)
    if terms.size < 4:
        return False
    return bool(terms[terms.size // 2 :].min() >= 2.0 * terms.min())
