"""Counterexample synthesis: divergence, rate and perturbed-sequence builders.

Every builder returns a :class:`~multiplierlab.kernels.RadialSeriesFunction`
plus a :class:`ConstructionCertificate` recording each choice it made, so the
postconditions can be re-checked without re-running the builder (see
:mod:`multiplierlab.verify`).
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from .kernels import BumpKernel, RadialSeriesFunction, SeriesTerm, coalesce_terms, radial_lift
from .quadrature import rational_full_moment
from .sequence_core import (
    DyadicProfile,
    MultiplierSequence,
    apow,
    classify,
    dyadic_profile,
    inverse_powers,
    tends_to_infinity,
)

# relative widening of the single-stage plateau; absorbs rounding in b_n * x
PLATEAU_SLACK = 1e-12
MIN_SELECTIONS = 3

__all__ = [
    "ConstructionError",
    "PrefixExhausted",
    "RateSequence",
    "ConstructionCertificate",
    "build_divergence_function",
    "build_rate_counterexample",
    "schedule",
    "single_stage",
    "SingleStage",
    "build_perturbed_counterexample",
    "PerturbedCounterexample",
    "stage_b_tilde",
    "radial_lift",
]


class ConstructionError(RuntimeError):
    """A builder precondition failed; the message is the diagnostic."""


class PrefixExhausted(ConstructionError):
    def __init__(self, message: str, stage: int | None = None) -> None:
        super().__init__(message)
        self.stage = stage


# ---------------------------------------------------------------------------
# rate sequences (a_n) for the limsup construction

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"log": math.log, "sqrt": math.sqrt, "exp": math.exp, "log2": math.log2, "log10": math.log10}


def _eval_formula(node: ast.AST, n: float) -> float:
    if isinstance(node, ast.Expression):
        return _eval_formula(node.body, n)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "n":
        return n
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_formula(node.left, n), _eval_formula(node.right, n))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
        return -_eval_formula(node.operand, n)
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        return _FUNCS[node.func.id](*(_eval_formula(a, n) for a in node.args))
    raise ValueError(f"unsupported formula element: {ast.dump(node)}")


@dataclass(frozen=True)
class RateSequence:
    """The weights (a_n) with a_n -> infinity.

    Either a ``formula`` in ``n`` (``+ - * / **``, log, sqrt, exp; ``^`` is
    read as power) or a finite list of ``values``. ``tail="nondecreasing"``
    asserts monotonicity, which is what makes thresholds computable.
    """

    formula: str | None = None
    values: tuple[float, ...] | None = None
    tail: str | None = None

    def __post_init__(self) -> None:
        if (self.formula is None) == (self.values is None):
            raise ValueError("give exactly one of formula or values")
        if self.tail not in (None, "nondecreasing"):
            raise ValueError(f"unknown tail tag {self.tail!r}")
        if self.formula is not None:
            tree = ast.parse(self.formula.replace("^", "**"), mode="eval")
            _eval_formula(tree, 1.0)
            object.__setattr__(self, "_tree", tree)
        else:
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if any(v < 0 for v in self.values):
                raise ValueError("rate sequence values must be nonnegative")

    @classmethod
    def from_formula(cls, formula: str, tail: str | None = "nondecreasing") -> "RateSequence":
        return cls(formula=formula, tail=tail)

    def __call__(self, n: int) -> float:
        if self.formula is not None:
            return float(_eval_formula(self._tree, float(n)))
        if not 1 <= n <= len(self.values):
            raise IndexError(f"a_{n} is beyond the {len(self.values)} stored values")
        return self.values[n - 1]

    def threshold(self, level: float) -> int:
        """Least t with a_n >= level for every n >= t."""
        if self.tail != "nondecreasing":
            raise ConstructionError(
                "rate sequence has no tail tag; finite data cannot define thresholds"
            )
        if self.values is not None:
            vals = np.asarray(self.values)
            if np.any(np.diff(vals) < 0):
                raise ConstructionError("rate values are tagged nondecreasing but decrease")
            hits = np.nonzero(vals >= level)[0]
            if hits.size == 0:
                raise ConstructionError(
                    f"no stored a_n reaches {level:g}; finite data cannot define the threshold"
                )
            return int(hits[0]) + 1
        hi = 1
        while self(hi) < level:
            hi *= 2
            if hi > 2**62:
                raise ConstructionError(f"a_n never reaches {level:g}; a_n does not tend to infinity")
        lo = hi // 2 + 1 if hi > 1 else 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self(mid) >= level:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def to_dict(self) -> dict[str, Any]:
        if self.formula is not None:
            return {"formula": self.formula, "tail": self.tail}
        return {"values": list(self.values), "tail": self.tail}

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "RateSequence":
        if "formula" in obj:
            return cls(formula=obj["formula"], tail=obj.get("tail"))
        return cls(values=tuple(obj["values"]), tail=obj.get("tail"))


# ---------------------------------------------------------------------------
# certificates


@dataclass
class ConstructionCertificate:
    theorem: str
    branch: str = "main"
    sequence: dict | None = None
    a_seq: dict | None = None
    selections: list[dict] = field(default_factory=list)
    thresholds: list[int] = field(default_factory=list)
    stages: list[dict] = field(default_factory=list)
    weight_sum: float | None = None
    r_sum: float | None = None
    divergence_witness: float | None = None
    harmonic_witness: float | None = None
    integral_bound: float | None = None
    tail_bound: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "ConstructionCertificate":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


def _to_ranges(indices: np.ndarray) -> list[list[int]]:
    """Sorted 1-based indices as inclusive runs ``[[start, end], ...]``."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return []
    breaks = np.nonzero(np.diff(idx) != 1)[0]
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]]))
    return [[int(s), int(e)] for s, e in zip(starts, ends)]


def _from_ranges(ranges: Sequence[Sequence[int]]) -> np.ndarray:
    if not ranges:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([np.arange(s, e + 1, dtype=np.int64) for s, e in ranges])


def _fallback(seq: MultiplierSequence, theorem: str) -> tuple[RadialSeriesFunction, ConstructionCertificate]:
    fn = RadialSeriesFunction(base=(1.0, BumpKernel.rational(seq.d + 1)), d=seq.d, lift="norm")
    cert = ConstructionCertificate(
        theorem=theorem, branch="subsequence-limit branch", sequence=seq.to_dict(), tail_bound=0.0
    )
    return fn, cert


# ---------------------------------------------------------------------------
# divergence of sum |f(c_n x)| everywhere


def build_divergence_function(
    seq: MultiplierSequence, prefix_N: int | None = None
) -> tuple[RadialSeriesFunction, ConstructionCertificate]:
    """Integrable f with sum_n f(c_n x) unbounded, built over a prefix.

    Blocks A_k use base 2. Blocks are scanned in increasing k and the i-th
    selection is the first unused block with l_k >= i; selected blocks get
    r = 1 / (i**2 |A_k|). The series is sum_m r_{k(m)} c_m**-d g(x / c_m)
    with g(x) = 1 / (1 + |x|**(d+1)); members sharing a value are merged.
    """
    n_terms = len(seq) if prefix_N is None else prefix_N
    if not 1 <= n_terms <= len(seq):
        raise ConstructionError(f"prefix_N={prefix_N} outside 1..{len(seq)}")
    seq = seq.prefix(n_terms)
    d = seq.d
    if not tends_to_infinity(seq.terms):
        return _fallback(seq, "3")
    report = classify(seq, 2.0)
    if report.bounded:
        raise ConstructionError(
            f"precondition failed: block ratios look bounded (verdict {report.verdict}); "
            "no divergent construction exists for this sequence"
        )

    profile = dyadic_profile(seq, 2.0)
    selections = []
    i = 1
    for k in sorted(profile.blocks):
        block = profile.blocks[k]
        if block.block_sum >= i:
            selections.append((i, block))
            i += 1
    if len(selections) < MIN_SELECTIONS:
        raise ConstructionError(
            f"prefix too short: only {len(selections)} block(s) reach l_(k_i) >= i "
            f"(need {MIN_SELECTIONS})"
        )

    kernel = BumpKernel.rational(d + 1)
    inv = inverse_powers(seq.terms, d)
    raw_terms, weights, records = [], [], []
    for i, block in selections:
        r = 1.0 / (i * i * block.count)
        members = block.indices - 1
        w = r * inv[members]
        weights.extend(w.tolist())
        raw_terms.extend(
            SeriesTerm(float(wm), float(c), 0.0, kernel) for wm, c in zip(w, seq.terms[members])
        )
        records.append(
            {
                "i": i,
                "k": block.k,
                "count": block.count,
                "block_sum": block.block_sum,
                "r": r,
                "first_index": int(block.indices.min()),
                "last_index": int(block.indices.max()),
                "min_term": float(seq.terms[members].min()),
                "max_term": float(seq.terms[members].max()),
            }
        )

    count = len(selections)
    k_top = max(profile.blocks)
    # unmaterialized selections i > count sit at c >= 2**(k_top + 1) and carry
    # r-mass sum_{i > count} 1/i**2 <= 1/count
    tail_mass = 1.0 / count
    g_integral = _sphere(d) * rational_full_moment(d + 1, d - 1)
    fn = RadialSeriesFunction(
        terms=tuple(sorted(coalesce_terms(raw_terms), key=lambda t: t.scale)),
        d=d,
        lift="norm",
        sup_remainder=tail_mass * 2.0 ** (-(k_top + 1) * d),
        integral_remainder=tail_mass * g_integral,
        remainder_start=0.0,
    )
    cert = ConstructionCertificate(
        theorem="3",
        sequence=seq.to_dict(),
        selections=records,
        weight_sum=math.fsum(weights),
        r_sum=math.fsum(rec["r"] * rec["count"] for rec in records),
        divergence_witness=math.fsum(rec["r"] * rec["count"] * rec["block_sum"] for rec in records),
        harmonic_witness=math.fsum(1.0 / rec["i"] for rec in records),
        integral_bound=g_integral * math.pi**2 / 6.0,
        tail_bound=fn.sup_remainder,
    )
    return fn, cert


def _sphere(d: int) -> float:
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


# ---------------------------------------------------------------------------
# limsup a_n f(n^(1/d) x) = infinity


def rate_h() -> BumpKernel:
    """Plateau [0, 1], unit ramps: integral 2 over R, 1.5 over [0, inf)."""
    return BumpKernel.trapezoid(0.0, 1.0, 1.0, 1.0)


def _inverse_cube_up(l: int) -> float:
    w = 1.0 / l**3
    if Fraction(w) * l**3 < 1:
        w = math.nextafter(w, math.inf)
    return w


def build_rate_counterexample(
    a_seq: RateSequence,
    d: int = 1,
    k_max: int = 20,
    thresholds: Sequence[int] | None = None,
) -> tuple[RadialSeriesFunction, ConstructionCertificate]:
    """F(y) = h(y) + sum_{l <= k_max} h(y/l - t_l) / l**3, lifted by |x|**d.

    ``t_k`` is the least threshold with a_n >= k**4 for all n >= t_k, unless
    ``thresholds`` supplies them. Weights are 1/l**3 rounded up so the
    witness inequality a_n F(n x) >= k holds in floating point too.
    """
    if k_max < 1:
        raise ConstructionError("k_max must be >= 1")
    if thresholds is None:
        thresholds = [a_seq.threshold(float(k) ** 4) for k in range(1, k_max + 1)]
    thresholds = [int(t) for t in thresholds]
    if len(thresholds) != k_max or any(t < 1 for t in thresholds):
        raise ConstructionError("need k_max thresholds, each a positive integer")
    if any(t2 < t1 for t1, t2 in zip(thresholds, thresholds[1:])):
        raise ConstructionError("thresholds must be nondecreasing in k")

    h = rate_h()
    terms = tuple(
        SeriesTerm(_inverse_cube_up(l), float(l), float(t), h) for l, t in enumerate(thresholds, start=1)
    )
    pad = 1.0 + 2.0**-40
    fn = RadialSeriesFunction(
        base=(1.0, h),
        terms=terms,
        d=d,
        lift="power",
        sup_remainder=pad / (2.0 * k_max**2),
        integral_remainder=pad * 2.0 / k_max,
        remainder_start=max(0.0, (k_max + 1) * (thresholds[-1] - 1.0)),
    )
    h_total = h.area_from(-math.inf)
    cert = ConstructionCertificate(
        theorem="6",
        a_seq=a_seq.to_dict(),
        thresholds=thresholds,
        integral_bound=h_total * (1.0 + math.pi**2 / 6.0),
        tail_bound=fn.sup_remainder,
    )
    return fn, cert


# ---------------------------------------------------------------------------
# single perturbation stage


def schedule(i: int) -> tuple[float, int]:
    """(a_i, l_i): a_i = 1 + 1/k and l_i = i - ((k+1)^3 + k^3 - 1)/2 for k^3 <= i < (k+1)^3."""
    if i < 1:
        raise ValueError("stage index starts at 1")
    k = int(round(i ** (1.0 / 3.0)))
    while k**3 > i:
        k -= 1
    while (k + 1) ** 3 <= i:
        k += 1
    return 1.0 + 1.0 / k, i - ((k + 1) ** 3 + k**3 - 1) // 2


@dataclass(frozen=True, eq=False)
class SingleStage:
    T: float
    N: int
    M: int
    b: np.ndarray  # b_{M+1}..b_N
    g: RadialSeriesFunction
    record: dict
    certificate: ConstructionCertificate

    @property
    def kernel(self) -> BumpKernel:
        return self.g.terms[0].kernel


def single_stage(
    seq: MultiplierSequence,
    a: float,
    eps: float,
    S: float,
    l: int,
    M: int,
    *,
    profile: DyadicProfile | None = None,
) -> SingleStage:
    """One perturbation stage on an already-transformed sequence (d = 1).

    Picks the smallest block K (base a) with all members beyond index M,
    K > 1 - l + log_a S and plateau measure below eps/2, then moves the
    members of A_K onto the geometric grid a**(K + j/|A_K|) so that every
    x in [a**(l-1), a**l] has some b_n x on the plateau of g.
    """
    a, eps, S = float(a), float(eps), float(S)
    if not (a > 1 and eps > 0 and S > 0):
        raise ConstructionError("single stage needs a > 1, eps > 0, S > 0")
    if M < 0 or M >= len(seq):
        raise PrefixExhausted(f"M={M} leaves no stored terms beyond it")
    values = seq.terms
    if profile is None:
        profile = dyadic_profile(MultiplierSequence(values, d=1), a)
    floor_key = int(profile.keys[:M].max()) if M > 0 else None
    k_min = 1 - l + math.log(S) / math.log(a)

    chosen = None
    for K in sorted(profile.blocks):
        if floor_key is not None and K <= floor_key:
            continue
        if not K > k_min:
            continue
        count = profile.blocks[K].count
        top = float(apow(a, K + l))
        bottom = float(apow(a, K + l - 1.0 / count))
        p0, p1 = bottom * (1.0 - PLATEAU_SLACK), top * (1.0 + PLATEAU_SLACK)
        if p0 > S and p1 - p0 < eps / 2.0:
            chosen = (K, count, p0, p1)
            break
    if chosen is None:
        raise PrefixExhausted(
            f"prefix exhausted: no admissible block for a={a:g}, eps={eps:g}, S={S:g}, l={l}, M={M}"
        )

    K, count, p0, p1 = chosen
    members = profile.blocks[K].indices  # increasing
    N = int(members.max())
    b = np.array(values[M:N], dtype=float)
    ranks = np.arange(count, dtype=float)
    b[members - M - 1] = apow(a, K + (count - 1 - ranks) / count)

    ramp = min(eps / 4.0, (p0 - S) / 2.0, 1.0)
    kernel = BumpKernel.trapezoid(p0, p1, ramp, ramp)
    T = p1 + ramp
    g = RadialSeriesFunction(terms=(SeriesTerm(1.0, 1.0, 0.0, kernel),), d=1, lift="power")
    record = {
        "a": a,
        "l": int(l),
        "eps": eps,
        "S": S,
        "T": T,
        "M": int(M),
        "N": N,
        "K": int(K),
        "count": int(count),
        "plateau": [p0, p1],
        "ramp": ramp,
        "g_integral": (p1 - p0) + ramp,
        "members": _to_ranges(members),
    }
    b.setflags(write=False)
    cert = ConstructionCertificate(
        theorem="lemma8",
        sequence=seq.to_dict(),
        stages=[record],
        integral_bound=eps,
        tail_bound=0.0,
    )
    return SingleStage(T=T, N=N, M=int(M), b=b, g=g, record=record, certificate=cert)


def stage_b_tilde(record: Mapping[str, Any], values: np.ndarray) -> np.ndarray:
    """Rebuild b_{M+1}..b_N of a stage from its record and the (transformed) terms."""
    M, N, K, count, a = record["M"], record["N"], record["K"], record["count"], record["a"]
    b = np.array(values[M:N], dtype=float)
    members = _from_ranges(record["members"])
    ranks = np.arange(count, dtype=float)
    b[members - M - 1] = apow(a, K + (count - 1 - ranks) / count)
    return b


# ---------------------------------------------------------------------------
# perturbed sequence with f(b_n x) not tending to 0


@dataclass(frozen=True, eq=False)
class PerturbedCounterexample:
    b: np.ndarray  # perturbed multipliers b_1..b_N on the original scale
    b_tilde: np.ndarray  # their d-th powers, as placed by the stages
    f_tilde: RadialSeriesFunction
    f: RadialSeriesFunction
    certificate: ConstructionCertificate


def staged_h() -> BumpKernel:
    return BumpKernel.rational(2.0)


def build_perturbed_counterexample(seq: MultiplierSequence, stages: int) -> PerturbedCounterexample:
    """Stage ``stages`` perturbation steps and assemble F = h + sum_i 2**i g_i.

    Works on c~_n = c_n**d with base d = 1; stage i uses the (a_i, l_i)
    schedule, eps_i = 4**-i, S_1 = 1, S_i = T_(i-1) + 1, M_i = N_(i-1).
    """
    d = seq.d
    if stages < 0:
        raise ConstructionError("stages must be >= 0")
    h = staged_h()
    if stages == 0:
        f_tilde = RadialSeriesFunction(base=(1.0, h), d=d, lift="power")
        cert = ConstructionCertificate(
            theorem="4", sequence=seq.to_dict(), integral_bound=math.pi / 2.0, tail_bound=0.0
        )
        empty = np.empty(0)
        return PerturbedCounterexample(empty, empty, f_tilde, radial_lift(f_tilde, d), cert)

    if not tends_to_infinity(seq.terms):
        fn, cert = _fallback(seq, "4")
        return PerturbedCounterexample(seq.terms.copy(), np.power(seq.terms, d), fn, fn, cert)
    report = classify(seq, 2.0)
    if report.bounded:
        raise ConstructionError(
            f"precondition failed: block ratios look bounded (verdict {report.verdict})"
        )

    tilde = MultiplierSequence(np.power(seq.terms, d), d=1)
    profiles: dict[float, DyadicProfile] = {}
    b_tilde = np.empty(0)
    records, terms = [], []
    S, M = 1.0, 0
    for i in range(1, stages + 1):
        a_i, l_i = schedule(i)
        if a_i not in profiles:
            profiles[a_i] = dyadic_profile(tilde, a_i)
        try:
            st = single_stage(tilde, a_i, 4.0**-i, S, l_i, M, profile=profiles[a_i])
        except PrefixExhausted as exc:
            raise PrefixExhausted(f"stage {i}: {exc}", stage=i) from None
        rec = dict(st.record, stage=i, weight=2.0**i)
        records.append(rec)
        terms.append(SeriesTerm(2.0**i, 1.0, 0.0, st.kernel))
        b_tilde = np.concatenate((b_tilde, st.b))
        S, M = st.T + 1.0, st.N

    f_tilde = RadialSeriesFunction(
        base=(1.0, h),
        terms=tuple(terms),
        d=d,
        lift="power",
        # later stages carry weights 2**i: no uniform bound, but they vanish below S_(n+1)
        sup_remainder=math.inf,
        integral_remainder=2.0**-stages,
        remainder_start=S,
    )
    b = np.power(b_tilde, 1.0 / d) if d > 1 else b_tilde.copy()
    cert = ConstructionCertificate(
        theorem="4",
        sequence=seq.to_dict(),
        stages=records,
        integral_bound=math.pi / 2.0 + math.fsum(2.0**-i for i in range(1, stages + 1)),
        tail_bound=None,
    )
    b.setflags(write=False)
    b_tilde.setflags(write=False)
    return PerturbedCounterexample(b, b_tilde, f_tilde, radial_lift(f_tilde, d), cert)
