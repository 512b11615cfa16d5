"""Numerical certification of constructed functions.

Partial sums along multiplier sequences, half-line integrals with error
bounds, the radial integration identity by Monte Carlo, and the witness
probes for the limsup constructions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, NamedTuple

import numpy as np

from .construct import ConstructionCertificate, RateSequence, schedule, stage_b_tilde
from .kernels import BumpKernel, RadialSeriesFunction, SeriesTerm, radial_lift
from .quadrature import DEFAULT_TOL, adaptive_simpson, rational_moment
from .sequence_core import MultiplierSequence, apow

WITNESS_SLACK = 1e-9
GRID_POINTS = 1000


def sphere_area(d: int) -> float:
    """Surface measure of the unit sphere in R^d, 2 pi^(d/2) / Gamma(d/2)."""
    if isinstance(d, bool) or int(d) != d or d < 1:
        raise ValueError(f"dimension must be an integer >= 1, got {d!r}")
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass
class ProbeReport:
    kind: str
    points: list[float]
    records: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict[str, Any]:
        return dict(asdict(self), ok=self.ok)


# ---------------------------------------------------------------------------
# partial sums


def _points_along(seq: MultiplierSequence, x, n_terms: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unique multipliers among c_1..c_N, their points c x, and the inverse map."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    uniq, inverse = np.unique(seq.terms[:n_terms], return_inverse=True)
    return uniq, uniq[:, None] * x[None, :], inverse


def trajectory(f: Callable, seq: MultiplierSequence, x, n_terms: int) -> np.ndarray:
    """|f(c_n x)| for n = 1..N; f takes an array of points of shape (K, d)."""
    if n_terms > len(seq):
        raise ValueError(f"N={n_terms} exceeds the {len(seq)} stored terms")
    if n_terms <= 0:
        return np.empty(0)
    uniq, pts, inverse = _points_along(seq, x, n_terms)
    values = np.asarray(f(pts), dtype=float).reshape(uniq.size)
    return np.abs(values)[inverse]


def partial_sum(f: Callable, seq: MultiplierSequence, x, n_terms: int) -> float:
    """Correctly rounded sum_{n <= N} |f(c_n x)|; nondecreasing in N."""
    return math.fsum(trajectory(f, seq, x, n_terms).tolist())


def write_trajectory_csv(path, f: Callable, seq: MultiplierSequence, x, n_terms: int) -> None:
    values = trajectory(f, seq, x, n_terms)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "c_n", "f(c_n x)", "partial_sum"])
        running = []
        for n, (c, v) in enumerate(zip(seq.terms[:n_terms].tolist(), values.tolist()), start=1):
            running.append(v)
            writer.writerow([n, repr(c), repr(v), repr(math.fsum(running))])


# ---------------------------------------------------------------------------
# integrals


class IntegralEstimate(NamedTuple):
    value: float
    error: float


def term_integral(term: SeriesTerm, power: float = 0.0, tol: float = DEFAULT_TOL) -> IntegralEstimate:
    """``int_0^inf y**power * term(y) dy``.

    Trapezoid terms with power 0 are exact; rational terms need shift 0 and go
    through :func:`rational_moment`; anything else is Simpson on the support.
    """
    k = term.kernel
    if k.kind == "trapezoid":
        if power == 0:
            return IntegralEstimate(term.weight * term.scale * k.area_from(-term.shift), 0.0)
        lo, hi = term.support
        lo = max(lo, 0.0)
        knots = sorted({lo, hi, *(max(lo, min(hi, (p + term.shift) * term.scale)) for p in (k.p0, k.p1))})
        parts = [
            adaptive_simpson(lambda y: y**power * float(term(y)), a, b, tol)
            for a, b in zip(knots[:-1], knots[1:])
        ]
        return IntegralEstimate(math.fsum(p[0] for p in parts), math.fsum(p[1] for p in parts))
    if term.shift != 0:
        raise ValueError("rational terms are only integrated without shift")
    value, err = rational_moment(k.q, term.scale, power, tol)
    return IntegralEstimate(term.weight * value, term.weight * err)


def integral_1d(fn: RadialSeriesFunction, truncation: int | None = None, tol: float = DEFAULT_TOL) -> IntegralEstimate:
    """Half-line integral of the profile with a total error bound.

    The bound adds quadrature error, the integrals of stored terms beyond the
    truncation, and the certified integral of the unmaterialized remainder.
    """
    m = len(fn.terms) if truncation is None else min(truncation, len(fn.terms))
    values, errors = [], []
    if fn.base is not None:
        w0, k0 = fn.base
        est = term_integral(SeriesTerm(w0, 1.0, 0.0, k0), tol=tol)
        values.append(est.value)
        errors.append(est.error)
    for i, t in enumerate(fn.terms):
        est = term_integral(t, tol=tol)
        if i < m:
            values.append(est.value)
            errors.append(est.error)
        else:
            errors.append(est.value + est.error)
    errors.append(fn.integral_remainder)
    return IntegralEstimate(math.fsum(values), math.fsum(errors))


def radial_integral(fn: RadialSeriesFunction, tol: float = DEFAULT_TOL) -> IntegralEstimate:
    """Integral over R^d of a norm-lifted function, S_d int rho^(d-1) F(rho) d rho."""
    if fn.lift != "norm":
        s_d = sphere_area(fn.d)
        est = integral_1d(fn, tol=tol)
        return IntegralEstimate(s_d / fn.d * est.value, s_d / fn.d * est.error)
    s_d = sphere_area(fn.d)
    values, errors = [], []
    terms = list(fn.terms)
    if fn.base is not None:
        terms.insert(0, SeriesTerm(fn.base[0], 1.0, 0.0, fn.base[1]))
    for t in terms:
        est = term_integral(t, power=fn.d - 1, tol=tol)
        values.append(est.value)
        errors.append(est.error)
    return IntegralEstimate(s_d * math.fsum(values), s_d * math.fsum(errors))


@dataclass
class IdentityReport:
    d: int
    samples: int
    seed: int
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_error: float
    combined_stderr: float
    agree: bool

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _importance_sample(rng: np.random.Generator, d: int, samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Radial density proportional to (1 + |x|)^-(d+2) on R^d.

    With u = r / (1 + r) the radius law becomes Beta(d, 2), and the density
    normalizes to d (d+1) / S_d * (1 + r)^-(d+2).
    """
    u = rng.beta(d, 2.0, size=samples)
    u = np.minimum(u, 1.0 - 1e-16)
    r = u / (1.0 - u)
    dirs = rng.standard_normal((samples, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    density = d * (d + 1) / sphere_area(d) * (1.0 + r) ** (-(d + 2.0))
    return r[:, None] * dirs, density


def radial_integral_identity_check(
    fn: RadialSeriesFunction, d: int, samples: int = 10**6, seed: int = 0, tol: float = DEFAULT_TOL
) -> IdentityReport:
    """Compare int_{R^d} F(|x|^d) dx (Monte Carlo) with (S_d / d) int_0^inf F."""
    if d not in (1, 2, 3):
        raise ValueError("the desk-scale identity check supports d in {1, 2, 3}")
    rng = np.random.default_rng(seed)
    lifted = radial_lift(fn, d)
    chunk = 1 << 18
    sums, sq = [], []
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        pts, density = _importance_sample(rng, d, n)
        w = np.asarray(lifted(pts), dtype=float) / density
        sums.append(math.fsum(w.tolist()))
        sq.append(math.fsum((w * w).tolist()))
        done += n
    mean = math.fsum(sums) / samples
    var = max(math.fsum(sq) / samples - mean * mean, 0.0) * samples / max(samples - 1, 1)
    lhs_se = math.sqrt(var / samples)
    s_d = sphere_area(d)
    est = integral_1d(fn, tol=tol)
    rhs, rhs_err = s_d / d * est.value, s_d / d * est.error
    combined = math.hypot(lhs_se, rhs_err)
    return IdentityReport(
        d=d,
        samples=samples,
        seed=seed,
        lhs=mean,
        lhs_stderr=lhs_se,
        rhs=rhs,
        rhs_error=rhs_err,
        combined_stderr=combined,
        agree=abs(mean - rhs) <= 3.0 * combined,
    )


# ---------------------------------------------------------------------------
# witness probes


def rate_witness(term: SeriesTerm, x: float) -> int:
    """Smallest n with (n x) / k - t_k >= 0, in the same float arithmetic as the term."""
    k, t = term.scale, term.shift
    n = max(1, math.ceil(k * t / x))
    while (n * x) / k - t < 0:
        n += 1
    while n > 1 and ((n - 1) * x) / k - t >= 0:
        n -= 1
    return n


def limsup_probe_rate(fn: RadialSeriesFunction, a_seq: RateSequence, x: float, k_max: int) -> ProbeReport:
    """Check a_{n_k} F(n_k x) >= k for every k in (x, k_max].

    Term k of ``fn`` is h(y/k - t_k) / k**3, so t_k is read off its shift.
    """
    report = ProbeReport(kind="rate", points=[float(x)], tolerances={"witness": "exact"})
    if k_max > len(fn.terms):
        raise ValueError(f"k_max={k_max} exceeds the {len(fn.terms)} materialized terms")
    if x < 0:
        raise ValueError("x must be >= 0")
    if x == 0:
        f0 = float(fn.profile(0.0))
        report.records.append({"x": 0.0, "f_at_0": f0})
        report.notes.append("x = 0: F(0) >= h(0) >= 1, so a_n F(0) grows with a_n")
        if f0 < 1.0:
            report.failures.append({"x": 0.0, "reason": "F(0) < 1"})
        return report
    for k in range(1, k_max + 1):
        if not k > x:
            continue
        term = fn.terms[k - 1]
        t = term.shift
        n = rate_witness(term, x)
        y = n * x
        u = y / term.scale - t
        a_n = a_seq(n)
        value = float(fn.profile(y))
        product = a_n * value
        rec = {"k": k, "n_k": n, "t_k": t, "offset": u, "a_n": a_n, "f": value, "product": product}
        report.records.append(rec)
        if not (0.0 <= u <= 1.0 and product >= k):
            report.failures.append(dict(rec, reason="witness inequality fails"))
    if not report.records:
        report.notes.append("no k in (x, k_max]; increase k_max")
    return report


def _max_unimodal(sorted_vals: np.ndarray, kernel: BumpKernel, x: float) -> tuple[float, float]:
    """max over b of kernel(b x) for a sorted array b; returns (value, argmax b).

    The trapezoid is unimodal in b for fixed x > 0, so only values adjacent
    to the plateau edges can win.
    """
    lo_idx = int(np.searchsorted(sorted_vals, kernel.p0 / x, side="left"))
    hi_idx = int(np.searchsorted(sorted_vals, kernel.p1 / x, side="right"))
    cand = {j for base in (lo_idx, hi_idx) for j in range(base - 2, base + 2)}
    if hi_idx > lo_idx:
        cand.update({lo_idx + (hi_idx - lo_idx) // 2})
    cand = sorted(j for j in cand if 0 <= j < sorted_vals.size)
    if not cand:
        return 0.0, math.nan
    bs = sorted_vals[cand]
    vals = kernel(bs * x)
    best = int(np.argmax(vals))
    return float(vals[best]), float(bs[best])


def max_plateau_hit(b: np.ndarray, kernel: BumpKernel, xs: np.ndarray) -> np.ndarray:
    """max_n kernel(b_n x) for each x."""
    sorted_b = np.unique(b)
    return np.array([_max_unimodal(sorted_b, kernel, float(x))[0] for x in xs])


def stage_grid(a: float, l: int, points: int = GRID_POINTS) -> np.ndarray:
    """Log-spaced points on [a^(l-1), a^l] plus both endpoints."""
    lo, hi = float(apow(a, l - 1)), float(apow(a, l))
    grid = np.exp(np.linspace(math.log(lo), math.log(hi), points))
    return np.unique(np.concatenate(([lo, hi], grid[(grid > lo) & (grid < hi)])))


def blowup_probe_staged(
    fn: RadialSeriesFunction, b_tilde: np.ndarray, certificate: ConstructionCertificate, x: float
) -> ProbeReport:
    """For each stage whose interval holds x, check max_n 2^i g_i(b~_n x) >= 2^i.

    ``b_tilde`` is the perturbed sequence on the half-line scale (the d-th
    powers placed by the stages).
    """
    report = ProbeReport(kind="staged", points=[float(x)], tolerances={"plateau": "exact"})
    if x == 0:
        f0 = float(fn.profile(0.0))
        report.records.append({"x": 0.0, "f_at_0": f0})
        report.notes.append("x = 0: F(b~_n * 0) = F(0) >= h(0) > 0 for every n")
        if not f0 > 0:
            report.failures.append({"x": 0.0, "reason": "F(0) is not positive"})
        return report
    b_tilde = np.asarray(b_tilde, dtype=float)
    for idx, rec in enumerate(certificate.stages):
        a, l = rec["a"], rec["l"]
        if not float(apow(a, l - 1)) <= x <= float(apow(a, l)):
            continue
        term = fn.terms[idx]
        window = np.unique(b_tilde[rec["M"] : rec["N"]])
        g_max, b_best = _max_unimodal(window, term.kernel, x)
        attained = term.weight * g_max
        full = float(fn.profile(b_best * x)) if math.isfinite(b_best) else 0.0
        entry = {"stage": rec.get("stage", idx + 1), "weight": term.weight, "attained": attained, "f_value": full}
        report.records.append(entry)
        if not (attained >= term.weight and full >= term.weight):
            report.failures.append(dict(entry, reason="plateau-hit fails"))
    if not report.records:
        report.notes.append("insufficient stages: x lies in no materialized stage interval")
    return report


class DivergenceBound(NamedTuple):
    partial_sum: float
    lower_bound: float
    holds: bool


def divergence_lower_bound(
    fn: RadialSeriesFunction,
    seq: MultiplierSequence,
    certificate: ConstructionCertificate,
    x,
    n_terms: int,
) -> DivergenceBound:
    """Partial sum against g(2x) * sum r_k |A_k| l_k over blocks inside 1..N."""
    if n_terms <= 0:
        return DivergenceBound(0.0, 0.0, True)
    ps = partial_sum(fn, seq, x, n_terms)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g2x = 1.0 / (1.0 + float(np.linalg.norm(2.0 * x)) ** (seq.d + 1))
    mass = math.fsum(
        s["r"] * s["count"] * s["block_sum"] for s in certificate.selections if s["last_index"] <= n_terms
    )
    lb = g2x * mass
    return DivergenceBound(ps, lb, ps >= lb - WITNESS_SLACK)


def schedule_cover(k: int, points: int = 10**4) -> tuple[bool, int]:
    """Check that stages k^3 .. (k+1)^3 - 1 cover [2^-k, 2^k] on a log grid.

    Returns (all covered, number of uncovered grid points).
    """
    intervals = [schedule(i) for i in range(k**3, (k + 1) ** 3)]
    los = np.array([float(apow(a, l - 1)) for a, l in intervals])
    his = np.array([float(apow(a, l)) for a, l in intervals])
    grid = np.exp(np.linspace(-k * math.log(2.0), k * math.log(2.0), points))
    grid[0], grid[-1] = 2.0**-k, 2.0**k
    covered = np.zeros(points, dtype=bool)
    for lo, hi in zip(los, his):
        covered |= (grid >= lo) & (grid <= hi)
    missed = int((~covered).sum())
    return missed == 0, missed


def rebuild_b_tilde(certificate: ConstructionCertificate, seq: MultiplierSequence) -> np.ndarray:
    """Reassemble b~ for all staged indices from the stage records."""
    values = np.power(seq.terms, seq.d)
    parts = [stage_b_tilde(rec, values) for rec in certificate.stages]
    return np.concatenate(parts) if parts else np.empty(0)


__all__ = [
    "ProbeReport",
    "IntegralEstimate",
    "IdentityReport",
    "DivergenceBound",
    "sphere_area",
    "trajectory",
    "partial_sum",
    "write_trajectory_csv",
    "term_integral",
    "integral_1d",
    "radial_integral",
    "radial_integral_identity_check",
    "limsup_probe_rate",
    "blowup_probe_staged",
    "divergence_lower_bound",
    "max_plateau_hit",
    "stage_grid",
    "schedule_cover",
    "rebuild_b_tilde",
]
