"""Re-check certificates and sequence invariants without re-running builders."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Mapping

import numpy as np

from .construct import ConstructionCertificate, RateSequence, stage_b_tilde
from .evaluate import (
    integral_1d,
    max_plateau_hit,
    radial_integral,
    schedule_cover,
    sphere_area,
    stage_grid,
)
from .kernels import BumpKernel, RadialSeriesFunction
from .quadrature import rational_full_moment
from .sequence_core import MultiplierSequence, apow, classify, dyadic_profile

BASEL = math.pi**2 / 6.0
INTEGRAL_REL_TOL = 1e-6
BOUND_SLACK = 1e-6


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: Any = None
    bound: Any = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        for key in ("measured", "bound"):
            if isinstance(out[key], float) and not math.isfinite(out[key]):
                out[key] = None
        return out


def check_sequence(seq: MultiplierSequence, a: float = 2.0) -> list[CheckResult]:
    """Partition, block-sum lower bound and the three quantitative implications."""
    profile = dyadic_profile(seq, a)
    keys = profile.keys
    edges_ok = bool(np.all((apow(a, keys) <= seq.terms) & (seq.terms < apow(a, keys + 1))))
    total = sum(b.count for b in profile.blocks.values())
    seen = np.zeros(len(seq), dtype=np.int64)
    for b in profile.blocks.values():
        seen[b.indices - 1] += 1
    out = [
        CheckResult("partition", edges_ok and total == len(seq) and bool(np.all(seen == 1)), total, len(seq)),
    ]
    worst = min(
        (b.block_sum - b.count / float(apow(a, (b.k + 1) * seq.d)) for b in profile.blocks.values()),
    )
    out.append(CheckResult("block_sum_lower_bound", worst >= 0, worst, 0.0))
    report = classify(seq, a)
    for name, c in report.cross_bounds.items():
        out.append(CheckResult(name, bool(c["holds"]), c["measured"], c["bound"]))
    return out


def check_divergence(fn: RadialSeriesFunction, cert: ConstructionCertificate, seq: MultiplierSequence) -> list[CheckResult]:
    out = []
    sel = cert.selections
    ks = [s["k"] for s in sel]
    selection_ok = (
        len(set(ks)) == len(ks)
        and all(s["block_sum"] >= s["i"] for s in sel)
        and [s["i"] for s in sel] == list(range(1, len(sel) + 1))
        and all(s["r"] == 1.0 / (s["i"] * s["i"] * s["count"]) for s in sel)
    )
    out.append(CheckResult("selection_constraints", selection_ok, len(sel), None))
    profile = dyadic_profile(seq, 2.0)
    blocks_ok = all(
        s["k"] in profile.blocks
        and profile.blocks[s["k"]].count == s["count"]
        and profile.blocks[s["k"]].block_sum == s["block_sum"]
        for s in sel
    )
    out.append(CheckResult("selections_match_profile", blocks_ok))
    out.append(CheckResult("r_sum_bound", cert.r_sum <= BASEL + 1e-12, cert.r_sum, BASEL))
    out.append(CheckResult("weight_sum_bound", cert.weight_sum <= BASEL + 1e-12, cert.weight_sum, BASEL))
    spread = max(s["max_term"] / s["min_term"] for s in sel)
    out.append(CheckResult("within_block_ratio_below_2", spread < 2.0, spread, 2.0))
    out.append(
        CheckResult(
            "divergence_witness_at_least_harmonic",
            cert.divergence_witness >= cert.harmonic_witness * (1 - 1e-12),
            cert.divergence_witness,
            cert.harmonic_witness,
        )
    )
    d = fn.d
    g_integral = sphere_area(d) * rational_full_moment(d + 1, d - 1)
    expected = g_integral * cert.r_sum
    quad = radial_integral(fn)
    rel = abs(quad.value - expected) / expected
    out.append(CheckResult("termwise_integral_identity", rel <= INTEGRAL_REL_TOL, rel, INTEGRAL_REL_TOL))
    return out


def check_rate(fn: RadialSeriesFunction, cert: ConstructionCertificate, a_seq: RateSequence) -> list[CheckResult]:
    out = []
    bad = []
    for k, t in enumerate(cert.thresholds, start=1):
        level = float(k) ** 4
        if a_seq(t) < level or (t > 1 and a_seq.tail == "nondecreasing" and a_seq(t - 1) >= level):
            bad.append(k)
    out.append(CheckResult("thresholds_least", not bad, bad, None))
    shifts_ok = [t.shift for t in fn.terms] == [float(t) for t in cert.thresholds]
    out.append(CheckResult("terms_match_thresholds", shifts_ok))
    est = integral_1d(fn)
    total = est.value + est.error
    out.append(
        CheckResult("integral_bound", total <= cert.integral_bound + BOUND_SLACK, total, cert.integral_bound)
    )
    hi = max(t.support[1] for t in fn.terms) if fn.terms else 2.0
    ys = np.concatenate((np.linspace(0.0, 3.0, 3001), np.geomspace(1.0, hi, 20001)))
    h = fn.base[1]
    out.append(CheckResult("dominates_h", bool(np.all(fn.profile(ys) >= h(ys))), None, None))
    out.append(_lipschitz_check(fn, 0.0, 3.0))
    return out


def _lipschitz_check(fn: RadialSeriesFunction, lo: float, hi: float, points: int = 20001) -> CheckResult:
    ys = np.linspace(lo, hi, points)
    vals = fn.profile(ys)
    lip = 0.0
    if fn.base is not None:
        lip += fn.base[0] * fn.base[1].lipschitz
    lip += sum(t.weight * t.kernel.lipschitz / t.scale for t in fn.terms)
    slope = float(np.max(np.abs(np.diff(vals)) / np.diff(ys)))
    return CheckResult("lipschitz_on_compact", slope <= lip * (1 + 1e-9), slope, lip)


def check_single_stage_record(
    rec: Mapping[str, Any], values: np.ndarray, kernel: BumpKernel, grid_points: int = 1000
) -> list[CheckResult]:
    """The four stage postconditions: ratio sandwich, small integral, support, plateau hit."""
    a, M, N, S, T, eps = rec["a"], rec["M"], rec["N"], rec["S"], rec["T"], rec["eps"]
    b = stage_b_tilde(rec, values)
    ratio = b / values[M:N]
    sandwich = bool(np.all((ratio >= 1.0 / a) & (ratio <= a)))
    lo, hi = kernel.support
    area = kernel.area_from(-math.inf)
    outside = np.concatenate((np.linspace(0.0, S, 101), np.linspace(T, T + 10.0, 101)))
    support_ok = lo >= S and hi <= T and T > S and bool(np.all(kernel(outside) == 0.0))
    grid = stage_grid(a, rec["l"], grid_points)
    hits = max_plateau_hit(b, kernel, grid)
    misses = int(np.sum(hits < 1.0))
    return [
        CheckResult("ratio_sandwich", sandwich, [float(ratio.min()), float(ratio.max())], [1.0 / a, a]),
        CheckResult("g_integral_below_eps", area < eps, area, eps),
        CheckResult("g_support_in_S_T", support_ok, [lo, hi], [S, T]),
        CheckResult("plateau_hit", misses == 0, misses, 0, f"{grid.size} log-spaced points"),
    ]


def check_staged(fn: RadialSeriesFunction, cert: ConstructionCertificate, seq: MultiplierSequence) -> list[CheckResult]:
    out = []
    values = np.power(seq.terms, seq.d)
    stages = cert.stages
    for idx, rec in enumerate(stages):
        kernel = fn.terms[idx].kernel
        for c in check_single_stage_record(rec, values, kernel):
            c.name = f"stage{rec['stage']}_{c.name}"
            out.append(c)
        b = stage_b_tilde(rec, values)
        dev = float(np.max(np.abs(b / values[rec["M"] : rec["N"]] - 1.0)))
        out.append(CheckResult(f"stage{rec['stage']}_ratio_deviation", dev <= rec["a"] - 1.0, dev, rec["a"] - 1.0))
        if idx:
            prev = stages[idx - 1]
            ok = rec["S"] == prev["T"] + 1.0 and rec["M"] == prev["N"]
            prev_hi = fn.terms[idx - 1].kernel.support[1]
            ok = ok and prev_hi < kernel.support[0]
            out.append(CheckResult(f"stage{rec['stage']}_disjoint_from_previous", ok, kernel.support[0], prev_hi))
    est = integral_1d(fn)
    materialized = est.value + est.error - fn.integral_remainder
    bound = math.pi / 2.0 + math.fsum(2.0**-r["stage"] for r in stages)
    out.append(CheckResult("integral_bound", materialized < bound + BOUND_SLACK, materialized, bound))
    for k in (1, 2, 3):
        ok, missed = schedule_cover(k)
        out.append(CheckResult(f"schedule_cover_k{k}", ok, missed, 0))
    return out


def verify_document(doc: Mapping[str, Any]) -> list[CheckResult]:
    """Dispatch on a JSON document: a sequence, or a function with certificate."""
    if "certificate" not in doc:
        seq = MultiplierSequence.from_dict(doc)
        return check_sequence(seq, float(doc.get("a", 2.0)))
    cert = ConstructionCertificate.from_dict(doc["certificate"])
    fn = RadialSeriesFunction.from_dict(doc)
    if cert.branch != "main":
        f0 = float(fn.profile(0.0))
        return [CheckResult("fallback_positive_at_origin", f0 > 0, f0, 0.0)]
    if cert.theorem == "3":
        return check_divergence(fn, cert, MultiplierSequence.from_dict(cert.sequence))
    if cert.theorem == "6":
        return check_rate(fn, cert, RateSequence.from_dict(cert.a_seq))
    if cert.theorem == "lemma8":
        seq = MultiplierSequence.from_dict(cert.sequence)
        return check_single_stage_record(cert.stages[0], seq.terms, fn.terms[0].kernel)
    if cert.theorem == "4":
        if not cert.stages:
            return [CheckResult("empty_staging", fn.base is not None and not fn.terms)]
        return check_staged(fn, cert, MultiplierSequence.from_dict(cert.sequence))
    raise ValueError(f"unknown certificate theorem tag {cert.theorem!r}")
