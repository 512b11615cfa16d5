import math

import numpy as np
import pytest

from multiplierlab.construct import (
    ConstructionCertificate,
    ConstructionError,
    PrefixExhausted,
    RateSequence,
    build_divergence_function,
    build_perturbed_counterexample,
    build_rate_counterexample,
    single_stage,
    schedule,
    stage_b_tilde,
)
from multiplierlab.sequence_core import MultiplierSequence, dyadic_profile
from multiplierlab.verify import check_single_stage_record

BASEL = math.pi**2 / 6


@pytest.fixture(scope="module")
def packed4():
    return MultiplierSequence.from_family("packed", (4**10 - 1) // 3, value_base=2.0, copies_base=4.0)


@pytest.fixture(scope="module")
def packed6():
    return MultiplierSequence.from_family("packed", (6**8 - 1) // 5, value_base=2.0, copies_base=6.0)


# --- rate sequences --------------------------------------------------------------


@pytest.mark.parametrize(
    "formula, n, value",
    [("n", 7, 7.0), ("n^2", 3, 9.0), ("2*n + 1", 4, 9.0), ("log(n)", 1, 0.0), ("sqrt(n)", 16, 4.0)],
)
def test_rate_formula(formula, n, value):
    assert RateSequence.from_formula(formula)(n) == value


@pytest.mark.parametrize("formula", ["__import__('os')", "n.real", "open(n)", "[n]"])
def test_rate_formula_rejects_code(formula):
    with pytest.raises((ValueError, SyntaxError)):
        RateSequence.from_formula(formula)


def test_thresholds_identity_are_fourth_powers():
    a = RateSequence.from_formula("n")
    assert [a.threshold(float(k) ** 4) for k in range(1, 21)] == [k**4 for k in range(1, 21)]


def test_thresholds_from_values():
    a = RateSequence(values=(0.5, 1.0, 3.0, 20.0), tail="nondecreasing")
    assert a.threshold(1.0) == 2 and a.threshold(16.0) == 4
    with pytest.raises(ConstructionError):
        a.threshold(100.0)
    with pytest.raises(ConstructionError):
        RateSequence(values=(1.0, 2.0)).threshold(1.0)


def test_threshold_requires_growth():
    with pytest.raises(ConstructionError):
        RateSequence.from_formula("1").threshold(2.0)


# --- divergence builder ----------------------------------------------------------


def test_divergence_builder_on_packed(packed4):
    fn, cert = build_divergence_function(packed4)
    assert [s["k"] for s in cert.selections] == list(range(10))
    assert [s["i"] for s in cert.selections] == list(range(1, 11))
    for s in cert.selections:
        assert s["block_sum"] >= s["i"]
        assert s["r"] == 1.0 / (s["i"] ** 2 * s["count"])
        assert s["count"] == 4 ** s["k"]
    assert cert.weight_sum <= BASEL + 1e-12
    assert cert.r_sum == pytest.approx(sum(1 / i**2 for i in range(1, 11)), rel=1e-14)
    # weight of block k is r_k |A_k| / 2**k = 1 / (i**2 2**k) with i = k + 1
    assert cert.weight_sum == pytest.approx(sum(1 / ((k + 1) ** 2 * 2**k) for k in range(10)), rel=1e-14)
    assert len(fn.terms) == 10  # members sharing a value are merged
    assert cert.divergence_witness >= cert.harmonic_witness


def test_divergence_builder_selects_greedily():
    # block sums l_k for k = 0..: 1, 0.5, 3, 3.5, 1
    values = [1.0] + [2.0] + [4.0] * 12 + [8.0] * 28 + [16.0] * 16
    seq = MultiplierSequence(np.array(values), d=1)
    prof = dyadic_profile(seq, 2.0)
    assert [prof.blocks[k].block_sum for k in range(5)] == [1.0, 0.5, 3.0, 3.5, 1.0]
    _, cert = build_divergence_function(seq)
    assert [(s["i"], s["k"]) for s in cert.selections] == [(1, 0), (2, 2), (3, 3)]


def test_divergence_builder_precondition():
    seq = MultiplierSequence.from_family("power", 1000, p=1.0)
    with pytest.raises(ConstructionError, match="precondition"):
        build_divergence_function(seq)


def test_divergence_builder_short_prefix(packed4):
    with pytest.raises(ConstructionError, match="prefix too short"):
        build_divergence_function(packed4, prefix_N=5)


def test_divergence_builder_fallback_on_constant():
    seq = MultiplierSequence(np.full(100, 3.0))
    fn, cert = build_divergence_function(seq)
    assert cert.branch == "subsequence-limit branch"
    assert fn.base is not None and not fn.terms


# --- rate builder -------------------------------------------------------------------


def test_rate_builder_identity():
    fn, cert = build_rate_counterexample(RateSequence.from_formula("n"), k_max=20)
    assert cert.thresholds == [k**4 for k in range(1, 21)]
    for l, term in enumerate(fn.terms, start=1):
        assert term.weight * l**3 >= 1.0
        assert term.weight - 1.0 / l**3 <= math.ulp(1.0 / l**3)
        assert (term.scale, term.shift) == (float(l), float(l**4))
    assert cert.integral_bound == pytest.approx(2.0 * (1 + BASEL), rel=1e-15)
    assert fn.sup_remainder >= 1.0 / (2 * 20**2)
    assert fn.integral_remainder >= 2.0 / 20


def test_rate_builder_custom_thresholds():
    fn, cert = build_rate_counterexample(RateSequence.from_formula("n"), k_max=3, thresholds=[1, 5, 5])
    assert [t.shift for t in fn.terms] == [1.0, 5.0, 5.0]
    with pytest.raises(ConstructionError):
        build_rate_counterexample(RateSequence.from_formula("n"), k_max=3, thresholds=[3, 2, 5])
    with pytest.raises(ConstructionError):
        build_rate_counterexample(RateSequence.from_formula("n"), k_max=0)


# --- schedule and single stage ----------------------------------------------------------


@pytest.mark.parametrize("i, expected", [(1, (2.0, -3)), (7, (2.0, 3)), (8, (1.5, -9)), (26, (1.5, 9)), (27, (4 / 3, -18))])
def test_schedule_values(i, expected):
    assert schedule(i) == expected


def test_schedule_rejects_zero():
    with pytest.raises(ValueError):
        schedule(0)


def test_single_stage_geometric_assignment(packed6):
    stage = single_stage(packed6, 2.0, 0.25, 1.0, 0, 0)
    rec = stage.record
    K, count = rec["K"], rec["count"]
    members = np.flatnonzero((packed6.terms >= 2.0**K) & (packed6.terms < 2.0 ** (K + 1))) + 1
    placed = stage.b[members - 1]
    # largest value to the smallest index, then down the grid a**(K + j/|A|)
    expected = 2.0 ** (K + (count - 1 - np.arange(count)) / count)
    np.testing.assert_allclose(placed, expected, rtol=1e-15)
    assert np.all((placed >= 2.0**K) & (placed < 2.0 ** (K + 1)))
    np.testing.assert_array_equal(stage_b_tilde(rec, packed6.terms), stage.b)
    assert stage.N == members.max() and stage.T > rec["S"]
    assert all(c.passed for c in check_single_stage_record(rec, packed6.terms, stage.kernel))


def test_single_stage_respects_M_and_S(packed6):
    stage = single_stage(packed6, 1.5, 0.5, 3.0, -1, 500)
    rec = stage.record
    members = np.concatenate([np.arange(lo, hi + 1) for lo, hi in rec["members"]])
    assert members.min() > 500
    assert rec["plateau"][0] > 3.0
    assert rec["plateau"][1] - rec["plateau"][0] < 0.25
    assert rec["g_integral"] < 0.5


def test_single_stage_exhausts(packed6):
    with pytest.raises(PrefixExhausted):
        single_stage(packed6, 2.0, 1e-9, 1.0, 0, 0)
    with pytest.raises(PrefixExhausted):
        single_stage(packed6, 2.0, 0.25, 1.0, 0, len(packed6))
    with pytest.raises(ConstructionError):
        single_stage(packed6, 1.0, 0.25, 1.0, 0, 0)


# --- staged builder --------------------------------------------------------------------


@pytest.fixture(scope="module")
def staged():
    seq = MultiplierSequence.from_family("packed", (5**10 - 1) // 4, value_base=2.0, copies_base=5.0)
    return seq, build_perturbed_counterexample(seq, 5)


def test_staged_records(staged):
    seq, built = staged
    stages = built.certificate.stages
    assert [r["stage"] for r in stages] == [1, 2, 3, 4, 5]
    assert [r["eps"] for r in stages] == [4.0**-i for i in range(1, 6)]
    assert [(r["a"], r["l"]) for r in stages] == [schedule(i) for i in range(1, 6)]
    assert stages[0]["S"] == 1.0 and stages[0]["M"] == 0
    for prev, cur in zip(stages, stages[1:]):
        assert cur["S"] == prev["T"] + 1.0 and cur["M"] == prev["N"]
    assert built.b_tilde.size == stages[-1]["N"]
    assert [t.weight for t in built.f_tilde.terms] == [2.0, 4.0, 8.0, 16.0, 32.0]
    assert built.f_tilde.sup_remainder == math.inf
    assert built.certificate.tail_bound is None


def test_staged_certificate_roundtrip(staged):
    _, built = staged
    cert = built.certificate
    back = ConstructionCertificate.from_dict(cert.to_dict())
    assert back == cert


def test_staged_short_prefix():
    seq = MultiplierSequence.from_family("packed", (5**7 - 1) // 4, value_base=2.0, copies_base=5.0)
    with pytest.raises(PrefixExhausted) as info:
        build_perturbed_counterexample(seq, 5)
    assert info.value.stage is not None


def test_staged_zero_stages_and_fallback():
    seq = MultiplierSequence.from_family("packed", 100, value_base=2.0, copies_base=5.0)
    built = build_perturbed_counterexample(seq, 0)
    assert not built.f_tilde.terms and built.certificate.integral_bound == math.pi / 2
    built = build_perturbed_counterexample(MultiplierSequence(np.full(50, 2.0)), 3)
    assert built.certificate.branch == "subsequence-limit branch"


def test_staged_precondition():
    seq = MultiplierSequence.from_family("power", 500, p=1.0)
    with pytest.raises(ConstructionError, match="precondition"):
        build_perturbed_counterexample(seq, 2)


def test_staged_higher_dimension_unlift():
    # c_n = sqrt(2)**j so that c_n**2 = 2**j fills the base-2 blocks
    seq = MultiplierSequence.from_family("packed", (5**10 - 1) // 4, d=2, value_base=math.sqrt(2.0), copies_base=5.0)
    built = build_perturbed_counterexample(seq, 3)
    np.testing.assert_allclose(built.b**2, built.b_tilde, rtol=1e-14)
    assert built.f.lift == "power" and built.f.d == 2
