import json

import pytest

from multiplierlab.cli import SEED_ENV, main


def run(*argv):
    return main([str(a) for a in argv])


def load(path):
    return json.loads(path.read_text())


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    """One synthesized file per construction, shared by the probe and verify tests."""
    root = tmp_path_factory.mktemp("built")
    files = {
        "rate": root / "rate.json",
        "divergence": root / "div.json",
        "staged": root / "staged.json",
        "stage": root / "stage.json",
    }
    assert run("synthesize", "--theorem", "6", "--a-seq", "n", "--k-max", 20, "-o", files["rate"]) == 0
    assert (
        run(
            "synthesize", "--theorem", "3", "--family", "packed",
            "--value-base", 2, "--copies-base", 4, "--N", (4**10 - 1) // 3, "-o", files["divergence"],
        )
        == 0
    )
    assert run("synthesize", "--theorem", "4", "--stages", 5, "-o", files["staged"]) == 0
    assert run("synthesize", "--theorem", "lemma8", "--a", 1.5, "--eps", 0.5, "--S", 2, "-o", files["stage"]) == 0
    return files


# --- classify -------------------------------------------------------------------------


def test_classify_identity(tmp_path):
    out = tmp_path / "c.json"
    assert run("classify", "--family", "power", "--p", 1, "--d", 1, "--N", 1000, "-o", out) == 0
    doc = load(out)
    assert doc["verdict"] == "analytic-bounded" and doc["growth_stat"] == 1.0
    assert doc["config"]["seed"] == 0 and doc["config"]["subcommand"] == "classify"


def test_classify_log(tmp_path):
    out = tmp_path / "c.json"
    assert run("classify", "--family", "log", "--d", 1, "--N", 100000, "-o", out) == 0
    assert load(out)["verdict"] == "unbounded-evidence"


def test_classify_from_file(tmp_path):
    src = tmp_path / "seq.json"
    src.write_text(json.dumps({"d": 2, "terms": [1.0, 2.0, 3.0, 5.0]}))
    out = tmp_path / "c.json"
    assert run("classify", "--input", src, "--a", 3, "-o", out) == 0
    assert load(out)["a"] == 3.0 and load(out)["d"] == 2


@pytest.mark.parametrize(
    "doc, needle",
    [({"d": 1}, "'terms'"), ({"d": 1, "terms": [1, -1]}, "'terms'"), ({"terms": [1]}, "'d'")],
)
def test_classify_malformed_exit_2(tmp_path, capsys, doc, needle):
    src = tmp_path / "bad.json"
    src.write_text(json.dumps(doc))
    assert run("classify", "--input", src) == 2
    assert needle in capsys.readouterr().err


def test_classify_input_errors_exit_2(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run("classify", "--input", broken) == 2
    assert run("classify", "--input", tmp_path / "missing.json") == 2
    assert run("classify") == 2
    assert run("classify", "--family", "power", "--p", 1, "--a", 1.0) == 2
    assert run("classify", "--family", "power", "--p", 1, "--N", 0) == 2
    assert run("classify", "--family", "power", "--p", 1, "--format", "csv") == 2
    assert run("frobnicate") == 2


def test_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for out in (a, b):
        assert run("synthesize", "--theorem", "6", "--a-seq", "n^2", "--k-max", 5, "-o", tmp_path / "x.json") == 0
        out.write_bytes((tmp_path / "x.json").read_bytes())
    assert a.read_bytes() == b.read_bytes()


def test_seed_env_overrides(tmp_path, monkeypatch):
    out = tmp_path / "c.json"
    assert run("classify", "--family", "constant", "--value", 2, "--N", 10, "--seed", 5, "-o", out) == 0
    assert load(out)["config"]["seed"] == 5
    monkeypatch.setenv(SEED_ENV, "17")
    assert run("classify", "--family", "constant", "--value", 2, "--N", 10, "--seed", 5, "-o", out) == 0
    assert load(out)["config"]["seed"] == 17
    monkeypatch.setenv(SEED_ENV, "x")
    assert run("classify", "--family", "constant", "--value", 2, "--N", 10) == 2


def test_output_creates_parent_directories(tmp_path):
    out = tmp_path / "nested" / "dir" / "c.json"
    assert run("classify", "--family", "power", "--p", 1, "--N", 10, "-o", out) == 0
    assert load(out)["verdict"] == "analytic-bounded"


def test_unwritable_output_exit_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("classify", "--family", "power", "--p", 1, "--N", 10, "-o", blocker / "c.json") == 2


def test_stdout_when_no_output(capsys):
    assert run("classify", "--family", "power", "--p", 2, "--N", 10) == 0
    assert json.loads(capsys.readouterr().out)["verdict"] == "analytic-bounded"


# --- synthesize -------------------------------------------------------------------------


def test_synthesize_rate_thresholds(built):
    cert = load(built["rate"])["certificate"]
    assert cert["thresholds"] == [k**4 for k in range(1, 21)]


def test_synthesize_staged_eps(built):
    stages = load(built["staged"])["certificate"]["stages"]
    assert [s["eps"] for s in stages] == [4.0**-i for i in range(1, 6)]


def test_synthesize_precondition_exit_3(tmp_path, capsys):
    assert run("synthesize", "--theorem", "3", "--family", "power", "--p", 1, "--N", 1000, "-o", tmp_path / "f.json") == 3
    assert "precondition failed" in capsys.readouterr().err


def test_synthesize_exhausted_exit_3(tmp_path):
    args = ["synthesize", "--theorem", "4", "--stages", 5, "--family", "packed", "--value-base", 2]
    assert run(*args, "--copies-base", 5, "--N", 1000, "-o", tmp_path / "f.json") == 3


def test_synthesize_bad_formula_exit_2(tmp_path):
    assert run("synthesize", "--theorem", "6", "--a-seq", "import os", "-o", tmp_path / "f.json") == 2


# --- probe ------------------------------------------------------------------------------


def test_probe_rate(built, tmp_path):
    out = tmp_path / "p.json"
    assert run("probe", "--function", built["rate"], "--kind", "rate", "--x", 0.7, "--k-max", 15, "-o", out) == 0
    doc = load(out)
    assert doc["ok"] and len(doc["records"]) == 15


def test_probe_staged(built, tmp_path):
    out = tmp_path / "p.json"
    assert run("probe", "--function", built["staged"], "--kind", "staged", "--x", 1.0, "-o", out) == 0
    records = load(out)["records"]
    assert records
    assert all(r["attained"] >= 2.0 ** r["stage"] for r in records)


def test_probe_divergence(built, tmp_path):
    out = tmp_path / "p.json"
    assert run("probe", "--function", built["divergence"], "--kind", "divergence", "--x", 0.3, 1, 5, "-o", out) == 0
    assert len(load(out)["records"]) == 3


def test_probe_partial_csv(built, tmp_path):
    out = tmp_path / "traj.csv"
    assert run("probe", "--function", built["rate"], "--kind", "partial", "--family", "power", "--p", 1,
               "--N", 50, "--x", 1, "--format", "csv", "-o", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("n,") and len(lines) == 51


def test_probe_identity_seeded(built, tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv(SEED_ENV, "4")
    for out in (a, b):
        assert run("probe", "--function", built["divergence"], "--kind", "identity", "--samples", 20000, "-o", out) == 0
    assert load(a)["records"] == load(b)["records"]
    assert load(a)["records"][0]["seed"] == 4


def test_probe_identity_misses_far_bumps(built, tmp_path):
    # the rate series keeps its mass in narrow bumps near l**5 that the
    # (1 + r)**-(d+2) sampler almost never visits; the probe must say so
    out = tmp_path / "p.json"
    assert run("probe", "--function", built["rate"], "--kind", "identity", "--samples", 20000, "-o", out) == 4
    rec = load(out)["records"][0]
    assert rec["lhs"] < rec["rhs"]


def test_probe_failure_exit_4(built, tmp_path):
    doc = load(built["rate"])
    doc["certificate"]["a_seq"]["formula"] = "n / 1000"
    tampered = tmp_path / "slow.json"
    tampered.write_text(json.dumps(doc))
    assert run("probe", "--function", tampered, "--kind", "rate", "--x", 1.0, "-o", tmp_path / "p.json") == 4
    assert load(tmp_path / "p.json")["failures"]


def test_probe_empty_function_exit_2(tmp_path):
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"base": None, "terms": [], "d": 1, "certificate": {"theorem": "6"}}))
    assert run("probe", "--function", empty, "--kind", "rate") == 2


def test_probe_mismatch_exit_2(built, tmp_path):
    assert run("probe", "--function", built["divergence"], "--kind", "rate") == 2
    doc = load(built["rate"])
    doc["terms"] = doc["terms"][:5]
    short = tmp_path / "short.json"
    short.write_text(json.dumps(doc))
    assert run("probe", "--function", short, "--kind", "rate") == 2
    assert run("probe", "--function", tmp_path / "none.json", "--kind", "rate") == 2


# --- verify -------------------------------------------------------------------------------


def test_verify_all_outputs(built, tmp_path, capsys):
    out = tmp_path / "summary.json"
    assert run("verify", built["rate"].parent, "-o", out) == 0
    summary = load(out)
    assert summary["passed"] and len(summary["files"]) == 4
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_verify_divergence_identity(built, tmp_path):
    out = tmp_path / "s.json"
    assert run("verify", built["divergence"], "-o", out) == 0
    checks = {c["name"]: c for c in next(iter(load(out)["files"].values()))}
    assert checks["termwise_integral_identity"]["measured"] <= 1e-6


def test_verify_stage_four_postconditions(built, tmp_path):
    out = tmp_path / "s.json"
    assert run("verify", built["stage"], "-o", out) == 0
    names = [c["name"] for c in next(iter(load(out)["files"].values()))]
    assert names == ["ratio_sandwich", "g_integral_below_eps", "g_support_in_S_T", "plateau_hit"]


def test_verify_empty_directory(tmp_path, caplog):
    assert run("verify", tmp_path) == 0
    assert "nothing to verify" in caplog.text


def test_verify_failure_exit_4(built, tmp_path):
    doc = load(built["rate"])
    doc["certificate"]["thresholds"][3] += 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run("verify", bad) == 4


def test_verify_io_errors_exit_2(tmp_path):
    assert run("verify", tmp_path / "missing") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    assert run("verify", bad) == 2
