"""Command-line front end: classify, synthesize, probe, verify.

Exit codes: 0 success, 2 input error, 3 construction failure, 4 probe or
verification failure. Every JSON output embeds the config that produced it
and is written with sorted keys so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .construct import (
    ConstructionCertificate,
    ConstructionError,
    RateSequence,
    build_divergence_function,
    build_perturbed_counterexample,
    build_rate_counterexample,
    single_stage,
)
from .evaluate import (
    ProbeReport,
    blowup_probe_staged,
    divergence_lower_bound,
    limsup_probe_rate,
    partial_sum,
    radial_integral_identity_check,
    rebuild_b_tilde,
    write_trajectory_csv,
)
from .kernels import RadialSeriesFunction
from .sequence_core import FAMILIES, MultiplierSequence, SequenceError, classify
from .verify import verify_document

EXIT_OK, EXIT_INPUT, EXIT_CONSTRUCTION, EXIT_FAILED = 0, 2, 3, 4
SEED_ENV = "MULTIPLIERLAB_SEED"
DEFAULT_SEED = 0
# packed (2, 5) prefix long enough for five staged perturbations
DEFAULT_STAGED = {"family": "packed", "value_base": 2.0, "copies_base": 5.0, "N": (5**10 - 1) // 4}
DEFAULT_SINGLE_STAGE = {"family": "packed", "value_base": 2.0, "copies_base": 6.0, "N": (6**8 - 1) // 5}

log = logging.getLogger("multiplierlab")


class InputError(Exception):
    """Bad user input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# helpers


def resolve_seed(cli_seed: int | None) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return DEFAULT_SEED if cli_seed is None else cli_seed


def _config(args: argparse.Namespace, seed: int) -> dict[str, Any]:
    cfg = {k: v for k, v in vars(args).items() if k != "handler"}
    cfg["seed"] = seed
    cfg["version"] = __version__
    return cfg


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def _make_parent(output: str) -> None:
    Path(output).parent.mkdir(parents=True, exist_ok=True)


def _emit(obj: Any, output: str | None) -> None:
    text = _dump(obj)
    if output:
        _make_parent(output)
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_json(path: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


def _check_bounds(args: argparse.Namespace) -> None:
    if getattr(args, "d", None) is not None and args.d < 1:
        raise InputError("--d must be >= 1")
    if getattr(args, "a", None) is not None and not args.a > 1:
        raise InputError("--a must be > 1")
    if getattr(args, "N", None) is not None and args.N < 1:
        raise InputError("--N must be >= 1")


def _family_params(args: argparse.Namespace) -> dict[str, float]:
    names = {
        "power": ("p", "scale", "amp"),
        "log": ("scale", "shift"),
        "packed": ("value_base", "copies_base"),
        "constant": ("value",),
        "convergent": ("limit", "scale"),
    }[args.family]
    return {k: getattr(args, k) for k in names if getattr(args, k) is not None}


def _sequence(args: argparse.Namespace, default: dict | None = None) -> MultiplierSequence:
    """Sequence from --input, else from --family flags, else ``default``."""
    d = args.d if args.d is not None else 1
    if args.input:
        doc = _load_json(args.input)
        if isinstance(doc, dict) and "d" not in doc and args.d is not None:
            doc = dict(doc, d=d)
        seq = MultiplierSequence.from_dict(doc)
        return seq.prefix(args.N) if args.N is not None and args.N < len(seq) else seq
    if args.family:
        if args.family == "ceil":
            raise InputError("--family ceil is only available through --input")
        n_terms = args.N if args.N is not None else 1000
        return MultiplierSequence.from_family(args.family, n_terms, d=d, **_family_params(args))
    if default is not None:
        params = dict(default)
        family, n_terms = params.pop("family"), params.pop("N")
        return MultiplierSequence.from_family(family, args.N or n_terms, d=d, **params)
    raise InputError("no sequence given: use --input FILE or --family")


def _add_sequence_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sequence")
    g.add_argument("--input", help="sequence JSON file")
    g.add_argument("--family", choices=[f for f in FAMILIES if f != "ceil"])
    g.add_argument("--p", type=float)
    g.add_argument("--scale", type=float)
    g.add_argument("--amp", type=float)
    g.add_argument("--shift", type=float)
    g.add_argument("--value-base", type=float)
    g.add_argument("--copies-base", type=float)
    g.add_argument("--value", type=float)
    g.add_argument("--limit", type=float)
    g.add_argument("--N", type=int, help="prefix length")
    g.add_argument("--d", type=int, help="dimension (default 1)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_classify(args: argparse.Namespace, seed: int) -> int:
    if args.format != "json":
        raise InputError("classify writes JSON only")
    seq = _sequence(args)
    report = classify(seq, args.a)
    _emit(dict(report.to_dict(), config=_config(args, seed)), args.output)
    return EXIT_OK


def cmd_synthesize(args: argparse.Namespace, seed: int) -> int:
    if args.format != "json":
        raise InputError("synthesize writes JSON only")
    if args.theorem == "3":
        fn, cert = build_divergence_function(_sequence(args))
    elif args.theorem == "6":
        try:
            a_seq = RateSequence.from_formula(args.a_seq)
        except (SyntaxError, ValueError) as exc:
            raise InputError(f"--a-seq: {exc}") from None
        fn, cert = build_rate_counterexample(a_seq, d=args.d or 1, k_max=args.k_max)
    elif args.theorem == "4":
        built = build_perturbed_counterexample(_sequence(args, DEFAULT_STAGED), args.stages)
        fn, cert = built.f_tilde, built.certificate
    else:
        seq = _sequence(args, DEFAULT_SINGLE_STAGE)
        stage = single_stage(seq, args.a, args.eps, args.S, args.l, args.M)
        fn, cert = stage.g, stage.certificate
    doc = dict(fn.to_dict(), certificate=cert.to_dict(), config=_config(args, seed))
    _emit(doc, args.output)
    return EXIT_OK


def _load_function(path: str) -> tuple[RadialSeriesFunction, ConstructionCertificate, dict]:
    doc = _load_json(path)
    if not isinstance(doc, dict) or "certificate" not in doc:
        raise InputError(f"{path}: field 'certificate' is missing")
    try:
        fn = RadialSeriesFunction.from_dict(doc)
        cert = ConstructionCertificate.from_dict(doc["certificate"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed function file ({exc})") from None
    if fn.is_empty:
        raise InputError(f"{path}: function has no base and no terms")
    return fn, cert, doc


def _require(cert: ConstructionCertificate, theorem: str, kind: str) -> None:
    if cert.theorem != theorem or cert.branch != "main":
        raise InputError(
            f"probe kind {kind!r} needs a main-branch theorem {theorem} certificate, "
            f"got theorem {cert.theorem} ({cert.branch})"
        )


def _merge(kind: str, reports: Sequence[ProbeReport]) -> ProbeReport:
    out = ProbeReport(kind=kind, points=[])
    for r in reports:
        out.points += r.points
        x = r.points[0] if r.points else None
        out.records += [dict(rec, x=x) for rec in r.records]
        out.failures += [dict(rec, x=x) for rec in r.failures]
        out.tolerances.update(r.tolerances)
        out.notes += [f"x={x}: {n}" for n in r.notes]
    return out


def cmd_probe(args: argparse.Namespace, seed: int) -> int:
    fn, cert, _ = _load_function(args.function)
    xs = args.x or [1.0]
    if args.kind == "rate":
        _require(cert, "6", args.kind)
        if len(fn.terms) != len(cert.thresholds):
            raise InputError("function terms and certificate thresholds disagree in number")
        k_max = args.k_max or len(fn.terms)
        if k_max > len(fn.terms):
            raise InputError(f"--k-max {k_max} exceeds the {len(fn.terms)} materialized terms")
        a_seq = RateSequence.from_dict(cert.a_seq)
        report = _merge(args.kind, [limsup_probe_rate(fn, a_seq, x, k_max) for x in xs])
    elif args.kind == "staged":
        _require(cert, "4", args.kind)
        if len(fn.terms) != len(cert.stages):
            raise InputError("function terms and certificate stages disagree in number")
        b_tilde = rebuild_b_tilde(cert, MultiplierSequence.from_dict(cert.sequence))
        report = _merge(args.kind, [blowup_probe_staged(fn, b_tilde, cert, x) for x in xs])
    elif args.kind == "divergence":
        _require(cert, "3", args.kind)
        seq = MultiplierSequence.from_dict(cert.sequence)
        n_terms = min(args.N or len(seq), len(seq))
        report = ProbeReport(kind="divergence", points=list(xs), tolerances={"slack": 1e-9})
        for x in xs:
            bound = divergence_lower_bound(fn, seq, cert, x, n_terms)
            rec = {"x": x, "N": n_terms, "partial_sum": bound.partial_sum, "lower_bound": bound.lower_bound}
            report.records.append(rec)
            if not bound.holds:
                report.failures.append(dict(rec, reason="partial sum below the certified lower bound"))
    elif args.kind == "partial":
        seq = MultiplierSequence.from_dict(cert.sequence) if cert.sequence and not (args.input or args.family) else _sequence(args)
        n_terms = min(args.N or len(seq), len(seq))
        if args.format == "csv":
            if not args.output:
                raise InputError("--format csv needs --output")
            _make_parent(args.output)
            write_trajectory_csv(args.output, fn, seq, xs[0], n_terms)
            return EXIT_OK
        report = ProbeReport(kind="partial", points=list(xs))
        for x in xs:
            report.records.append({"x": x, "N": n_terms, "partial_sum": partial_sum(fn, seq, x, n_terms)})
    else:
        d = args.d or fn.d
        ident = radial_integral_identity_check(fn, d, samples=args.samples, seed=seed)
        report = ProbeReport(kind="identity", points=[], tolerances={"sigma": 3.0})
        report.records.append(ident.to_dict())
        if not ident.agree:
            report.failures.append({"reason": "Monte Carlo and radial quadrature disagree beyond 3 sigma"})
    if args.format == "csv":
        raise InputError("--format csv is only available for --kind partial")
    _emit(dict(report.to_dict(), config=_config(args, seed)), args.output)
    return EXIT_OK if report.ok else EXIT_FAILED


def _collect(paths: Sequence[str]) -> list[Path]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(p.glob("*.json"))
        elif p.exists():
            files.append(p)
        else:
            raise InputError(f"{p}: no such file or directory")
    return files


def cmd_verify(args: argparse.Namespace, seed: int) -> int:
    files = _collect(args.paths)
    summary: dict[str, Any] = {"config": _config(args, seed), "files": {}, "warnings": []}
    if not files:
        msg = "no JSON inputs found; nothing to verify"
        log.warning(msg)
        summary["warnings"].append(msg)
    passed = True
    for path in files:
        doc = _load_json(str(path))
        if not isinstance(doc, dict):
            raise InputError(f"{path}: expected a JSON object")
        if "config" in doc and "certificate" not in doc and "terms" not in doc and "family" not in doc:
            summary["warnings"].append(f"{path}: not a sequence or function file, skipped")
            continue
        try:
            results = verify_document(doc)
        except (SequenceError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: {exc}") from None
        summary["files"][str(path)] = [r.to_dict() for r in results]
        for r in results:
            passed &= r.passed
            print(f"{'PASS' if r.passed else 'FAIL'} {path.name} {r.name} measured={_short(r.measured)}")
    summary["passed"] = passed
    if args.output:
        _emit(summary, args.output)
    return EXIT_OK if passed else EXIT_FAILED


def _short(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    return str(v)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="multiplierlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("-o", "--output", help="output path (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--seed", type=int, help=f"random seed (env {SEED_ENV} overrides)")

    p = sub.add_parser("classify", help="compute the block, window and growth statistics")
    _add_sequence_flags(p)
    p.add_argument("--a", type=float, default=2.0, help="block base a > 1")
    common(p)
    p.set_defaults(handler=cmd_classify)

    p = sub.add_parser("synthesize", help="build a counterexample function and certificate")
    p.add_argument("--theorem", choices=("3", "4", "6", "lemma8"), required=True)
    _add_sequence_flags(p)
    p.add_argument("--a-seq", default="n", help="rate formula in n, used with --theorem 6")
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--stages", type=int, default=5)
    p.add_argument("--a", type=float, default=2.0, help="stage base, used with --theorem lemma8")
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--S", type=float, default=1.0)
    p.add_argument("--l", type=int, default=0)
    p.add_argument("--M", type=int, default=0)
    common(p)
    p.set_defaults(handler=cmd_synthesize)

    p = sub.add_parser("probe", help="re-evaluate witnesses of a synthesized function")
    p.add_argument("--function", required=True, help="function JSON from synthesize")
    p.add_argument("--kind", choices=("rate", "staged", "divergence", "partial", "identity"), required=True)
    p.add_argument("--x", type=float, nargs="+")
    p.add_argument("--k-max", type=int)
    p.add_argument("--samples", type=int, default=10**6)
    _add_sequence_flags(p)
    common(p)
    p.set_defaults(handler=cmd_probe)

    p = sub.add_parser("verify", help="run the invariant suite on sequence and function files")
    p.add_argument("paths", nargs="*", default=["."], help="files or directories of JSON")
    common(p)
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        _check_bounds(args)
        seed = resolve_seed(args.seed)
        return args.handler(args, seed)
    except ConstructionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCTION
    except (InputError, SequenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
