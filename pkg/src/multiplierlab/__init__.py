"""Multiplier sequences, integrable counterexamples and their numerical certificates."""

from .construct import (
    ConstructionCertificate,
    ConstructionError,
    PrefixExhausted,
    RateSequence,
    build_divergence_function,
    build_perturbed_counterexample,
    build_rate_counterexample,
    single_stage,
)
from .evaluate import (
    blowup_probe_staged,
    divergence_lower_bound,
    limsup_probe_rate,
    partial_sum,
    radial_integral_identity_check,
)
from .kernels import BumpKernel, RadialSeriesFunction, SeriesTerm, radial_lift
from .sequence_core import (
    ClassificationReport,
    DyadicProfile,
    MultiplierSequence,
    SequenceError,
    classify,
    dyadic_profile,
    growth_statistic,
    improve_sequence,
    window_sum,
)

__version__ = "0.1.0"

__all__ = [
    "BumpKernel",
    "ClassificationReport",
    "ConstructionCertificate",
    "ConstructionError",
    "DyadicProfile",
    "MultiplierSequence",
    "PrefixExhausted",
    "RadialSeriesFunction",
    "RateSequence",
    "SeriesTerm",
    "SequenceError",
    "blowup_probe_staged",
    "build_divergence_function",
    "build_perturbed_counterexample",
    "build_rate_counterexample",
    "classify",
    "divergence_lower_bound",
    "dyadic_profile",
    "growth_statistic",
    "improve_sequence",
    "single_stage",
    "limsup_probe_rate",
    "partial_sum",
    "radial_integral_identity_check",
    "radial_lift",
    "window_sum",
]
