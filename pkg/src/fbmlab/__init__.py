"""Tail asymptotics of fBm drawdown and drawup, with the tools to check them.

The package has three layers: exact-covariance path samplers (`engine`,
`paths`), closed-form tail approximations and their special functions
(`asymptotics`, `constants`), and the numerical-validation harness that
plays them against each other (`validation`).  `cli` fronts all of it.
"""

from .asymptotics import (
    AsymptoticResult,
    FixedPointError,
    Regime,
    ThresholdError,
    asym_drawdown,
    asym_drawup,
    log_psi,
    piterbarg_half,
    psi,
    quad_quarter_integral,
    solve_s_u,
    threshold_m,
    threshold_m1,
    threshold_m2,
)
from .constants import (
    ConstantEstimate,
    ConstantLookupError,
    ConstantsProvider,
    estimate_pickands,
    estimate_pickands_truncated,
    estimate_piterbarg,
)
from .engine import (
    FbmPath,
    GridSpec,
    ModelParams,
    SamplingError,
    apply_trend,
    fbm_covariance,
    sample_fbm_cholesky,
    sample_fbm_circulant,
    sample_raw_block,
)
from .paths import (
    TailQuery,
    drawdown_drawup_values,
    drawdown_values,
    drawup_values,
    exceeds,
    max_drawdown,
    max_drawup,
)
from .validation import (
    LemmaCheckReport,
    McEstimate,
    check_lemma1,
    check_lemma2,
    check_lemma3,
    convergence_study,
    functional_sups,
    functional_sups_nested,
    mc_tail,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "AsymptoticResult",
    "ConstantEstimate",
    "ConstantLookupError",
    "ConstantsProvider",
    "FbmPath",
    "FixedPointError",
    "GridSpec",
    "LemmaCheckReport",
    "McEstimate",
    "ModelParams",
    "Regime",
    "SamplingError",
    "TailQuery",
    "ThresholdError",
    "apply_trend",
    "asym_drawdown",
    "asym_drawup",
    "check_lemma1",
    "check_lemma2",
    "check_lemma3",
    "convergence_study",
    "drawdown_drawup_values",
    "drawdown_values",
    "drawup_values",
    "estimate_pickands",
    "estimate_pickands_truncated",
    "estimate_piterbarg",
    "exceeds",
    "fbm_covariance",
    "functional_sups",
    "functional_sups_nested",
    "log_psi",
    "max_drawdown",
    "max_drawup",
    "mc_tail",
    "piterbarg_half",
    "psi",
    "quad_quarter_integral",
    "sample_fbm_cholesky",
    "sample_fbm_circulant",
    "sample_raw_block",
    "solve_s_u",
    "threshold_m",
    "threshold_m1",
    "threshold_m2",
    "wilson_interval",
]
