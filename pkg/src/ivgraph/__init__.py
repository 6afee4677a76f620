"""Instrument construction, validity testing, and IV/2SLS estimation
for linear causal models over block-structured DAGs, with a bootstrap
bias-plus-variance reliability score and a linear-Gaussian simulator
providing analytic oracles.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .bootstrap import ReliabilityReport, bootstrap_indices, reliability, resample
from .dag import BlockGraph, sort_blocks
from .dgp import (
    PRESETS,
    PopulationMoments,
    Scenario,
    analytic_plims,
    fig1,
    fig2,
    fig3,
    population_covariance,
    simulate,
)
from .errors import (
    ConfigError,
    CycleError,
    InsufficientCount,
    IvGraphError,
    NoValidSpace,
    ParseError,
    RankDeficient,
    RoleError,
    SingularMoment,
    TooManyFailures,
    Underidentified,
    WeakInstrument,
)
from .iv import (
    InstrumentSet,
    IvEstimate,
    ValidityVerdict,
    causal_effect,
    construct_instruments,
    iv_estimate,
    nearest_valid,
    validity_test,
)
from .regress import Block, Dataset, RegressionResult, center, ols, residual_block

__all__ = [
    "__version__",
    "BlockGraph",
    "sort_blocks",
    "Block",
    "Dataset",
    "RegressionResult",
    "center",
    "ols",
    "residual_block",
    "InstrumentSet",
    "IvEstimate",
    "ValidityVerdict",
    "iv_estimate",
    "validity_test",
    "construct_instruments",
    "nearest_valid",
    "causal_effect",
    "ReliabilityReport",
    "bootstrap_indices",
    "resample",
    "reliability",
    "PopulationMoments",
    "Scenario",
    "simulate",
    "population_covariance",
    "analytic_plims",
    "fig1",
    "fig2",
    "fig3",
    "PRESETS",
    "IvGraphError",
    "ConfigError",
    "ParseError",
    "RoleError",
    "CycleError",
    "RankDeficient",
    "SingularMoment",
    "WeakInstrument",
    "Underidentified",
    "NoValidSpace",
    "InsufficientCount",
    "TooManyFailures",
]
