"""Quasi-maximum-likelihood estimation of a common break in factor loadings."""

from .break_estimators import (
    BreakEstimate,
    LimitSpec,
    Method,
    PrefixMoments,
    SearchWindow,
    estimate_break,
    estimate_break_ls,
    estimate_break_qml,
    limit_w,
    log_det_psd,
    prefix_moments,
    qml_objective,
    simulate_limit_distribution,
    split_covariances,
)
from .dgp import DgpConfig, Scenario, SimulatedPanel, gen_panel
from .errors import ExperimentError, FactorBreakError, NumericalError, ParameterError
from .factor_count import IcResult, IcVariant, select_r
from .montecarlo import ExperimentReport, ExperimentSpec, run_experiment, summarize
from .panel_model import PanelData, PcaFit, estimate_pca, gram_matrix

__version__ = "0.1.0"

__all__ = [
    "BreakEstimate",
    "DgpConfig",
    "ExperimentError",
    "ExperimentReport",
    "ExperimentSpec",
    "FactorBreakError",
    "IcResult",
    "IcVariant",
    "LimitSpec",
    "Method",
    "NumericalError",
    "PanelData",
    "ParameterError",
    "PcaFit",
    "PrefixMoments",
    "Scenario",
    "SearchWindow",
    "SimulatedPanel",
    "estimate_break",
    "estimate_break_ls",
    "estimate_break_qml",
    "estimate_pca",
    "gen_panel",
    "gram_matrix",
    "limit_w",
    "log_det_psd",
    "prefix_moments",
    "qml_objective",
    "run_experiment",
    "select_r",
    "simulate_limit_distribution",
    "split_covariances",
    "summarize",
]
