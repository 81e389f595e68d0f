"""Forecasting toolkit for high-dimensional functional time series.

Panels of curves indexed by (group, unit, year) are smoothed, split into
two-way and one-way functional ANOVA effects plus a residual process, and the
residuals are modelled with a functional factor model whose scores are
forecast by univariate time-series engines.  Split and sequential conformal
intervals and an expanding-window evaluation harness sit on top.
"""

import logging

from .conformal import calibrate_split, sequential_intervals, split_intervals, validation_residuals
from .evaluation import (
    BacktestConfig,
    EvalReport,
    cpd,
    ecp,
    evaluate,
    expanding_backtest,
    interval_score,
    mafe,
    mean_interval_score,
    rmsfe,
    run_backtest,
)
from .factor import FactorFit, FactorSelectConfig, fit_factors, select_q
from .fanova import TWA_ONLY, TWA_OWA, decompose, estimate_one_way, estimate_two_way
from .panel import AgeGrid, FunctionalPanel, PanelIndex, SplitPlan, load_directory, load_panel, make_split, to_log
from .pipeline import TWA_FFM, TWA_OWA_FFM, PipelineConfig, fit_pipeline
from .smoothing import SmootherConfig, smooth_curve, smooth_panel
from .tsforecast import fit_quantile_ar, forecast_series

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "AgeGrid", "BacktestConfig", "EvalReport", "FactorFit", "FactorSelectConfig", "FunctionalPanel",
    "PanelIndex", "PipelineConfig", "SmootherConfig", "SplitPlan", "TWA_FFM", "TWA_ONLY", "TWA_OWA",
    "TWA_OWA_FFM", "calibrate_split", "cpd", "decompose", "ecp", "estimate_one_way", "estimate_two_way",
    "evaluate", "expanding_backtest", "fit_factors", "fit_pipeline", "fit_quantile_ar", "forecast_series",
    "interval_score", "load_directory", "load_panel", "mafe", "make_split", "mean_interval_score", "rmsfe",
    "run_backtest", "select_q", "sequential_intervals", "smooth_curve", "smooth_panel", "split_intervals",
    "to_log", "validation_residuals",
]
