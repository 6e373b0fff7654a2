"""Conformal prediction intervals for functional time series.

Point forecasts come from functional principal components with per-score
exponential smoothing; prediction intervals come from split conformal
calibration of scaled residual bands or from sequential conformal prediction
via autoregressive quantile regression.
"""

from .backtest import (
    BacktestConfig,
    BacktestReport,
    IntervalForecastSet,
    SplitSpec,
    WindowScheme,
    cpd_h,
    ecp_h,
    interval_score,
    make_origins,
    mean_interval_score_h,
    run_backtest,
    summarize_over_horizons,
)
from .data_io import RawMortalityTable, SynthSpec, load_hmd, load_wide_csv, synth_generate, to_functional_series, write_report
from .ets import CurveForecast, EtsFit, FtsForecaster, fit_ets, forecast_curves, forecast_ets
from .fpca import FpcaModel, FunctionalPCA, fpca, mean_curve, covariance_matrix, reconstruct, select_k_evr
from .sequential import (
    QuantRegModel,
    SequentialResult,
    fit_quantile_ar,
    pinball_loss,
    predict_quantile,
    run_sequential,
    select_ar_order,
)
from .series import AgeGrid, FunctionalSeries
from .split_conformal import (
    ResidualSet,
    ScaleFunction,
    SplitCalibration,
    SplitConformalCalibrator,
    band_ecp,
    calibrate_split,
    calibrate_xi,
    calibrate_xi_pair,
    compute_residuals,
    isotonic_smooth_xi,
    predict_interval_split,
    scale_function,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
