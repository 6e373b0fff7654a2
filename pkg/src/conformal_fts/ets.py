"""Exponential-smoothing forecasts of principal component scores.

A reduced additive, non-seasonal family: simple smoothing (ANN), Holt's
linear trend (AAN), and damped Holt (AAdN).  Each member is fitted by
maximizing the Gaussian one-step likelihood with a deterministic multi-start
Nelder-Mead search; the family member with the smallest corrected Akaike
criterion wins, ties broken in the order ANN < AAN < AAdN.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import _optim
from .exceptions import FallbackWarning, InsufficientDataError, InvalidInputError
from .fpca import FpcaModel, fpca
from .series import FunctionalSeries

FAMILY_ALL = ("ANN", "AAN", "AAdN")
_KIND_CODE = {"ANN": _optim.ETS_ANN, "AAN": _optim.ETS_AAN, "AAdN": _optim.ETS_AADN}
_N_PARAMS = {"ANN": 3, "AAN": 5, "AAdN": 6}  # smoothing + initial states + variance
_SMOOTHING_STARTS = ((0.1, 0.01), (0.5, 0.1), (0.9, 0.3))
_MAXITER = 500


@dataclass(frozen=True)
class EtsFit:
    """A fitted family member with its final states and selection criteria."""

    model_kind: str
    alpha: float
    beta: float | None
    phi: float | None
    l0: float
    b0: float | None
    level: float  # state after the last observation
    trend: float
    sigma2: float
    loglik: float
    aic: float
    aicc: float
    n: int
    fallback: bool = False


def _criteria(sse: float, n: int, q: int) -> tuple[float, float, float, float]:
    sigma2 = sse / n
    loglik = -0.5 * n * (math.log(2.0 * math.pi * max(sigma2, 1e-300)) + 1.0)
    aic = -2.0 * loglik + 2.0 * q
    aicc = -2.0 * loglik + 2.0 * q * n / (n - q - 1) if n - q - 1 > 0 else math.inf
    return sigma2, loglik, aic, aicc


def _fit_member(y: np.ndarray, kind: str) -> EtsFit | None:
    n = y.size
    code = _KIND_CODE[kind]
    l0h = y[0]
    b0h = float(np.mean(np.diff(y[: min(4, n)]))) if n >= 2 else 0.0
    state_step = max(0.1, 0.05 * float(np.std(y)))

    best_x, best_f = None, math.inf
    for a0, b0s in _SMOOTHING_STARTS:
        if kind == "ANN":
            x0 = np.array([a0, l0h])
            step = np.array([0.1, state_step])
        elif kind == "AAN":
            x0 = np.array([a0, b0s, l0h, b0h])
            step = np.array([0.1, 0.05, state_step, state_step])
        else:
            x0 = np.array([a0, b0s, 0.9, l0h, b0h])
            step = np.array([0.1, 0.05, -0.05, state_step, state_step])
        x, f = _optim.nelder_mead_ets(code, x0, step, y, _MAXITER)
        if f < best_f:
            best_x, best_f = x, f
    if best_x is None or not math.isfinite(best_f) or best_f >= 1e299:
        return None

    sse, level, trend = _optim.ets_filter(code, best_x, y)
    sigma2, loglik, aic, aicc = _criteria(sse, n, _N_PARAMS[kind])
    if kind == "ANN":
        return EtsFit(kind, best_x[0], None, None, best_x[1], None, level, 0.0,
                      sigma2, loglik, aic, aicc, n)
    if kind == "AAN":
        return EtsFit(kind, best_x[0], best_x[1], None, best_x[2], best_x[3], level, trend,
                      sigma2, loglik, aic, aicc, n)
    return EtsFit(kind, best_x[0], best_x[1], best_x[2], best_x[3], best_x[4], level, trend,
                  sigma2, loglik, aic, aicc, n)


def _fallback_fit(y: np.ndarray) -> EtsFit:
    x = np.array([0.5, y[0]])
    sse, level, _ = _optim.ets_filter(_optim.ETS_ANN, x, y)
    sigma2, loglik, aic, aicc = _criteria(sse, y.size, _N_PARAMS["ANN"])
    return EtsFit("ANN", 0.5, None, None, y[0], None, level, 0.0,
                  sigma2, loglik, aic, aicc, y.size, fallback=True)


def fit_ets(series: np.ndarray, family: tuple[str, ...] = FAMILY_ALL) -> EtsFit:
    """Fit every requested family member and keep the smallest-AICc one.

    Members whose AICc is undefined (sample too short for the parameter
    count) drop back to plain AIC for comparison; if no member produces a
    finite criterion the fit falls back to ANN with alpha = 0.5 and a
    :class:`FallbackWarning`.
    """
    y = np.ascontiguousarray(series, dtype=float)
    if y.ndim != 1:
        raise InvalidInputError("series must be 1-dimensional")
    if y.size < 4:
        raise InsufficientDataError("ETS fit needs at least 4 observations")
    if not set(family) <= set(FAMILY_ALL) or not family:
        raise InvalidInputError(f"family must be a nonempty subset of {FAMILY_ALL}")

    fits = [f for kind in FAMILY_ALL if kind in family and (f := _fit_member(y, kind))]
    if not fits:
        warnings.warn("all ETS optimizations diverged; falling back to ANN(0.5)", FallbackWarning)
        return _fallback_fit(y)
    finite = [f for f in fits if math.isfinite(f.aicc)]
    if finite:
        return min(finite, key=lambda f: f.aicc)
    return min(fits, key=lambda f: f.aic)


def forecast_ets(fit: EtsFit, h: int) -> np.ndarray:
    """Point-forecast recursion: flat, linear, or damped-trend extrapolation."""
    if h < 1:
        raise InvalidInputError("horizon must be >= 1")
    steps = np.arange(1, h + 1, dtype=float)
    if fit.model_kind == "ANN":
        return np.full(h, fit.level)
    if fit.model_kind == "AAN":
        return fit.level + steps * fit.trend
    phi = fit.phi
    damp = np.cumsum(phi ** steps)
    return fit.level + damp * fit.trend


@dataclass(frozen=True)
class CurveForecast:
    """h-step-ahead curve forecasts assembled from per-component score forecasts."""

    origin_year: int
    horizons: np.ndarray  # 1..H
    curves: np.ndarray  # (H, n_ages)
    score_forecasts: np.ndarray  # (k, H)

    @property
    def max_horizon(self) -> int:
        return int(self.horizons[-1])

    def curve_at(self, h: int) -> np.ndarray:
        if not 1 <= h <= self.max_horizon:
            raise InvalidInputError(f"horizon {h} outside 1..{self.max_horizon}")
        return self.curves[h - 1]


def forecast_curves(model: FpcaModel, H: int, family: tuple[str, ...] = FAMILY_ALL) -> CurveForecast:
    """Forecast each score column with ETS and reassemble curves on the grid."""
    if H < 1:
        raise InvalidInputError("H must be >= 1")
    score_fc = np.empty((model.k, H))
    for k in range(model.k):
        fit = fit_ets(model.scores[:, k], family=family)
        score_fc[k] = forecast_ets(fit, H)
    curves = model.mean + score_fc.T @ model.eigenfunctions
    return CurveForecast(
        origin_year=model.origin_year,
        horizons=np.arange(1, H + 1),
        curves=curves,
        score_forecasts=score_fc,
    )


class FtsForecaster(BaseEstimator):
    """Point forecaster for functional series: FPCA scores + per-score ETS."""

    def __init__(self, k: int | str = "evr", tau: float = 1e-3,
                 k_max: int | None = None, family: tuple[str, ...] = FAMILY_ALL):
        self.k = k
        self.tau = tau
        self.k_max = k_max
        self.family = family

    def fit(self, series: FunctionalSeries, y=None):
        self.model_ = fpca(series, k=self.k, tau=self.tau, k_max=self.k_max)
        return self

    def predict(self, h: int) -> CurveForecast:
        if not hasattr(self, "model_"):
            raise NotFittedError("FtsForecaster is not fitted")
        return forecast_curves(self.model_, h, family=self.family)
