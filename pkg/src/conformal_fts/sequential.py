"""Sequential conformal prediction via per-age AR(p) quantile regression.

For each age, absolute forecast residuals form a nonnegative time series.  At
every test step an AR order is selected by AIC, a quantile regression at level
1-alpha is fitted on lagged residuals, the next quantile is predicted (clamped
at zero), a symmetric interval is emitted, and the realized residual is then
appended before moving on.  Nothing depends on information from the future.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _optim
from .exceptions import (
    FallbackWarning,
    InsufficientDataError,
    InvalidInputError,
    StreamError,
)


def pinball_loss(actual: float, predicted: float, tau_level: float) -> float:
    """Check loss: tau * (a - q) above the quantile, (1 - tau) * (q - a) below."""
    if not 0.0 < tau_level < 1.0:
        raise InvalidInputError("tau_level must be in (0,1)")
    d = actual - predicted
    return tau_level * d if d >= 0 else (1.0 - tau_level) * (-d)


@dataclass(frozen=True)
class QuantRegModel:
    """AR(p) quantile-regression coefficients (intercept first, then lags)."""

    order: int
    coefficients: np.ndarray
    level: float
    loss: float
    n_eff: int
    fallback: bool = False


def _intercept_only(y: np.ndarray, level: float) -> tuple[float, float]:
    q = float(np.quantile(y, level))  # type-7, the check-loss minimizer convention
    loss = float(_optim.pinball_mean(np.ascontiguousarray(y - q), level))
    return q, loss


def fit_quantile_ar(series: np.ndarray, p: int, level: float) -> QuantRegModel:
    """Minimize mean check loss of r_s on (1, r_{s-1}, ..., r_{s-p}).

    Order 0 is the empirical type-7 quantile.  Higher orders use the smoothed
    majorize-minimize solver; the result never scores worse than the
    intercept-only fit on the same rows (the nested model is kept if it wins).
    """
    r = np.ascontiguousarray(series, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise InvalidInputError("series must be a nonempty 1-d array")
    if not 0.0 < level < 1.0:
        raise InvalidInputError("level must be in (0,1)")
    if p < 0:
        raise InvalidInputError("order must be >= 0")

    n_eff = r.size - p
    if p > 0 and n_eff < p + 2:
        warnings.warn(f"too few rows for AR({p}); falling back to order 0", FallbackWarning)
        q, loss = _intercept_only(r, level)
        return QuantRegModel(0, np.array([q]), level, loss, r.size, fallback=True)

    if p == 0:
        q, loss = _intercept_only(r, level)
        return QuantRegModel(0, np.array([q]), level, loss, r.size)

    coeffs, loss = _optim.quantile_ar_fit(r, p, level)
    y_rows = r[p:]
    q0 = float(np.quantile(y_rows, level))
    loss0 = float(_optim.pinball_mean(np.ascontiguousarray(y_rows - q0), level))
    if loss0 < loss:
        # nested intercept-only solution wins; keep it with zero lag weights
        coeffs = np.concatenate([[q0], np.zeros(p)])
        loss = loss0
    return QuantRegModel(p, np.asarray(coeffs), level, float(loss), n_eff)


def select_ar_order(series: np.ndarray, level: float, p_max: int | None = None) -> int:
    """AIC order selection on a common sample of length len(series) - p_max.

    AIC(p) = 2 * n_eff * ln(mean check loss + 1e-12) + 2 (p + 1); ties go to
    the smallest order.
    """
    r = np.ascontiguousarray(series, dtype=float)
    if r.size < 3:
        raise InsufficientDataError("order selection needs at least 3 observations")
    if p_max is None:
        p_max = min(5, r.size // 10)
    p_max = max(0, min(p_max, r.size - 2))
    n_eff = r.size - p_max

    best_p, best_aic = 0, math.inf
    for p in range(p_max + 1):
        if n_eff < p + 2 and p > 0:
            continue
        y = r[p_max:]
        if p == 0:
            q = float(np.quantile(y, level))
            loss = float(_optim.pinball_mean(np.ascontiguousarray(y - q), level))
        else:
            # common sample: rows target r[s] for s = p_max..end, lags within reach
            coeffs, _ = _optim.quantile_ar_fit(r[p_max - p :], p, level)
            pred = np.full(y.size, coeffs[0])
            for j in range(1, p + 1):
                pred += coeffs[j] * r[p_max - j : r.size - j]
            loss = float(_optim.pinball_mean(np.ascontiguousarray(y - pred), level))
        aic = 2.0 * n_eff * math.log(loss + 1e-12) + 2.0 * (p + 1)
        if aic < best_aic - 1e-12:
            best_p, best_aic = p, aic
    return best_p


def predict_quantile(model: QuantRegModel, latest_lags: np.ndarray) -> float:
    """Linear predictor on the most recent lags, clamped below at zero."""
    lags = np.asarray(latest_lags, dtype=float)
    if lags.shape != (model.order,):
        raise InvalidInputError(f"expected {model.order} lags, got shape {lags.shape}")
    if model.order and np.any(lags < 0):
        raise InvalidInputError("lags must be nonnegative")
    value = float(model.coefficients[0])
    if model.order:
        value += float(model.coefficients[1:] @ lags)
    return max(0.0, value)


@dataclass(frozen=True)
class SequentialResult:
    """Per-year, per-age sequential intervals and predicted quantiles."""

    point: np.ndarray  # (n_test, n_ages)
    lower: np.ndarray
    upper: np.ndarray
    qhat: np.ndarray
    orders: np.ndarray  # selected AR order per (year, age)


def run_sequential(
    point_forecasts: np.ndarray,
    actuals: np.ndarray,
    alpha: float,
    history: np.ndarray,
    p_max: int | None = None,
    years: np.ndarray | None = None,
) -> SequentialResult:
    """Walk the test stream: predict a residual quantile, emit the interval,
    ingest the realized residual, repeat.  Ages are processed independently.

    ``history`` holds the pre-test absolute residuals, one column per age.
    ``actuals`` may only be consumed after the matching interval is emitted.
    """
    pf = np.asarray(point_forecasts, dtype=float)
    act = np.asarray(actuals, dtype=float)
    hist = np.asarray(history, dtype=float)
    if pf.ndim != 2 or act.shape != pf.shape:
        raise InvalidInputError("point_forecasts and actuals must be matching 2-d arrays")
    if hist.ndim != 2 or hist.shape[1] != pf.shape[1]:
        raise InvalidInputError("history must have one column per age")
    if hist.shape[0] < 3:
        raise InsufficientDataError("need at least 3 rows of residual history per age")
    if np.any(hist < 0) or not np.all(np.isfinite(hist)):
        raise InvalidInputError("history residuals must be finite and nonnegative")
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must be in (0,1)")

    n_test, n_ages = pf.shape
    level = 1.0 - alpha
    qhat = np.empty((n_test, n_ages))
    orders = np.empty((n_test, n_ages), dtype=int)

    for j in range(n_ages):
        r = list(hist[:, j])
        for ell in range(n_test):
            if not math.isfinite(act[ell, j]):
                label = years[ell] if years is not None else ell
                raise StreamError(f"missing actual at year {label}")
            arr = np.array(r)
            p = select_ar_order(arr, level, p_max=p_max)
            model = fit_quantile_ar(arr, p, level)
            lags = arr[-model.order :][::-1] if model.order else np.empty(0)
            qhat[ell, j] = predict_quantile(model, lags)
            orders[ell, j] = model.order
            r.append(abs(act[ell, j] - pf[ell, j]))

    return SequentialResult(
        point=pf, lower=pf - qhat, upper=pf + qhat, qhat=qhat, orders=orders
    )
