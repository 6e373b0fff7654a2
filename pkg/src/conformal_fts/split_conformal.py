"""Split conformal calibration of scaled residual bands.

Validation residual curves are summarized pointwise into a scale function
gamma_h(u); a scalar multiplier xi is then calibrated so that the simultaneous
band covers at least a 1-alpha fraction of the validation curves.  The
calibrated xi is the exact order-statistic limit of a grid search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import (
    AlignmentError,
    InsufficientDataError,
    InvalidInputError,
    NotCalibrableError,
)
from .ets import CurveForecast
from .series import FunctionalSeries

STAT_KINDS = ("sd", "iqr", "mad", "quantile")


@dataclass(frozen=True)
class ResidualSet:
    """Validation residual curves (actual minus forecast) for one horizon."""

    horizon: int
    residuals: np.ndarray  # (M, n_ages)
    origin_years: np.ndarray
    target_years: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=float)
        if r.ndim != 2 or r.shape[0] < 1:
            raise InvalidInputError("residuals must be a nonempty (M, n_ages) matrix")
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("residuals must be finite")
        object.__setattr__(self, "residuals", r)

    @property
    def n_curves(self) -> int:
        return self.residuals.shape[0]


@dataclass(frozen=True)
class ScaleFunction:
    """Pointwise residual-spread statistic gamma_h(u), nonnegative by construction."""

    stat_kind: str
    gamma: np.ndarray
    alpha: float | None = None  # used by the quantile kind only


def compute_residuals(actuals: FunctionalSeries, forecasts: list[CurveForecast], h: int) -> ResidualSet:
    """Residual curves at horizon ``h`` from per-origin forecasts, by target year."""
    rows = []
    for fc in forecasts:
        if fc.max_horizon < h:
            continue
        target = fc.origin_year + h
        if target < actuals.first_year or target > actuals.last_year:
            raise AlignmentError(f"no actual curve for target year {target}")
        rows.append((target, fc.origin_year, actuals.curve(target) - fc.curve_at(h)))
    if not rows:
        raise InsufficientDataError(f"no {h}-step forecasts supplied")
    rows.sort(key=lambda t: t[0])
    return ResidualSet(
        horizon=h,
        residuals=np.array([r for _, _, r in rows]),
        origin_years=np.array([o for _, o, _ in rows]),
        target_years=np.array([t for t, _, _ in rows]),
    )


def scale_function(residuals: ResidualSet, stat_kind: str, alpha: float | None = None) -> ScaleFunction:
    """Pointwise sd / IQR / MAD of residuals, or the empirical (1-alpha)
    quantile of their absolute values (type-7 interpolation throughout)."""
    if stat_kind not in STAT_KINDS:
        raise InvalidInputError(f"stat_kind must be one of {STAT_KINDS}")
    eps = residuals.residuals
    M = residuals.n_curves
    if stat_kind == "quantile":
        if alpha is None or not 0.0 < alpha < 1.0:
            raise InvalidInputError("quantile scale needs alpha in (0,1)")
        gamma = np.quantile(np.abs(eps), 1.0 - alpha, axis=0)
    else:
        if M < 2:
            raise InsufficientDataError(f"{stat_kind} scale needs at least 2 residual curves")
        if stat_kind == "sd":
            gamma = eps.std(axis=0, ddof=1)
        elif stat_kind == "iqr":
            q1, q3 = np.quantile(eps, [0.25, 0.75], axis=0)
            gamma = q3 - q1
        else:  # mad
            gamma = np.median(np.abs(eps - np.median(eps, axis=0)), axis=0)
    return ScaleFunction(stat_kind=stat_kind, gamma=gamma, alpha=alpha)


def band_ecp(residuals: ResidualSet, scale: ScaleFunction, xi_lo: float, xi_hi: float) -> float:
    """Fraction of residual curves lying inside the band at every age simultaneously."""
    if xi_lo < 0 or xi_hi < 0:
        raise InvalidInputError("xi must be nonnegative")
    eps = residuals.residuals
    g = scale.gamma
    inside = (eps >= -xi_lo * g) & (eps <= xi_hi * g)
    return float(inside.all(axis=1).mean())


def _floored_gamma(gamma: np.ndarray) -> np.ndarray:
    top = float(gamma.max())
    floor = 1e-8 * top if top > 0 else 1e-12
    return np.maximum(gamma, floor)


def _order_statistic(reqs: np.ndarray, level: float) -> float:
    """k-th smallest requirement with k = ceil(level * M), capped at M."""
    M = reqs.size
    k = max(1, min(M, math.ceil(level * M - 1e-9)))
    val = float(np.sort(reqs)[k - 1])
    if not math.isfinite(val):
        raise NotCalibrableError("required order statistic is infinite")
    return val


def calibrate_xi(residuals: ResidualSet, scale: ScaleFunction, alpha: float) -> float:
    """Smallest symmetric multiplier with simultaneous band coverage >= 1-alpha.

    Computed exactly as an order statistic of the per-curve requirements
    max_u |eps(u)| / gamma(u); this is the limit of a grid search over xi.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must be in (0,1)")
    g = _floored_gamma(scale.gamma)
    eps = residuals.residuals
    reqs = np.max(np.abs(eps) / g, axis=1)
    xi = _order_statistic(reqs, 1.0 - alpha)
    # the division can lose an ulp against band_ecp's xi*gamma comparison;
    # nudge upward until the band itself certifies coverage
    target = math.ceil((1.0 - alpha) * reqs.size - 1e-9)
    while np.count_nonzero(np.all(np.abs(eps) <= xi * g, axis=1)) < min(target, reqs.size):
        xi = math.nextafter(xi, math.inf)
    return xi


def calibrate_xi_pair(residuals: ResidualSet, scale: ScaleFunction, alpha: float) -> tuple[float, float]:
    """Per-tail multipliers, each at level alpha/2: lower on (-eps)+, upper on eps+."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError("alpha must be in (0,1)")
    g = _floored_gamma(scale.gamma)
    eps = residuals.residuals
    up = np.max(np.maximum(eps, 0.0) / g, axis=1)
    lo = np.max(np.maximum(-eps, 0.0) / g, axis=1)
    level = 1.0 - alpha / 2.0
    xi_lo = _order_statistic(lo, level)
    xi_hi = _order_statistic(up, level)
    # same ulp guard as calibrate_xi, per tail
    target = min(math.ceil(level * eps.shape[0] - 1e-9), eps.shape[0])
    while np.count_nonzero(np.all(-eps <= xi_lo * g, axis=1)) < target:
        xi_lo = math.nextafter(xi_lo, math.inf)
    while np.count_nonzero(np.all(eps <= xi_hi * g, axis=1)) < target:
        xi_hi = math.nextafter(xi_hi, math.inf)
    return xi_lo, xi_hi


def isotonic_smooth_xi(xi_by_h) -> np.ndarray:
    """L2 isotonic regression (pool-adjacent-violators), nondecreasing output."""
    x = np.asarray(xi_by_h, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("need a nonempty 1-d sequence")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise InvalidInputError("inputs must be finite and nonnegative")
    # blocks of (mean, weight), merged while decreasing
    means = []
    weights = []
    for v in x:
        means.append(float(v))
        weights.append(1.0)
        while len(means) > 1 and means[-2] > means[-1]:
            m = (means[-2] * weights[-2] + means[-1] * weights[-1]) / (weights[-2] + weights[-1])
            w = weights[-2] + weights[-1]
            means = means[:-2] + [m]
            weights = weights[:-2] + [w]
    out = np.empty_like(x)
    i = 0
    for m, w in zip(means, weights):
        out[i : i + int(w)] = m
        i += int(w)
    return out


def predict_interval_split(
    forecast: np.ndarray, scale: ScaleFunction, xi_lo: float, xi_hi: float
) -> tuple[np.ndarray, np.ndarray]:
    """Band around a point forecast: [X - xi_lo * gamma, X + xi_hi * gamma]."""
    if xi_lo < 0 or xi_hi < 0:
        raise InvalidInputError("xi must be nonnegative")
    forecast = np.asarray(forecast, dtype=float)
    return forecast - xi_lo * scale.gamma, forecast + xi_hi * scale.gamma


@dataclass
class SplitCalibration:
    """Per-horizon scale functions and calibrated multipliers at one alpha."""

    alpha: float
    stat_kind: str
    tuning: str  # "single" | "double"
    scales: dict[int, ScaleFunction] = field(default_factory=dict)
    xi_lo: dict[int, float] = field(default_factory=dict)
    xi_hi: dict[int, float] = field(default_factory=dict)
    achieved_ecp: dict[int, float] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)

    @property
    def horizons(self) -> list[int]:
        return sorted(self.xi_lo)

    def interval(self, forecast: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray]:
        if h not in self.xi_lo:
            raise NotCalibrableError(f"horizon {h} was not calibrated: {self.failures.get(h, 'missing')}")
        return predict_interval_split(forecast, self.scales[h], self.xi_lo[h], self.xi_hi[h])


def calibrate_split(
    residual_sets: dict[int, ResidualSet],
    stat_kind: str,
    alpha: float,
    tuning: str = "single",
    isotonic: bool = False,
) -> SplitCalibration:
    """Run the full band calibration per horizon, optionally smoothing the
    multipliers to be nondecreasing in the horizon."""
    if tuning not in ("single", "double"):
        raise InvalidInputError("tuning must be 'single' or 'double'")
    if not residual_sets:
        raise NotCalibrableError("no residual sets supplied")
    cal = SplitCalibration(alpha=alpha, stat_kind=stat_kind, tuning=tuning)
    for h in sorted(residual_sets):
        rset = residual_sets[h]
        try:
            scale = scale_function(rset, stat_kind, alpha=alpha)
            if tuning == "single":
                xi = calibrate_xi(rset, scale, alpha)
                lo = hi = xi
            else:
                lo, hi = calibrate_xi_pair(rset, scale, alpha)
        except (InsufficientDataError, NotCalibrableError) as exc:
            cal.failures[h] = str(exc)
            continue
        cal.scales[h] = scale
        cal.xi_lo[h] = lo
        cal.xi_hi[h] = hi
    if isotonic and cal.horizons:
        hs = cal.horizons
        lo_s = isotonic_smooth_xi([cal.xi_lo[h] for h in hs])
        hi_s = isotonic_smooth_xi([cal.xi_hi[h] for h in hs])
        for i, h in enumerate(hs):
            cal.xi_lo[h] = float(lo_s[i])
            cal.xi_hi[h] = float(hi_s[i])
    for h in cal.horizons:
        cal.achieved_ecp[h] = band_ecp(residual_sets[h], cal.scales[h], cal.xi_lo[h], cal.xi_hi[h])
    return cal


class SplitConformalCalibrator(BaseEstimator):
    """sklearn-style facade: fit on per-horizon residual sets, then emit bands."""

    def __init__(self, alpha: float = 0.2, stat_kind: str = "sd",
                 tuning: str = "single", isotonic: bool = False):
        self.alpha = alpha
        self.stat_kind = stat_kind
        self.tuning = tuning
        self.isotonic = isotonic

    def fit(self, residual_sets: dict[int, ResidualSet], y=None):
        self.calibration_ = calibrate_split(
            residual_sets, self.stat_kind, self.alpha, tuning=self.tuning, isotonic=self.isotonic
        )
        return self

    def predict_interval(self, forecast: np.ndarray, h: int) -> tuple[np.ndarray, np.ndarray]:
        if not hasattr(self, "calibration_"):
            raise InvalidInputError("calibrator is not fitted")
        return self.calibration_.interval(forecast, h)
