"""Exponential smoothing: filter oracle, model selection, forecast shapes."""

import numpy as np
import pytest

from conformal_fts import FtsForecaster, fit_ets, forecast_ets, synth_generate
from conformal_fts.data_io import SynthSpec
from conformal_fts.exceptions import InsufficientDataError, InvalidInputError


def oracle_filter(fit, y):
    """Error-correction recursion re-done in plain Python from the fitted
    parameters; returns the final level/trend."""
    level, trend = fit.l0, fit.b0
    for obs in y:
        if fit.model_kind == "ANN":
            mu = level
            err = obs - mu
            level = level + fit.alpha * err
        elif fit.model_kind == "AAN":
            mu = level + trend
            err = obs - mu
            level = level + trend + fit.alpha * err
            trend = trend + fit.beta * err
        else:  # AAdN
            mu = level + fit.phi * trend
            err = obs - mu
            level = level + fit.phi * trend + fit.alpha * err
            trend = fit.phi * trend + fit.beta * err
    return level, trend


def seeded_series(seed, n=60, trend=0.0):
    rng = np.random.default_rng(seed)
    return trend * np.arange(n) + rng.standard_normal(n)


class TestFilterOracle:
    @pytest.mark.parametrize("seed", range(4))
    def test_final_state_matches_recursion(self, seed):
        y = seeded_series(seed, trend=0.3)
        fit = fit_ets(y)
        level, trend = oracle_filter(fit, y)
        assert fit.level == pytest.approx(level, abs=1e-10)
        assert fit.trend == pytest.approx(trend, abs=1e-10)

    def test_exact_linear_trend(self):
        # noiseless line: AAN nails it, h-step forecast continues the line
        fit = fit_ets(np.arange(1.0, 21.0))
        f = forecast_ets(fit, 5)
        assert np.allclose(f, [21, 22, 23, 24, 25], atol=1e-4)

    def test_constant_series(self):
        fit = fit_ets(np.full(12, 7.5))
        assert np.allclose(forecast_ets(fit, 4), 7.5)

    def test_damped_forecast_geometric_increments(self):
        fit = fit_ets(seeded_series(1, trend=0.5), family=("AAdN",))
        f = forecast_ets(fit, 6)
        inc = np.diff(f)
        # increments decay by phi each step: level + b*(phi + phi^2 + ...)
        ratios = inc[1:] / inc[:-1]
        assert np.allclose(ratios, fit.phi, atol=1e-8)


class TestInformationCriteria:
    def test_aicc_penalty_identity(self):
        # AICc = AIC + 2q(q+1)/(n-q-1); q = 3 for ANN, 5 for AAN, 6 for AAdN
        y = seeded_series(2, n=30)
        for family, q in (("ANN", 3), ("AAN", 5), ("AAdN", 6)):
            fit = fit_ets(y, family=(family,))
            assert fit.aicc - fit.aic == pytest.approx(
                2 * q * (q + 1) / (fit.n - q - 1), rel=1e-12
            )

    def test_aicc_infinite_at_minimum_length(self):
        # n = 4 leaves no AICc degrees of freedom for AAN/AAdN; selection
        # still works (falls back to AIC ordering)
        fit = fit_ets(np.array([1.0, 2.0, 1.5, 2.5]))
        assert np.isfinite(fit.aic)

    def test_loglik_aic_identity(self):
        fit = fit_ets(seeded_series(3))
        q = {"ANN": 3, "AAN": 5, "AAdN": 6}[fit.model_kind]
        assert fit.aic == pytest.approx(-2.0 * fit.loglik + 2.0 * q, rel=1e-12)


class TestSelection:
    def test_white_noise_prefers_no_trend(self):
        hits = sum(fit_ets(seeded_series(s)).model_kind == "ANN" for s in range(10))
        assert hits >= 8

    def test_strong_trend_prefers_trend_model(self):
        hits = sum(
            fit_ets(seeded_series(s, trend=1.0)).model_kind in ("AAN", "AAdN")
            for s in range(10)
        )
        assert hits >= 8

    def test_shift_equivariance(self):
        y = seeded_series(4)
        a = fit_ets(y)
        b = fit_ets(y + 1000.0)
        assert a.model_kind == b.model_kind
        assert a.alpha == pytest.approx(b.alpha, abs=1e-9)
        fa, fb = forecast_ets(a, 4), forecast_ets(b, 4)
        assert np.allclose(fb - fa, 1000.0, atol=1e-6)

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            fit_ets(np.array([1.0, 2.0, 3.0]))

    def test_unknown_family(self):
        with pytest.raises(InvalidInputError):
            fit_ets(seeded_series(5), family=("MAM",))


class TestForecastShape:
    def test_prefix_consistency(self):
        fit = fit_ets(seeded_series(6, trend=0.2))
        assert np.array_equal(forecast_ets(fit, 3), forecast_ets(fit, 5)[:3])

    def test_invalid_horizon(self):
        fit = fit_ets(seeded_series(7))
        with pytest.raises(InvalidInputError):
            forecast_ets(fit, 0)


class TestForecasterEstimator:
    def test_fit_predict_shapes(self):
        s = synth_generate(SynthSpec(n_years=40, n_ages=12, k_true=2, seed=0))
        est = FtsForecaster(k=2)
        est.fit(s)
        fc = est.predict(h=3)
        assert fc.curves.shape == (3, 12)
        assert fc.origin_year == s.years[-1]

    def test_get_params_roundtrip(self):
        est = FtsForecaster(k="evr", tau=1e-3)
        est2 = FtsForecaster(**est.get_params())
        assert est2.get_params() == est.get_params()
