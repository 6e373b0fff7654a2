"""Functional principal component analysis on a discrete grid.

The covariance operator is discretized with trapezoid quadrature weights, so
eigenfunctions are orthonormal under the weighted inner product and scores are
weighted projections of the centered curves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import DegenerateSpectrumWarning, InsufficientDataError, InvalidInputError
from .series import AgeGrid, FunctionalSeries

DEFAULT_EVR_TAU = 1e-3


def mean_curve(series: FunctionalSeries) -> np.ndarray:
    """Pointwise arithmetic mean curve over years."""
    if series.n_years < 1:
        raise InvalidInputError("empty series")
    return series.values.mean(axis=0)


def covariance_matrix(series: FunctionalSeries) -> np.ndarray:
    """Sample covariance of the curves, (n-1) denominator, symmetric."""
    if series.n_years < 2:
        raise InsufficientDataError("covariance needs at least 2 curves")
    centered = series.values - series.values.mean(axis=0)
    cov = centered.T @ centered / (series.n_years - 1)
    return (cov + cov.T) / 2.0


def select_k_evr(eigenvalues: np.ndarray, tau: float = DEFAULT_EVR_TAU, k_max: int | None = None) -> int:
    """Pick the truncation order by the adjacent-eigenvalue-ratio criterion.

    Minimizes ``(lam[k+1]/lam[k]) * 1{lam[k] > tau} + 1{lam[k] < tau}`` over
    ``1 <= k <= k_max``, ties broken by the smallest k.  A spectrum entirely at
    or below ``tau`` yields K=1 with a :class:`DegenerateSpectrumWarning`.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size < 2:
        raise InvalidInputError("need at least 2 eigenvalues")
    if np.any(lam < -1e-10 * max(lam[0], 1.0)) or np.any(np.diff(lam) > 1e-10 * max(lam[0], 1.0)):
        raise InvalidInputError("eigenvalues must be nonincreasing and nonnegative")
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    if k_max is None:
        k_max = lam.size - 1
    if not 1 <= k_max <= lam.size - 1:
        raise InvalidInputError(f"k_max must be in 1..{lam.size - 1}")
    if lam[0] <= tau:
        warnings.warn("all eigenvalues at or below tau; returning K=1", DegenerateSpectrumWarning)
        return 1
    crit = np.empty(k_max)
    for k in range(1, k_max + 1):
        if lam[k - 1] > tau:
            crit[k - 1] = lam[k] / lam[k - 1]
        elif lam[k - 1] < tau:
            crit[k - 1] = 1.0
        else:
            crit[k - 1] = 0.0
    return int(np.argmin(crit)) + 1


@dataclass(frozen=True)
class FpcaModel:
    """Truncated Karhunen-Loeve decomposition of a functional series."""

    grid: AgeGrid
    years: np.ndarray
    mean: np.ndarray
    eigenvalues: np.ndarray  # full descending spectrum, length n_ages
    eigenfunctions: np.ndarray  # (k, n_ages)
    scores: np.ndarray  # (n_years, k)
    k: int
    quad_weights: np.ndarray

    @property
    def origin_year(self) -> int:
        return int(self.years[-1])

    def project(self, curves: np.ndarray) -> np.ndarray:
        """Scores of arbitrary curves: weighted inner products with the basis."""
        curves = np.atleast_2d(np.asarray(curves, dtype=float))
        return (curves - self.mean) @ (self.quad_weights[:, None] * self.eigenfunctions.T)


def fpca(
    series: FunctionalSeries,
    k: int | str = "evr",
    tau: float = DEFAULT_EVR_TAU,
    k_max: int | None = None,
) -> FpcaModel:
    """Weighted-covariance eigendecomposition with fixed-K or EVR truncation.

    ``k`` is either an integer (fixed truncation) or ``"evr"``.  The sign of
    each eigenfunction is fixed so that its entry of largest magnitude is
    positive, making the output deterministic.
    """
    n, J = series.n_years, series.n_ages
    if n < 3:
        raise InsufficientDataError("fpca needs at least 3 curves")
    w = series.grid.quad_weights()
    mu = mean_curve(series)
    cov = covariance_matrix(series)

    sqw = np.sqrt(w)
    sym = sqw[:, None] * cov * sqw[None, :]
    sym = (sym + sym.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]

    rank_cap = min(n - 1, J)
    if k == "evr":
        kk = select_k_evr(eigvals, tau=tau, k_max=min(k_max or rank_cap, J - 1))
    else:
        kk = int(k)
        if not 1 <= kk <= rank_cap:
            raise InvalidInputError(f"fixed K must be in 1..{rank_cap}")

    phi = (eigvecs[:, :kk] / sqw[:, None]).T  # (k, J), orthonormal under w
    flip = np.sign(phi[np.arange(kk), np.argmax(np.abs(phi), axis=1)])
    flip[flip == 0] = 1.0
    phi = phi * flip[:, None]

    centered = series.values - mu
    scores = centered @ (w[:, None] * phi.T)
    return FpcaModel(
        grid=series.grid,
        years=series.years,
        mean=mu,
        eigenvalues=eigvals,
        eigenfunctions=phi,
        scores=scores,
        k=kk,
        quad_weights=w,
    )


def reconstruct(model: FpcaModel, scores: np.ndarray) -> np.ndarray:
    """Curve implied by a score vector: mean plus the weighted basis expansion."""
    scores = np.asarray(scores, dtype=float)
    if scores.shape[-1:] != (model.k,) or scores.ndim > 2:
        raise InvalidInputError(f"expected {model.k} scores per row, got shape {scores.shape}")
    return model.mean + scores @ model.eigenfunctions


class FunctionalPCA(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper around :func:`fpca`.

    Rows of X are curves on a common grid.  ``transform`` returns scores,
    ``inverse_transform`` maps scores back to curves.
    """

    def __init__(self, k: int | str = "evr", tau: float = DEFAULT_EVR_TAU, k_max: int | None = None):
        self.k = k
        self.tau = tau
        self.k_max = k_max

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise InvalidInputError("X must be a 2d (years x ages) array")
        series = FunctionalSeries(AgeGrid.unit(X.shape[1]), np.arange(X.shape[0]), X)
        model = fpca(series, k=self.k, tau=self.tau, k_max=self.k_max)
        self.model_ = model
        self.mean_ = model.mean
        self.eigenvalues_ = model.eigenvalues
        self.components_ = model.eigenfunctions
        self.scores_ = model.scores
        self.k_ = model.k
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("FunctionalPCA is not fitted")

    def transform(self, X):
        self._check_fitted()
        return self.model_.project(np.asarray(X, dtype=float))

    def inverse_transform(self, scores):
        self._check_fitted()
        scores = np.atleast_2d(np.asarray(scores, dtype=float))
        return self.model_.mean + scores @ self.model_.eigenfunctions
