"""Functional PCA against brute-force linear-algebra oracles."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conformal_fts import (
    AgeGrid,
    FunctionalPCA,
    FunctionalSeries,
    covariance_matrix,
    fpca,
    mean_curve,
    reconstruct,
    select_k_evr,
)
from conformal_fts.exceptions import DegenerateSpectrumWarning, InsufficientDataError


def random_series(seed, n_years=30, n_ages=5, uniform_grid=True):
    rng = np.random.default_rng(seed)
    if uniform_grid:
        ages = np.arange(float(n_ages))
    else:
        ages = np.cumsum(rng.uniform(0.5, 2.0, n_ages))
    grid = AgeGrid(ages)
    vals = rng.standard_normal((n_years, n_ages))
    return FunctionalSeries(grid, np.arange(2000, 2000 + n_years), vals)


def brute_force_eig(mat):
    """Characteristic-polynomial eigendecomposition, checked independently of
    numpy's symmetric solver (only viable at tiny sizes)."""
    eigvals = np.sort(np.roots(np.poly(mat)).real)[::-1]
    vecs = []
    for lam in eigvals:
        a = mat - lam * np.eye(mat.shape[0])
        _, _, vt = np.linalg.svd(a)
        vecs.append(vt[-1])
    return eigvals, np.array(vecs).T


class TestMeanAndCovariance:
    def test_mean_curve(self):
        s = random_series(0)
        assert np.allclose(mean_curve(s), s.values.mean(axis=0))

    def test_covariance_is_sample_covariance(self):
        s = random_series(1)
        c = covariance_matrix(s)
        assert np.allclose(c, np.cov(s.values, rowvar=False))
        assert np.allclose(c, c.T)


class TestEigOracle:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force_small(self, seed):
        s = random_series(seed, n_years=40, n_ages=4)
        model = fpca(s, k=4)
        w = s.grid.quad_weights()
        c = covariance_matrix(s)
        sw = np.sqrt(w)
        lam_bf, _ = brute_force_eig(sw[:, None] * c * sw[None, :])
        assert np.allclose(model.eigenvalues[:4], lam_bf, atol=1e-8)

    def test_eigenfunctions_orthonormal_under_quadrature(self):
        s = random_series(2, n_ages=6, uniform_grid=False)
        model = fpca(s, k=4)
        w = s.grid.quad_weights()
        gram = model.eigenfunctions @ (w[:, None] * model.eigenfunctions.T)
        assert np.allclose(gram, np.eye(4), atol=1e-10)

    def test_total_variance_equals_weighted_trace(self):
        s = random_series(3, n_ages=7)
        model = fpca(s, k=3)
        w = s.grid.quad_weights()
        trace = float(np.diag(covariance_matrix(s)) @ w)
        assert model.eigenvalues.sum() == pytest.approx(trace, rel=1e-8)

    def test_score_variance_equals_eigenvalue(self):
        s = random_series(4, n_years=60, n_ages=5)
        model = fpca(s, k=3)
        for k in range(3):
            assert np.var(model.scores[:, k], ddof=1) == pytest.approx(
                model.eigenvalues[k], rel=1e-8
            )

    def test_full_rank_reconstruction(self):
        s = random_series(5, n_ages=6)
        model = fpca(s, k=6)
        rec = reconstruct(model, model.scores)
        err = np.linalg.norm(rec - s.values) / np.linalg.norm(s.values)
        assert err <= 1e-8

    def test_deterministic(self):
        s = random_series(6)
        a, b = fpca(s, k=3), fpca(s, k=3)
        assert np.array_equal(a.eigenfunctions, b.eigenfunctions)
        assert np.array_equal(a.scores, b.scores)

    def test_sign_convention(self):
        s = random_series(7)
        model = fpca(s, k=3)
        for row in model.eigenfunctions:
            assert row[np.argmax(np.abs(row))] > 0


def brute_force_evr(lams, tau, k_max):
    best_k, best_v = 1, np.inf
    for k in range(1, min(k_max, len(lams) - 1) + 1):
        v = lams[k] / lams[k - 1] if lams[k - 1] > tau else 1.0
        if v < best_v - 1e-15:
            best_k, best_v = k, v
    return best_k


class TestEvr:
    def test_clear_gap(self):
        assert select_k_evr(np.array([10.0, 5.0, 0.01, 0.005])) == 2

    def test_degenerate_spectrum_warns(self):
        with pytest.warns(DegenerateSpectrumWarning):
            k = select_k_evr(np.array([1e-5, 1e-6]), tau=1e-3)
        assert k == 1

    @given(st.integers(0, 10_000))
    @settings(max_examples=200, deadline=None)
    def test_agrees_with_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 11))
        lams = np.sort(rng.uniform(0, 2, n))[::-1]
        if rng.random() < 0.3:
            lams = lams * 1e-4  # exercise the sub-tau branch
        tau = 1e-3
        k_max = n - 1
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            got = select_k_evr(lams, tau=tau, k_max=k_max)
        assert got == brute_force_evr(lams, tau, k_max)


class TestEstimatorApi:
    def test_fit_transform_inverse_roundtrip(self):
        s = random_series(8, n_ages=5)
        est = FunctionalPCA(k=5)
        scores = est.fit_transform(s.values)
        rec = est.inverse_transform(scores)
        assert np.allclose(rec, s.values, atol=1e-8)

    def test_get_params(self):
        est = FunctionalPCA(k=3, tau=1e-2)
        params = est.get_params()
        assert params["k"] == 3 and params["tau"] == 1e-2

    def test_too_few_years(self):
        grid = AgeGrid(np.arange(3.0))
        s = FunctionalSeries(grid, np.array([2000, 2001]), np.zeros((2, 3)))
        with pytest.raises(InsufficientDataError):
            fpca(s, k=1)
