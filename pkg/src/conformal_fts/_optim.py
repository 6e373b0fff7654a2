"""Numba kernels for the two hot loops: ETS likelihood search and the
majorize-minimize quantile-regression solver.

Everything here is deterministic; there is no randomness and no shared state.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ETS_ANN = 0
ETS_AAN = 1
ETS_AADN = 2

_BIG = 1e300

ALPHA_MIN, ALPHA_MAX = 1e-4, 0.9999
BETA_MIN = 1e-4
PHI_MIN, PHI_MAX = 0.8, 0.98


@njit(cache=True)
def ets_filter(kind, x, y):
    """One-step filter; returns (sse, final_level, final_trend).

    Parameter layout: ANN (alpha, l0); AAN (alpha, beta, l0, b0);
    AAdN (alpha, beta, phi, l0, b0).  Out-of-bounds parameters yield a large
    finite penalty so the simplex search backs off.
    """
    n = y.size
    if kind == ETS_ANN:
        alpha = x[0]
        if alpha < ALPHA_MIN or alpha > ALPHA_MAX:
            return _BIG, 0.0, 0.0
        level = x[1]
        sse = 0.0
        for t in range(n):
            e = y[t] - level
            sse += e * e
            level = level + alpha * e
        return sse, level, 0.0

    alpha = x[0]
    beta = x[1]
    if alpha < ALPHA_MIN or alpha > ALPHA_MAX or beta < BETA_MIN or beta > alpha:
        return _BIG, 0.0, 0.0
    if kind == ETS_AAN:
        phi = 1.0
        level = x[2]
        trend = x[3]
    else:
        phi = x[2]
        if phi < PHI_MIN or phi > PHI_MAX:
            return _BIG, 0.0, 0.0
        level = x[3]
        trend = x[4]
    sse = 0.0
    for t in range(n):
        f = level + phi * trend
        e = y[t] - f
        sse += e * e
        level = f + alpha * e
        trend = phi * trend + beta * e
    return sse, level, trend


@njit(cache=True)
def _ets_sse(kind, x, y):
    sse, _, _ = ets_filter(kind, x, y)
    return sse


@njit(cache=True)
def nelder_mead_ets(kind, x0, step, y, maxiter):
    """Minimize the ETS SSE with a fixed, deterministic Nelder-Mead.

    The initial simplex uses absolute per-coordinate steps so the search is
    exactly shift-equivariant in the state coordinates.
    """
    n = x0.size
    m = n + 1
    simplex = np.empty((m, n))
    fvals = np.empty(m)
    for j in range(n):
        simplex[0, j] = x0[j]
    fvals[0] = _ets_sse(kind, simplex[0], y)
    for i in range(n):
        for j in range(n):
            simplex[i + 1, j] = x0[j]
        simplex[i + 1, i] = x0[i] + step[i]
        fvals[i + 1] = _ets_sse(kind, simplex[i + 1], y)

    xr = np.empty(n)
    xe = np.empty(n)
    xc = np.empty(n)
    centroid = np.empty(n)

    for _ in range(maxiter):
        order = np.argsort(fvals)
        simplex = simplex[order]
        fvals = fvals[order]
        if fvals[m - 1] - fvals[0] <= 1e-12 * (abs(fvals[0]) + 1e-12):
            spread = 0.0
            for i in range(1, m):
                for j in range(n):
                    d = abs(simplex[i, j] - simplex[0, j])
                    if d > spread:
                        spread = d
            if spread <= 1e-9:
                break
        for j in range(n):
            s = 0.0
            for i in range(m - 1):
                s += simplex[i, j]
            centroid[j] = s / (m - 1)
        for j in range(n):
            xr[j] = centroid[j] + (centroid[j] - simplex[m - 1, j])
        fr = _ets_sse(kind, xr, y)
        if fr < fvals[0]:
            for j in range(n):
                xe[j] = centroid[j] + 2.0 * (centroid[j] - simplex[m - 1, j])
            fe = _ets_sse(kind, xe, y)
            if fe < fr:
                simplex[m - 1] = xe
                fvals[m - 1] = fe
            else:
                simplex[m - 1] = xr
                fvals[m - 1] = fr
        elif fr < fvals[m - 2]:
            simplex[m - 1] = xr
            fvals[m - 1] = fr
        else:
            if fr < fvals[m - 1]:
                for j in range(n):
                    xc[j] = centroid[j] + 0.5 * (xr[j] - centroid[j])
            else:
                for j in range(n):
                    xc[j] = centroid[j] + 0.5 * (simplex[m - 1, j] - centroid[j])
            fc = _ets_sse(kind, xc, y)
            if fc < min(fr, fvals[m - 1]):
                simplex[m - 1] = xc
                fvals[m - 1] = fc
            else:
                for i in range(1, m):
                    for j in range(n):
                        simplex[i, j] = simplex[0, j] + 0.5 * (simplex[i, j] - simplex[0, j])
                    fvals[i] = _ets_sse(kind, simplex[i], y)

    best = int(np.argmin(fvals))
    return simplex[best].copy(), fvals[best]


@njit(cache=True)
def pinball_mean(e, tau):
    """Mean check loss of residuals ``e`` at level ``tau``."""
    s = 0.0
    for i in range(e.size):
        if e[i] >= 0.0:
            s += tau * e[i]
        else:
            s -= (1.0 - tau) * e[i]
    return s / e.size


@njit(cache=True)
def quantile_ar_fit(r, p, tau):
    """Fit an AR(p) quantile regression on a nonnegative residual series.

    Rows are (1, r[s-1], ..., r[s-p]) -> r[s] for s = p..len-1 (0-based).
    Majorize-minimize on an epsilon-smoothed check loss, epsilon annealed
    1e-2 -> 1e-8, warm-started from ridge least squares.  Returns (coeffs,
    exact mean pinball loss on the fitting rows).
    """
    L = r.size
    n = L - p
    d = p + 1
    X = np.empty((n, d))
    yv = np.empty(n)
    for i in range(n):
        X[i, 0] = 1.0
        for j in range(1, d):
            X[i, j] = r[p + i - j]
        yv[i] = r[p + i]

    G = X.T @ X
    ridge = 0.0
    for j in range(d):
        ridge += G[j, j]
    ridge = 1e-10 * (ridge / d + 1.0)
    A = G.copy()
    for j in range(d):
        A[j, j] += ridge
    b = np.linalg.solve(A, X.T @ yv)

    shift = (tau - 0.5) * 2.0  # (2*tau - 1)
    xt1 = np.empty(d)
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += X[i, j]
        xt1[j] = s

    eps = 1e-2
    while eps >= 1e-8 * 0.999:
        for _ in range(60):
            # weighted normal equations of the majorizer
            Aw = np.zeros((d, d))
            rhs = np.zeros(d)
            for i in range(n):
                e = yv[i]
                for j in range(d):
                    e -= X[i, j] * b[j]
                w = 1.0 / (eps + abs(e))
                for j in range(d):
                    wx = w * X[i, j]
                    rhs[j] += wx * yv[i]
                    for k2 in range(j, d):
                        Aw[j, k2] += wx * X[i, k2]
            for j in range(d):
                for k2 in range(j):
                    Aw[j, k2] = Aw[k2, j]
                Aw[j, j] += ridge
            bn = np.linalg.solve(Aw, rhs + shift * xt1)
            delta = 0.0
            scale = 1.0
            for j in range(d):
                if abs(bn[j] - b[j]) > delta:
                    delta = abs(bn[j] - b[j])
                if abs(bn[j]) > scale:
                    scale = abs(bn[j])
            b = bn
            if delta <= 1e-13 * scale:
                break
        eps *= 0.1

    e = np.empty(n)
    for i in range(n):
        v = yv[i]
        for j in range(d):
            v -= X[i, j] * b[j]
        e[i] = v
    return b, pinball_mean(e, tau)
