"""Least-squares fit of regret curves to ``a * t**b + c``."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["FitResult", "fit_power_law", "B_STARTS", "B_RANGE"]

B_STARTS = tuple(round(0.1 * k, 1) for k in range(1, 11))
# exponents outside this bracket are reported as unidentifiable
B_RANGE = (1e-3, 5.0)
MAX_POINTS = 2000
SUBSAMPLE_ABOVE = 100_000


@dataclass(frozen=True)
class FitResult:
    a: float
    b: float
    c: float
    residual_norm: float
    converged: bool
    degenerate: bool

    def predict(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.degenerate and math.isnan(self.b):
            return np.full_like(t, self.c)
        return self.a * t**self.b + self.c


def _lm(u, z, theta, max_iter=500):
    """Damped Gauss-Newton (Levenberg-Marquardt) on ``A u^b + c``."""
    logu = np.log(u)

    def resid(th):
        return th[0] * u ** th[1] + th[2] - z

    r = resid(theta)
    cost = r @ r
    mu = 1e-3
    converged = False
    for _ in range(max_iter):
        ub = u ** theta[1]
        J = np.column_stack([ub, theta[0] * ub * logu, np.ones_like(u)])
        JtJ = J.T @ J
        g = J.T @ r
        while True:
            A = JtJ + mu * np.diag(np.diag(JtJ) + 1e-300)
            try:
                step = np.linalg.solve(A, -g)
            except np.linalg.LinAlgError:
                step = np.full(3, np.nan)
            cand = theta + step
            r_new = resid(cand) if np.all(np.isfinite(cand)) else None
            if r_new is not None and np.all(np.isfinite(r_new)) and r_new @ r_new <= cost:
                break
            mu *= 10.0
            if mu > 1e20:
                return theta, cost, converged
        small_step = np.all(np.abs(step) <= 1e-13 * (np.abs(theta) + 1e-13))
        new_cost = r_new @ r_new
        flat = cost - new_cost <= 1e-15 * cost
        theta, r, cost = cand, r_new, new_cost
        mu = max(mu * 0.3, 1e-12)
        if small_step or flat or cost == 0.0:
            converged = True
            break
    return theta, cost, converged


def fit_power_law(series, t=None) -> FitResult:
    """Fit ``y_t ~ a t^b + c``.

    Multi-start over the exponents in :data:`B_STARTS`; for each start ``a``
    and ``c`` come from linear least squares, then all three parameters are
    refined by damped Gauss-Newton.  The best local optimum wins.  Series
    longer than 100k points are thinned to 2000 log-spaced samples.

    ``degenerate`` is set for constant data (``b`` is then nan) and when the
    exponent leaves :data:`B_RANGE`.
    """
    y = np.asarray(series, dtype=np.float64).ravel()
    if y.size < 8:
        raise ValueError(f"need at least 8 points, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise ValueError("series contains NaN or inf")
    t = np.arange(1, y.size + 1, dtype=np.float64) if t is None else np.asarray(t, dtype=np.float64).ravel()
    if t.shape != y.shape or np.any(t <= 0):
        raise ValueError("t must be positive and match the series length")
    if y.size > SUBSAMPLE_ABOVE:
        idx = np.unique(np.geomspace(1, y.size, MAX_POINTS).round().astype(np.int64)) - 1
        t, y = t[idx], y[idx]

    ysc = float(np.max(np.abs(y)))
    if np.ptp(y) <= 1e-12 * max(1.0, ysc):
        c = float(y.mean())
        return FitResult(0.0, math.nan, c, float(np.linalg.norm(y - c)), True, True)

    s = float(t.max())
    u = t / s
    z = y / ysc
    best = None
    for b0 in B_STARTS:
        X = np.column_stack([u**b0, np.ones_like(u)])
        (A0, c0), *_ = np.linalg.lstsq(X, z, rcond=None)
        theta, cost, ok = _lm(u, z, np.array([A0, b0, c0]))
        if best is None or cost < best[1]:
            best = (theta, cost, ok)
    (A, b, c), _, ok = best
    a = A * ysc / s**b
    c = c * ysc
    resid = a * t**b + c - y
    degenerate = bool(not (B_RANGE[0] < b < B_RANGE[1]) or abs(A) < 1e-12)
    return FitResult(float(a), float(b), float(c), float(np.linalg.norm(resid)), bool(ok), degenerate)
