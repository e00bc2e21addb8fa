"""Closed-form CUSUM performance bounds and the tuned (h, alpha) choice.

All binomial-times-power terms are evaluated in log space through
``math.lgamma`` so constants as small as 1e-50 keep full relative precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LambdaUndefinedError",
    "BoundBranchError",
    "Theorem3Constants",
    "MgfRoots",
    "Prop1Bounds",
    "TunedParams",
    "c1_constant",
    "log_c1_constant",
    "c2_constant",
    "theorem3_constants",
    "theorem3_bounds",
    "compute_mgf_roots",
    "prop1_bounds",
    "tuned_params",
]

_INT_TOL = 1e-9


class LambdaUndefinedError(ValueError):
    """The grid gap lambda is undefined (every distance to the grid is 0)."""

    def __init__(self, msg="λ undefined: every mean +/- epsilon sits on the 1/M grid"):
        super().__init__(msg)


class BoundBranchError(ValueError):
    """Inputs fall outside the branch a bound applies to."""


@dataclass(frozen=True)
class Theorem3Constants:
    C1: float
    C2: float
    C1_minus: float
    C1_plus: float
    # natural logs of the C1 values; finite even where C1 underflows to 0
    log_C1: float
    log_C1_minus: float
    log_C1_plus: float


@dataclass(frozen=True)
class MgfRoots:
    r_minus: float
    r_plus: float
    r_hat_minus: float
    r_hat_plus: float

    @property
    def r(self) -> float:
        return min(self.r_minus, self.r_plus)


@dataclass(frozen=True)
class Prop1Bounds:
    """``branch`` is ``"conditional"`` when |u0_hat - u0| < epsilon.  In the
    ``"restart"`` branch only ``delay_bound`` is set and it bounds the run
    length before the detector restarts."""

    delay_bound: float
    false_alarm_bound: float | None
    branch: str
    roots: MgfRoots | None = None


@dataclass(frozen=True)
class TunedParams:
    h: float
    alpha: float
    alpha_raw: float
    alpha_clamped: bool


def _snap(x: float) -> float:
    # 2*0.1*100 evaluates to 20.000000000000004; floor/ceil need the integer
    r = round(x)
    return float(r) if abs(x - r) < _INT_TOL else x


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_c1_side(eps: float, M: int, k: int, denom: float) -> float:
    """log C1-side, i.e. log(log(1 + e^x)), accurate for very negative x."""
    x = math.log(4 * eps / denom) + _log_binom(M, k) + M * math.log(2 * eps)
    if x > -30.0:
        return math.log(float(np.logaddexp(0.0, x)))
    # log1p(e^x) = e^x (1 - e^x/2 + ...)
    return x + math.log1p(-0.5 * math.exp(x))


def _check_eps_M(eps, M):
    if not 0.0 < eps < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {eps}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")


def log_c1_constant(epsilon: float, M: int) -> tuple[float, float, float]:
    """Natural logs of ``(C1, C1_minus, C1_plus)``.  For large M the constants
    themselves fall below the float64 range; their logs do not."""
    _check_eps_M(epsilon, M)
    M = int(M)
    x = _snap(2 * epsilon * M)
    lm = _log_c1_side(epsilon, M, math.floor(x), (1 - epsilon) ** 2)
    lp = _log_c1_side(epsilon, M, math.ceil(x), (1 + epsilon) ** 2)
    return min(lm, lp), lm, lp


def c1_constant(epsilon: float, M: int) -> tuple[float, float, float]:
    """``(C1, C1_minus, C1_plus)``; C1 does not depend on lambda.  Values
    below the float64 range come back as 0.0 (see :func:`log_c1_constant`)."""
    return tuple(math.exp(v) for v in log_c1_constant(epsilon, M))


def c2_constant(epsilon: float, M: int, lam: float | None) -> float:
    _check_eps_M(epsilon, M)
    if lam is None or not lam > 0 or math.isnan(lam):
        raise LambdaUndefinedError()
    return math.log(3.0) + 2.0 * math.exp(-2.0 * epsilon**2 * M) / lam


def theorem3_constants(epsilon: float, M: int, lam: float | None) -> Theorem3Constants:
    logs = log_c1_constant(epsilon, M)
    c1, c1m, c1p = (math.exp(v) for v in logs)
    return Theorem3Constants(c1, c2_constant(epsilon, M, lam), c1m, c1p, *logs)


def theorem3_bounds(epsilon: float, M: int, h: float, T: int, lam: float | None = None):
    """``(delay_bound, false_alarm_bound)``.  The delay bound needs lambda and
    is ``None`` without it; the false-alarm bound is ``inf`` when
    ``1 - 2 exp(-2 eps^2 M) <= 0``."""
    c1, _, _ = c1_constant(epsilon, M)
    shrink = 1.0 - 2.0 * math.exp(-2.0 * epsilon**2 * M)
    fa = 2.0 * T * math.exp(-c1 * h) / shrink if shrink > 0 else math.inf
    delay = None
    if lam is not None:
        delay = c2_constant(epsilon, M, lam) * (h + 1.0)
    return delay, fa


def _lambda_minus(r, u0, u0_hat, eps):
    # log E[exp(r s^-)] for a Bernoulli(u0) sample
    return np.logaddexp(-r + math.log(u0), math.log1p(-u0)) + r * (u0_hat - eps)


def _bisect_root(f, lo=1e-9, hi=50.0, tol=1e-12):
    while f(hi) <= 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("could not bracket the log-MGF root")
    if f(lo) >= 0.0:
        raise ArithmeticError("log-MGF is not negative near zero")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _lower_pair(u0, u0_hat, eps):
    r_hat = math.log((u0 / (u0_hat - eps) - u0) / (1.0 - u0))
    r = _bisect_root(lambda r: _lambda_minus(r, u0, u0_hat, eps))
    return r, r_hat


def compute_mgf_roots(u0: float, u0_hat: float, epsilon: float) -> MgfRoots:
    """Nonzero roots of the lower/upper walk log-MGFs and their closed-form
    lower bounds (the stationary points).

    The upper-walk quantities are computed as the lower-walk ones of the
    complemented means, which is algebraically identical and makes the
    complement symmetry exact.
    """
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if not 2 * epsilon < u0 < 1 - 2 * epsilon:
        raise ValueError(f"u0 must lie in (2 eps, 1 - 2 eps) = ({2 * epsilon}, {1 - 2 * epsilon}), got {u0}")
    if not abs(u0_hat - u0) < epsilon:
        raise ValueError(f"|u0_hat - u0| must be < epsilon, got {abs(u0_hat - u0)}")
    r_m, rh_m = _lower_pair(u0, u0_hat, epsilon)
    r_p, rh_p = _lower_pair(1.0 - u0, 1.0 - u0_hat, epsilon)
    return MgfRoots(r_m, r_p, rh_m, rh_p)


def prop1_bounds(u0_hat: float, u0: float, u1: float, epsilon: float, h: float, T: int) -> Prop1Bounds:
    """Detection-delay and false-alarm bounds given the burn-in estimate."""
    dev = abs(u0_hat - u0)
    if dev > epsilon:
        return Prop1Bounds((h + 1.0) / (dev - epsilon), None, "restart")
    if dev == epsilon:
        raise BoundBranchError("|u0_hat - u0| == epsilon: neither branch applies")
    shift = abs(u1 - u0_hat) - epsilon
    if not shift > 0:
        raise BoundBranchError(f"|u1 - u0_hat| must exceed epsilon (got margin {shift})")
    try:
        roots = compute_mgf_roots(u0, u0_hat, epsilon)
    except ArithmeticError as exc:
        # |u0_hat - u0| within rounding of epsilon: the walk has no drift
        raise BoundBranchError(f"no usable log-MGF root: {exc}") from None
    fa = 2.0 * T * math.exp(-roots.r * h)
    return Prop1Bounds((h + 1.0) / shift, fa, "conditional", roots)


def tuned_params(T: int, gamma_T: int, K: int, C1: float, C2: float) -> TunedParams:
    """Threshold and exploration rate that minimise the CUSUM-UCB regret bound
    when T and the number of breakpoints are known."""
    if not 1 <= gamma_T < T:
        raise ValueError(f"need 1 <= gamma_T < T, got gamma_T={gamma_T}, T={T}")
    if not (C1 >= 0 and C2 > 0):
        raise ValueError("C1 must be nonnegative and C2 positive")
    log_ratio = math.log(T / gamma_T)
    if C1 == 0.0:
        # C1 underflowed: both formulas diverge
        h = alpha_raw = math.inf
    else:
        h = log_ratio / C1
        alpha_raw = K * math.sqrt(C2 * gamma_T / (C1 * T) * log_ratio)
    clamped = not alpha_raw < 1.0
    if clamped:
        warnings.warn(f"tuned alpha {alpha_raw:.4g} >= 1; clamped below 1", RuntimeWarning, stacklevel=2)
    alpha = math.nextafter(1.0, 0.0) if clamped else alpha_raw
    return TunedParams(h, alpha, alpha_raw, clamped)
