"""Online change detectors for Bernoulli streams: two-sided CUSUM with a
burn-in estimate of the pre-change mean, and the Page-Hinkley test (PHT)
which tracks the running mean instead.

Detectors only *report* alarms.  Resetting after an alarm is the caller's job.

Every detector keeps its state in one row of a float64 table so the same
jitted update routine serves the Python objects here and the compiled bandit
rollouts in :mod:`cdbandit.policy`.  Row layout::

    [0] k          samples seen since reset
    [1] sum        burn-in sum (CUSUM) or running sum (PHT)
    [2] mean       frozen burn-in mean u0_hat (CUSUM) or running mean (PHT)
    [3] g_plus
    [4] g_minus
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "DetectorParams",
    "CusumDetector",
    "PhtDetector",
    "DetectionMetrics",
    "make_detector",
    "cusum_step",
    "pht_step",
    "reset",
    "run_detector",
    "estimate_detection_metrics",
    "NO_DETECTOR",
    "CUSUM",
    "PHT",
    "PHT_GATED",
]

STATE_SIZE = 5
NO_DETECTOR, CUSUM, PHT, PHT_GATED = 0, 1, 2, 3


@njit(cache=True, error_model="numpy", inline="always")
def detector_push(det, row, kind, y, eps, M, h):
    """Feed one sample to detector ``row`` of the state table ``det``; returns
    True on alarm.  ``kind`` is one of the module constants.  Deviations are
    formed as ``(n*y - sum)/n`` so that a complemented 0/1 stream yields
    exactly negated steps."""
    if kind == NO_DETECTOR:
        return False
    k = det[row, 0] + 1.0
    det[row, 0] = k
    if kind == CUSUM:
        if k <= M:
            det[row, 1] += y
            if k == M:
                det[row, 2] = det[row, 1] / M
            return False
        d = (M * y - det[row, 1]) / M
    else:
        s = det[row, 1] + y
        det[row, 1] = s
        det[row, 2] = s / k
        if kind == PHT_GATED and k <= M:
            return False
        d = (k * y - s) / k
    gp = max(det[row, 3] + (d - eps), 0.0)
    gm = max(det[row, 4] + (-d - eps), 0.0)
    det[row, 3] = gp
    det[row, 4] = gm
    return gp >= h or gm >= h


@njit(cache=True, error_model="numpy", inline="always")
def detector_clear(det, row):
    for j in range(det.shape[1]):
        det[row, j] = 0.0


@njit(cache=True, error_model="numpy")
def _trajectory(stream, kind, eps, M, h, gp_out, gm_out):
    st = np.zeros((1, STATE_SIZE))
    first = -1
    for j in range(stream.shape[0]):
        if detector_push(st, 0, kind, stream[j], eps, M, h) and first < 0:
            first = j
        gp_out[j] = st[0, 3]
        gm_out[j] = st[0, 4]
    return first


@dataclass(frozen=True)
class DetectorParams:
    """Drift tolerance ``epsilon``, burn-in length ``M`` and threshold ``h``
    (``math.inf`` never alarms)."""

    epsilon: float
    M: int
    h: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError(f"epsilon must lie in (0, 0.5), got {self.epsilon}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M}")
        if not self.h >= 0.0:
            raise ValueError(f"h must be nonnegative or inf, got {self.h}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "h", float(self.h))


class _Detector:
    kind_code = NO_DETECTOR
    name = "none"

    def __init__(self, params: DetectorParams, table: np.ndarray | None = None, row: int = 0):
        self.params = params
        # ``table`` may be a policy's (K, STATE_SIZE) detector table
        self._table = np.zeros((1, STATE_SIZE)) if table is None else table
        self._row = row

    @property
    def _st(self) -> np.ndarray:
        return self._table[self._row]

    def state(self) -> np.ndarray:
        return self._st.copy()

    def update(self, y: float) -> bool:
        if not 0.0 <= y <= 1.0:
            raise ValueError(f"observation {y!r} outside [0, 1]")
        p = self.params
        return bool(detector_push(self._table, self._row, self.kind_code, float(y), p.epsilon, float(p.M), p.h))

    def reset(self) -> None:
        self._table[self._row] = 0.0

    def copy(self):
        return type(self)(self.params, self._st.copy()[None, :])

    @property
    def k(self) -> int:
        return int(self._st[0])

    @property
    def g_plus(self) -> float:
        return float(self._st[3])

    @property
    def g_minus(self) -> float:
        return float(self._st[4])

    def __repr__(self):
        return f"{type(self).__name__}(k={self.k}, g_plus={self.g_plus:.6g}, g_minus={self.g_minus:.6g})"


class CusumDetector(_Detector):
    """Two-sided CUSUM.  The first M samples only estimate ``u0_hat``; the
    walks g+/g- start moving at sample M+1."""

    kind_code = CUSUM
    name = "cusum"

    @property
    def burnin_sum(self) -> float:
        return float(self._st[1])

    @property
    def u0_hat(self) -> float:
        return float(self._st[2]) if self.k >= self.params.M else math.nan


class PhtDetector(_Detector):
    """Page-Hinkley variant: steps use the running mean including the
    current sample.  ``gated=True`` freezes the walks for the first M
    samples like CUSUM."""

    name = "pht"

    def __init__(self, params: DetectorParams, table=None, row: int = 0, gated: bool = False):
        super().__init__(params, table, row)
        self.gated = gated
        self.kind_code = PHT_GATED if gated else PHT

    def copy(self):
        return PhtDetector(self.params, self._st.copy()[None, :], gated=self.gated)

    @property
    def running_sum(self) -> float:
        return float(self._st[1])

    @property
    def y_hat(self) -> float:
        return float(self._st[2]) if self.k else math.nan


def make_detector(kind: str, params: DetectorParams, table=None, row: int = 0):
    if kind == "cusum":
        return CusumDetector(params, table, row)
    if kind == "pht":
        return PhtDetector(params, table, row)
    if kind == "pht-gated":
        return PhtDetector(params, table, row, gated=True)
    raise ValueError(f"unknown detector kind {kind!r}")


def cusum_step(state: CusumDetector, y: float) -> tuple[CusumDetector, bool]:
    """Functional form: returns an updated copy and the alarm flag."""
    new = state.copy()
    return new, new.update(y)


def pht_step(state: PhtDetector, y: float) -> tuple[PhtDetector, bool]:
    new = state.copy()
    return new, new.update(y)


def reset(state):
    """Fresh detector with the same parameters."""
    new = state.copy()
    new.reset()
    return new


def run_detector(kind: str, params: DetectorParams, stream) -> tuple[np.ndarray, np.ndarray, int]:
    """Walk trajectories ``(g_plus, g_minus)`` over ``stream`` without resets,
    plus the index of the first alarm (-1 if none)."""
    stream = np.ascontiguousarray(stream, dtype=np.float64)
    if stream.size and (stream.min() < 0.0 or stream.max() > 1.0):
        raise ValueError("stream values must lie in [0, 1]")
    code = make_detector(kind, params).kind_code
    gp = np.empty_like(stream)
    gm = np.empty_like(stream)
    first = _trajectory(stream, code, params.epsilon, float(params.M), params.h, gp, gm)
    return gp, gm, int(first)


# ---------------------------------------------------------------------------
# Monte-Carlo detection metrics


@dataclass
class DetectionMetrics:
    """Empirical detection delay and false-alarm count.

    ``mean_delay`` averages all trials with misses censored at
    ``T - change_slot``; ``misses`` says how many were censored and
    ``mean_delay_detected`` excludes them.  ``u0_at_change`` records the
    detector's reference mean when the change happened (nan if it was still
    burning in).
    """

    mean_delay: float
    false_alarms: float
    trials: int
    misses: int = 0
    mean_delay_detected: float = math.nan
    delays: np.ndarray = field(default=None, repr=False)
    false_alarm_counts: np.ndarray = field(default=None, repr=False)
    u0_at_change: np.ndarray = field(default=None, repr=False)


@njit(cache=True, error_model="numpy")
def _detection_trial(u, pre, post, change, kind, eps, M, h):
    # returns (delay, false_alarms, detected, u0 at change)
    st = np.zeros((1, STATE_SIZE))
    T = u.shape[0]
    fa = 0
    skipped = 0
    u0 = np.nan
    for j in range(T):
        t = j + 1
        after = change > 0 and t >= change
        if t == change:
            if kind == CUSUM:
                u0 = st[0, 2] if st[0, 0] >= M else np.nan
            else:
                u0 = st[0, 2] if st[0, 0] > 0 else np.nan
        y = 1.0 if u[j] < (post if after else pre) else 0.0
        burning = (kind == CUSUM or kind == PHT_GATED) and st[0, 0] < M
        alarm = detector_push(st, 0, kind, y, eps, M, h)
        if after:
            if burning:
                skipped += 1
            if alarm:
                return float(t - change - skipped), fa, True, u0
        elif alarm:
            fa += 1
            detector_clear(st, 0)
    if change > 0:
        return float(T - change), fa, False, u0
    return np.nan, fa, False, u0


def estimate_detection_metrics(
    kind: str,
    params: DetectorParams,
    pre_mean: float,
    post_mean: float,
    change_slot: int | None,
    T: int,
    trials: int,
    seed: int = 0,
) -> DetectionMetrics:
    """Monte-Carlo detection delay and false alarms on a single-change stream.

    Alarms strictly before ``change_slot`` are false alarms and reset the
    detector.  The delay is the first alarm slot at or after the change minus
    ``change_slot``, not counting slots the detector spent in burn-in.  With
    ``change_slot=None`` or ``post_mean == pre_mean`` there is no change and
    every alarm over the horizon is a false alarm.

    Trial ``r`` draws its stream from ``SeedSequence([seed, r])`` so results
    do not depend on evaluation order.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if change_slot is not None and not 1 <= change_slot <= T:
        raise ValueError(f"change_slot {change_slot} outside 1..{T}")
    for name, m in (("pre_mean", pre_mean), ("post_mean", post_mean)):
        if not 0.0 <= m <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1]")
    no_change = change_slot is None or post_mean == pre_mean
    change = 0 if no_change else int(change_slot)
    code = make_detector(kind, params).kind_code
    delays = np.empty(trials)
    fas = np.empty(trials, dtype=np.int64)
    detected = np.zeros(trials, dtype=bool)
    u0s = np.empty(trials)
    for r in range(trials):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, r])))
        u = rng.random(T)
        d, fa, ok, u0 = _detection_trial(u, pre_mean, post_mean, change, code,
                                         params.epsilon, float(params.M), params.h)
        delays[r], fas[r], detected[r], u0s[r] = d, fa, ok, u0
    if no_change:
        mean_delay = detected_delay = math.nan
        misses = 0
    else:
        mean_delay = float(delays.mean())
        misses = int((~detected).sum())
        detected_delay = float(delays[detected].mean()) if detected.any() else math.nan
    return DetectionMetrics(
        mean_delay=mean_delay,
        false_alarms=float(fas.mean()),
        trials=trials,
        misses=misses,
        mean_delay_detected=detected_delay,
        delays=delays,
        false_alarm_counts=fas,
        u0_at_change=u0s,
    )
