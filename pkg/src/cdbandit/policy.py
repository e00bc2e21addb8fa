"""Bandit policies: the change-detection UCB family (CD-UCB, CUSUM-UCB,
PHT-UCB, plain UCB as the no-detector case) plus two reference policies used
to validate the regret accounting.

Every policy supports two drivers that share the same compiled step code:

* ``select(rng)`` / ``update(arm, reward, t)`` for step-by-step use, and
* ``play(means, tape, t0)`` which rolls a whole block of slots inside numba.

Randomness comes from a :class:`Tape`: per slot a uniform for every arm's
Bernoulli reward (``reward_u[j, i] < mu``), a uniform gate for forced
exploration, a uniform arm pick and a uniform for categorical sampling.
Sharing a tape between policies gives them identical reward draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .detect import (
    CUSUM,
    NO_DETECTOR,
    PHT,
    PHT_GATED,
    STATE_SIZE,
    DetectorParams,
    detector_clear,
    detector_push,
    make_detector,
)

__all__ = [
    "Tape",
    "draw_tape",
    "TapeStream",
    "Policy",
    "CDUCB",
    "OraclePolicy",
    "FixedArmPolicy",
    "ucb_index",
    "cducb_select",
    "cducb_update",
]


@dataclass
class Tape:
    reward_u: np.ndarray  # (n, K)
    gate_u: np.ndarray  # (n,)
    pick: np.ndarray  # (n,) int64 in [0, K)
    cat_u: np.ndarray  # (n,)

    def __len__(self):
        return len(self.gate_u)

    def slice(self, a: int, b: int) -> "Tape":
        return Tape(self.reward_u[a:b], self.gate_u[a:b], self.pick[a:b], self.cat_u[a:b])


class TapeStream:
    """Tapes cut from four independent streams, one per tape field, so the
    slots drawn do not depend on how the horizon is split into blocks."""

    def __init__(self, seed: np.random.SeedSequence, K: int):
        self.K = int(K)
        self._rngs = [np.random.default_rng(s) for s in seed.spawn(4)]

    def draw(self, n: int) -> Tape:
        r_rew, r_gate, r_pick, r_cat = self._rngs
        pick = np.floor(r_pick.random(n) * self.K).astype(np.int64)
        return Tape(r_rew.random((n, self.K)), r_gate.random(n), pick, r_cat.random(n))


def draw_tape(rng: np.random.Generator, n: int, K: int) -> Tape:
    return Tape(
        rng.random((n, K)),
        rng.random(n),
        rng.integers(0, K, size=n, dtype=np.int64),
        rng.random(n),
    )


class Policy:
    """Base class.  Subclasses implement ``_select(gate_u, pick, cat_u)`` and
    ``update``; ``play`` falls back to a Python loop unless overridden."""

    name = "policy"

    def __init__(self, K: int):
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        self.K = int(K)

    def select(self, rng: np.random.Generator) -> int:
        gate_u = rng.random()
        pick = int(rng.integers(self.K))
        cat_u = rng.random()
        return self._select(gate_u, pick, cat_u)

    def _select(self, gate_u: float, pick: int, cat_u: float) -> int:
        raise NotImplementedError

    def update(self, arm: int, reward: float, t: int) -> bool:
        raise NotImplementedError

    def play(self, means: np.ndarray, tape: Tape, t0: int) -> np.ndarray:
        n = len(tape)
        arms = np.empty(n, dtype=np.int64)
        for j in range(n):
            a = self._select(tape.gate_u[j], int(tape.pick[j]), tape.cat_u[j])
            r = 1.0 if tape.reward_u[j, a] < means[j, a] else 0.0
            self.update(a, r, t0 + j)
            arms[j] = a
        return arms


# ---------------------------------------------------------------------------
# compiled CD-UCB core


@njit(cache=True, error_model="numpy")
def _ucb_value(s, N, n, xi):
    if N == 0:
        return np.inf
    return s / N + math.sqrt(xi * math.log(n) / N)


@njit(cache=True, error_model="numpy", inline="always")
def _argmax_ucb(counts, sums, xi, n):
    # same arithmetic as _ucb_value with log(n) hoisted out of the arm loop
    c = xi * math.log(n) if n > 0 else 0.0
    best = 0
    best_v = -np.inf
    for i in range(counts.shape[0]):
        N = counts[i]
        v = np.inf if N == 0 else sums[i] / N + math.sqrt(c / N)
        if v > best_v:
            best_v = v
            best = i
    return best


@njit(cache=True, error_model="numpy", inline="always")
def _cducb_select(counts, sums, cnt, alpha, xi, gate_u, pick, n):
    for i in range(cnt.shape[0]):
        if cnt[i] > 0:
            cnt[i] -= 1
            return i
    if gate_u < alpha:
        return pick
    return _argmax_ucb(counts, sums, xi, n)


@njit(cache=True, error_model="numpy", inline="always")
def _cducb_update(counts, sums, cnt, tau, det, kind, eps, M, h, countdown, arm, reward, t):
    counts[arm] += 1
    sums[arm] += reward
    if detector_push(det, arm, kind, reward, eps, M, h):
        tau[arm] = t + 1
        counts[arm] = 0
        sums[arm] = 0.0
        detector_clear(det, arm)
        if countdown:
            cnt[arm] = int(M)
        return True
    return False


@njit(cache=True, error_model="numpy")
def _cducb_play(counts, sums, cnt, tau, det, kind, eps, M, h, countdown, alpha, xi,
                means, reward_u, gate_u, pick, t0, arms_out):
    # The update is written out instead of calling _cducb_update: numba
    # generates a loop twice as slow through the call.  Tests pin this
    # kernel to the step API action for action.
    alarms = 0
    n = counts.sum()
    for j in range(gate_u.shape[0]):
        arm = _cducb_select(counts, sums, cnt, alpha, xi, gate_u[j], pick[j], n)
        r = np.float64(reward_u[j, arm] < means[j, arm])
        counts[arm] += 1
        sums[arm] += r
        n += 1
        if detector_push(det, arm, kind, r, eps, M, h):
            n -= counts[arm]
            tau[arm] = t0 + j + 1
            counts[arm] = 0
            sums[arm] = 0.0
            detector_clear(det, arm)
            if countdown:
                cnt[arm] = int(M)
            alarms += 1
        arms_out[j] = arm
    return alarms


_DETECTOR_CODES = {None: NO_DETECTOR, "cusum": CUSUM, "pht": PHT, "pht-gated": PHT_GATED}


class CDUCB(Policy):
    """UCB restarted per arm by a change detector.

    Parameters
    ----------
    alpha : probability of a uniformly random (detector-feeding) play.
    xi : UCB padding constant.
    detector : ``"cusum"``, ``"pht"``, ``"pht-gated"``, ``None`` or a
        zero-argument factory returning an object with ``update(y) -> bool``
        and ``reset()``.  Custom detectors run on the Python path.
    countdown : after every restart (and at the start) force M plays of the
        arm before resuming the normal rule.
    """

    name = "cd-ucb"

    def __init__(self, K, alpha=0.0, xi=1.0, detector=None, params: DetectorParams | None = None,
                 countdown=False, name=None):
        super().__init__(K)
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        if not xi > 0:
            raise ValueError(f"xi must be positive, got {xi}")
        self.alpha = float(alpha)
        self.xi = float(xi)
        if name:
            self.name = name
        if detector is not None and params is None:
            raise ValueError("detector parameters are required")
        if params is None:
            params = DetectorParams(0.1, 1, math.inf)
        self.params = params
        self.countdown = bool(countdown)
        self.counts = np.zeros(K, dtype=np.int64)
        self.sums = np.zeros(K)
        self.cnt = np.zeros(K, dtype=np.int64)
        self.tau = np.ones(K, dtype=np.int64)
        self.det = np.zeros((K, STATE_SIZE))
        self.n_alarms = 0
        if callable(detector):
            self._kind = None
            self.detectors = [detector() for _ in range(K)]
        else:
            if detector not in _DETECTOR_CODES:
                raise ValueError(f"unknown detector {detector!r}")
            self._kind = _DETECTOR_CODES[detector]
            self.detectors = (
                [make_detector(detector, params, self.det, i) for i in range(K)] if detector else [None] * K
            )
        if self.countdown:
            self.cnt[:] = params.M

    @property
    def n_total(self) -> int:
        return int(self.counts.sum())

    def index(self, arm: int) -> float:
        return _ucb_value(self.sums[arm], self.counts[arm], self.counts.sum(), self.xi)

    def _select(self, gate_u, pick, cat_u):
        return int(_cducb_select(self.counts, self.sums, self.cnt, self.alpha, self.xi, gate_u, pick,
                                 self.counts.sum()))

    def update(self, arm, reward, t):
        p = self.params
        if self._kind is not None:
            alarm = bool(_cducb_update(self.counts, self.sums, self.cnt, self.tau, self.det, self._kind,
                                       p.epsilon, float(p.M), p.h, self.countdown, arm, float(reward), t))
        else:
            self.counts[arm] += 1
            self.sums[arm] += reward
            alarm = bool(self.detectors[arm].update(reward))
            if alarm:
                self.tau[arm] = t + 1
                self.counts[arm] = 0
                self.sums[arm] = 0.0
                self.detectors[arm].reset()
                if self.countdown:
                    self.cnt[arm] = p.M
        self.n_alarms += alarm
        return alarm

    def play(self, means, tape, t0):
        if self._kind is None:
            return super().play(means, tape, t0)
        p = self.params
        arms = np.empty(len(tape), dtype=np.int64)
        self.n_alarms += _cducb_play(
            self.counts, self.sums, self.cnt, self.tau, self.det, self._kind, p.epsilon, float(p.M), p.h,
            self.countdown, self.alpha, self.xi, np.ascontiguousarray(means), tape.reward_u, tape.gate_u,
            tape.pick, t0, arms,
        )
        return arms


def ucb_index(policy: CDUCB, arm: int, xi: float | None = None) -> float:
    """Sample mean since the arm's last restart plus ``sqrt(xi log n / N)``;
    ``inf`` for an arm without valid samples."""
    xi = policy.xi if xi is None else xi
    return float(_ucb_value(policy.sums[arm], policy.counts[arm], policy.counts.sum(), xi))


def cducb_select(policy: CDUCB, rng: np.random.Generator) -> int:
    return policy.select(rng)


def cducb_update(policy: CDUCB, arm: int, reward: float, t: int) -> bool:
    return policy.update(arm, reward, t)


class OraclePolicy(Policy):
    """Plays a best arm of the true schedule; only meaningful through ``play``."""

    name = "oracle"

    def _select(self, gate_u, pick, cat_u):
        raise NotImplementedError("the oracle needs the true means; use play()")

    def update(self, arm, reward, t):
        return False

    def play(self, means, tape, t0):
        return np.argmax(means, axis=1).astype(np.int64)


class FixedArmPolicy(Policy):
    name = "fixed"

    def __init__(self, K, arm):
        super().__init__(K)
        if not 0 <= arm < K:
            raise ValueError(f"arm {arm} outside 0..{K - 1}")
        self.arm = int(arm)

    def _select(self, gate_u, pick, cat_u):
        return self.arm

    def update(self, arm, reward, t):
        return False

    def play(self, means, tape, t0):
        return np.full(len(tape), self.arm, dtype=np.int64)
