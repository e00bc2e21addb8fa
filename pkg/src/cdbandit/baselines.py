"""Passively adaptive and adversarial baselines: discounted UCB, sliding-window
UCB, Exp3.S, Rexp3 and Exp3.R.

Default tunings (used when a parameter is not given explicitly) assume the
horizon T and breakpoint count gamma_T are known:

=========  ==============================================================
D-UCB      discount 1 - sqrt(gamma_T / T) / 4, padding 2 sqrt(xi log n / N)
SW-UCB     window 2 sqrt(T log T / gamma_T)
Exp3.S     rate sqrt(gamma_T log(K T) / (K T)), share 1 / T
Rexp3      batch ceil((K log K)^(1/3) (T / V_T)^(2/3)),
           rate min(1, sqrt(K log K / ((e - 1) batch)))
Exp3.R     rate min(1, sqrt(gamma_T K log(K T) / T)), delta 1 / T,
           H = ceil(sqrt(T log T)) exploration samples per test
=========  ==============================================================

Exp3 weights are held as logs and renormalised every step.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

from .policy import Policy

__all__ = [
    "DiscountedUCB",
    "SlidingWindowUCB",
    "Exp3",
    "Exp3S",
    "Rexp3",
    "Exp3R",
    "default_discount",
    "default_window",
]


def default_discount(T, gamma_T):
    return 1.0 - 0.25 * math.sqrt(gamma_T / T)


def default_window(T, gamma_T):
    return max(1, int(math.ceil(2.0 * math.sqrt(T * math.log(T) / gamma_T))))


# ---------------------------------------------------------------------------
# D-UCB


@njit(cache=True, error_model="numpy")
def _ducb_select(Nd, Sd, xi, scale):
    n = Nd.sum()
    best = 0
    best_v = -np.inf
    for i in range(Nd.shape[0]):
        if Nd[i] == 0:
            v = np.inf
        else:
            v = Sd[i] / Nd[i] + scale * math.sqrt(xi * math.log(n) / Nd[i])
        if v > best_v:
            best_v = v
            best = i
    return best


@njit(cache=True, error_model="numpy")
def _ducb_update(Nd, Sd, discount, arm, reward):
    for i in range(Nd.shape[0]):
        Nd[i] *= discount
        Sd[i] *= discount
    Nd[arm] += 1.0
    Sd[arm] += reward


@njit(cache=True, error_model="numpy")
def _ducb_play(Nd, Sd, discount, xi, scale, means, reward_u, arms_out):
    for j in range(reward_u.shape[0]):
        arm = _ducb_select(Nd, Sd, xi, scale)
        r = np.float64(reward_u[j, arm] < means[j, arm])
        _ducb_update(Nd, Sd, discount, arm, r)
        arms_out[j] = arm


class DiscountedUCB(Policy):
    """UCB on geometrically discounted counts and sums.  With ``discount=1``
    and ``scale=1`` it is plain UCB."""

    name = "d-ucb"

    def __init__(self, K, discount, xi=1.0, scale=2.0):
        super().__init__(K)
        if not 0.0 < discount <= 1.0:
            raise ValueError(f"discount must lie in (0, 1], got {discount}")
        self.discount = float(discount)
        self.xi = float(xi)
        self.scale = float(scale)
        self.Nd = np.zeros(K)
        self.Sd = np.zeros(K)

    def _select(self, gate_u, pick, cat_u):
        return int(_ducb_select(self.Nd, self.Sd, self.xi, self.scale))

    def update(self, arm, reward, t):
        _ducb_update(self.Nd, self.Sd, self.discount, arm, float(reward))
        return False

    def play(self, means, tape, t0):
        arms = np.empty(len(tape), dtype=np.int64)
        _ducb_play(self.Nd, self.Sd, self.discount, self.xi, self.scale,
                   np.ascontiguousarray(means), tape.reward_u, arms)
        return arms


# ---------------------------------------------------------------------------
# SW-UCB


@njit(cache=True, error_model="numpy")
def _sw_select(Nw, Sw, xi):
    n = Nw.sum()
    best = 0
    best_v = -np.inf
    for i in range(Nw.shape[0]):
        if Nw[i] == 0:
            v = np.inf
        else:
            v = Sw[i] / Nw[i] + math.sqrt(xi * math.log(n) / Nw[i])
        if v > best_v:
            best_v = v
            best = i
    return best


@njit(cache=True, error_model="numpy")
def _sw_update(Nw, Sw, buf_arm, buf_r, meta, window, arm, reward):
    # meta = [write position, number of plays held]
    cap = buf_arm.shape[0]
    pos = meta[0]
    if meta[1] == window:
        old = buf_arm[pos]
        Nw[old] -= 1
        Sw[old] -= buf_r[pos]
    elif meta[1] == cap:
        raise ValueError("sliding window buffer overflow: more plays than the horizon")
    else:
        meta[1] += 1
    buf_arm[pos] = arm
    buf_r[pos] = reward
    Nw[arm] += 1
    Sw[arm] += reward
    meta[0] = (pos + 1) % cap


@njit(cache=True, error_model="numpy")
def _sw_play(Nw, Sw, buf_arm, buf_r, meta, window, xi, means, reward_u, arms_out):
    for j in range(reward_u.shape[0]):
        arm = _sw_select(Nw, Sw, xi)
        r = np.float64(reward_u[j, arm] < means[j, arm])
        _sw_update(Nw, Sw, buf_arm, buf_r, meta, window, arm, r)
        arms_out[j] = arm


class SlidingWindowUCB(Policy):
    """UCB over the last ``window`` plays.  The padding uses the number of
    plays inside the window, so a window no shorter than the horizon
    reproduces plain UCB."""

    name = "sw-ucb"

    def __init__(self, K, window, T, xi=1.0):
        super().__init__(K)
        if window < 1:
            raise ValueError(f"window must be >= 1, got {window}")
        self.window = int(window)
        self.xi = float(xi)
        cap = min(self.window, int(T))
        self.Nw = np.zeros(K, dtype=np.int64)
        self.Sw = np.zeros(K)
        self._buf_arm = np.zeros(cap, dtype=np.int64)
        self._buf_r = np.zeros(cap)
        self._meta = np.zeros(2, dtype=np.int64)

    def _select(self, gate_u, pick, cat_u):
        return int(_sw_select(self.Nw, self.Sw, self.xi))

    def update(self, arm, reward, t):
        _sw_update(self.Nw, self.Sw, self._buf_arm, self._buf_r, self._meta, self.window, arm, float(reward))
        return False

    def play(self, means, tape, t0):
        arms = np.empty(len(tape), dtype=np.int64)
        _sw_play(self.Nw, self.Sw, self._buf_arm, self._buf_r, self._meta, self.window, self.xi,
                 np.ascontiguousarray(means), tape.reward_u, arms)
        return arms


# ---------------------------------------------------------------------------
# Exp3 family
#
# Selection is "with probability gamma pick uniformly, else sample from the
# normalised weights", which gives p_i = (1 - gamma) w_i / W + gamma / K and
# lets Exp3.R tell exploration samples apart.


@njit(cache=True, error_model="numpy")
def _exp3_probs(logw, gamma, p):
    K = logw.shape[0]
    m = logw.max()
    W = 0.0
    for i in range(K):
        p[i] = math.exp(logw[i] - m)
        W += p[i]
    for i in range(K):
        p[i] = (1.0 - gamma) * p[i] / W + gamma / K


@njit(cache=True, error_model="numpy")
def _exp3_select(logw, gamma, gate_u, pick, cat_u):
    """Returns (arm, explored)."""
    if gate_u < gamma:
        return pick, True
    K = logw.shape[0]
    m = logw.max()
    W = 0.0
    for i in range(K):
        W += math.exp(logw[i] - m)
    target = cat_u * W
    acc = 0.0
    for i in range(K):
        acc += math.exp(logw[i] - m)
        if target < acc:
            return i, False
    return K - 1, False


@njit(cache=True, error_model="numpy")
def _logsumexp(x):
    m = x.max()
    s = 0.0
    for i in range(x.shape[0]):
        s += math.exp(x[i] - m)
    return m + math.log(s)


@njit(cache=True, error_model="numpy")
def _exp3_update(logw, p, gamma, share, arm, reward):
    K = logw.shape[0]
    _exp3_probs(logw, gamma, p)
    gain = gamma * (reward / p[arm]) / K
    if share > 0.0:
        log_mix = math.log(math.e * share / K) + _logsumexp(logw)
        logw[arm] += gain
        for i in range(K):
            a = logw[i]
            b = log_mix
            hi = a if a > b else b
            logw[i] = hi + math.log1p(math.exp(-abs(a - b)))
    else:
        logw[arm] += gain
    m = logw.max()
    for i in range(K):
        logw[i] -= m


@njit(cache=True, error_model="numpy")
def _exp3r_observe(logw, obs_n, obs_s, meta, H, thresh, arm, reward):
    # meta[0] counts exploration samples in the current test interval
    obs_n[arm] += 1
    obs_s[arm] += reward
    meta[0] += 1
    if meta[0] < H:
        return False
    K = logw.shape[0]
    k_max = 0
    for i in range(1, K):
        if logw[i] > logw[k_max]:
            k_max = i
    drift = False
    if obs_n[k_max] > 0:
        ref = obs_s[k_max] / obs_n[k_max]
        for i in range(K):
            if obs_n[i] > 0 and obs_s[i] / obs_n[i] - ref >= thresh:
                drift = True
    if drift:
        for i in range(K):
            logw[i] = 0.0
    for i in range(K):
        obs_n[i] = 0
        obs_s[i] = 0.0
    meta[0] = 0
    return drift


@njit(cache=True, error_model="numpy")
def _exp3_step_update(logw, p, obs_n, obs_s, meta, gamma, share, batch, H, thresh, arm, reward, explored, t):
    _exp3_update(logw, p, gamma, share, arm, reward)
    restarted = False
    if H > 0 and explored:
        restarted = _exp3r_observe(logw, obs_n, obs_s, meta, H, thresh, arm, reward)
    if batch > 0 and t % batch == 0:
        for i in range(logw.shape[0]):
            logw[i] = 0.0
        restarted = True
    return restarted


@njit(cache=True, error_model="numpy")
def _exp3_play(logw, p, obs_n, obs_s, meta, gamma, share, batch, H, thresh,
               means, reward_u, gate_u, pick, cat_u, t0, arms_out):
    restarts = 0
    for j in range(gate_u.shape[0]):
        arm, explored = _exp3_select(logw, gamma, gate_u[j], pick[j], cat_u[j])
        r = np.float64(reward_u[j, arm] < means[j, arm])
        if _exp3_step_update(logw, p, obs_n, obs_s, meta, gamma, share, batch, H, thresh,
                             arm, r, explored, t0 + j):
            restarts += 1
        arms_out[j] = arm
    return restarts


class Exp3(Policy):
    """Exp3 with exploration/learning rate ``gamma``.  Subclasses switch on
    fixed-share mixing (Exp3.S), periodic restarts (Rexp3) or a drift test
    on exploration samples (Exp3.R)."""

    name = "exp3"

    def __init__(self, K, gamma, share=0.0, batch=0, H=0, delta=None):
        super().__init__(K)
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        self.gamma = float(gamma)
        self.share = float(share)
        self.batch = int(batch)
        self.H = int(H)
        self.delta = delta
        self.thresh = 0.0
        if self.H > 0:
            if not (delta and 0 < delta < 1) or gamma <= 0:
                raise ValueError("the drift test needs 0 < delta < 1 and gamma > 0")
            eps = math.sqrt(K * math.log(1.0 / delta) / (2.0 * gamma * self.H))
            self.thresh = 2.0 * eps
        self.logw = np.zeros(K)
        self._p = np.zeros(K)
        self._obs_n = np.zeros(K, dtype=np.int64)
        self._obs_s = np.zeros(K)
        self._meta = np.zeros(1, dtype=np.int64)
        self._explored = False
        self.n_restarts = 0

    def probabilities(self) -> np.ndarray:
        p = np.empty(self.K)
        _exp3_probs(self.logw, self.gamma, p)
        return p

    def _select(self, gate_u, pick, cat_u):
        arm, self._explored = _exp3_select(self.logw, self.gamma, gate_u, pick, cat_u)
        return int(arm)

    def update(self, arm, reward, t):
        restarted = bool(_exp3_step_update(
            self.logw, self._p, self._obs_n, self._obs_s, self._meta, self.gamma, self.share,
            self.batch, self.H, self.thresh, arm, float(reward), self._explored, t))
        self.n_restarts += restarted
        return restarted

    def play(self, means, tape, t0):
        arms = np.empty(len(tape), dtype=np.int64)
        self.n_restarts += _exp3_play(
            self.logw, self._p, self._obs_n, self._obs_s, self._meta, self.gamma, self.share,
            self.batch, self.H, self.thresh, np.ascontiguousarray(means), tape.reward_u,
            tape.gate_u, tape.pick, tape.cat_u, t0, arms)
        return arms


class Exp3S(Exp3):
    name = "exp3s"

    def __init__(self, K, gamma, share):
        super().__init__(K, gamma, share=share)

    @classmethod
    def tuned(cls, K, T, gamma_T):
        return cls(K, min(1.0, math.sqrt(gamma_T * math.log(K * T) / (K * T))), 1.0 / T)


class Rexp3(Exp3):
    name = "rexp3"

    def __init__(self, K, batch, gamma=None):
        if batch < 1:
            raise ValueError(f"batch must be >= 1, got {batch}")
        if gamma is None:
            gamma = min(1.0, math.sqrt(K * math.log(K) / ((math.e - 1.0) * batch))) if K > 1 else 0.0
        super().__init__(K, gamma, batch=batch)

    @staticmethod
    def default_batch(K, T, V_T):
        return max(1, int(math.ceil((K * math.log(K)) ** (1 / 3) * (T / V_T) ** (2 / 3)))) if K > 1 else T


class Exp3R(Exp3):
    name = "exp3r"

    def __init__(self, K, gamma, H, delta):
        if H < 1:
            raise ValueError(f"H must be >= 1, got {H}")
        super().__init__(K, gamma, H=H, delta=delta)

    @classmethod
    def tuned(cls, K, T, gamma_T):
        gamma = min(1.0, math.sqrt(gamma_T * K * math.log(K * T) / T))
        return cls(K, gamma, int(math.ceil(math.sqrt(T * math.log(T)))), 1.0 / T)
