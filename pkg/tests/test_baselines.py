import math

import numpy as np
import pytest

from cdbandit.baselines import (
    DiscountedUCB,
    Exp3,
    Exp3R,
    Exp3S,
    Rexp3,
    SlidingWindowUCB,
    default_discount,
    default_window,
)
from cdbandit.env import switching_env
from cdbandit.factory import ConfigError, make_policy
from cdbandit.policy import Policy, draw_tape

K, T = 3, 4000


@pytest.fixture(scope="module")
def world():
    env = switching_env(K, T, 2e-3, np.random.default_rng(9))
    return env.dense(), draw_tape(np.random.default_rng(10), T, K)


FACTORIES = {
    "d-ucb": lambda: DiscountedUCB(K, 0.99),
    "sw-ucb": lambda: SlidingWindowUCB(K, 150, T),
    "exp3s": lambda: Exp3S(K, 0.1, 1e-3),
    "rexp3": lambda: Rexp3(K, 500),
    "exp3r": lambda: Exp3R(K, 0.2, 200, 0.01),
}


@pytest.mark.parametrize("name", sorted(FACTORIES))
def test_kernel_matches_step_api(world, name):
    means, tape = world
    fast, slow = FACTORIES[name](), FACTORIES[name]()
    a = np.r_[fast.play(means[:1500], tape.slice(0, 1500), 1), fast.play(means[1500:], tape.slice(1500, T), 1501)]
    b = Policy.play(slow, means, tape, 1)
    assert np.array_equal(a, b)
    if isinstance(fast, Exp3):
        assert np.array_equal(fast.logw, slow.logw)
        assert fast.n_restarts == slow.n_restarts


def test_rexp3_restarts_every_batch(world):
    means, tape = world
    p = Rexp3(K, 500)
    p.play(means, tape, 1)
    # a restart closes every full batch, the last one included
    assert p.n_restarts == T // 500


def test_exp3_weights_stay_normalised():
    n = 1_000_000
    means = np.tile([0.9, 0.1, 0.5, 0.5, 0.2], (n, 1))
    p = Exp3S(5, 0.01, 1e-6)
    p.play(means, draw_tape(np.random.default_rng(0), n, 5), 1)
    probs = p.probabilities()
    assert np.all(np.isfinite(p.logw)) and np.all(np.isfinite(probs))
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert probs.argmax() == 0


def test_sliding_window_buffer_bounded(world):
    means, tape = world
    p = SlidingWindowUCB(K, 100, T)
    p.play(means, tape, 1)
    assert p.Nw.sum() == 100 and len(p._buf_arm) <= 100
    long = SlidingWindowUCB(K, 10 * T, T)
    assert len(long._buf_arm) == T


def test_sliding_window_counts_match_last_plays(world):
    means, tape = world
    p = SlidingWindowUCB(K, 64, T)
    arms = p.play(means, tape, 1)
    assert np.array_equal(p.Nw, np.bincount(arms[-64:], minlength=K))


def test_discounted_counts_decay():
    p = DiscountedUCB(2, 0.5)
    p.update(0, 1.0, 1)
    p.update(1, 0.0, 2)
    assert p.Nd[0] == pytest.approx(0.5) and p.Nd[1] == pytest.approx(1.0)


def test_default_formulas():
    assert default_discount(10_000, 4) == pytest.approx(1 - 0.25 * 0.02)
    assert default_window(10_000, 4) == math.ceil(2 * math.sqrt(10_000 * math.log(10_000) / 4))
    s = Exp3S.tuned(2, 1000, 2)
    assert s.gamma == pytest.approx(math.sqrt(2 * math.log(2000) / 2000)) and s.share == 1e-3
    assert Rexp3.default_batch(2, 1000, 2) == math.ceil((2 * math.log(2)) ** (1 / 3) * 500 ** (2 / 3))


def test_factory_defaults_need_gamma_T():
    with pytest.raises(ConfigError, match="gamma_T"):
        make_policy({"kind": "sw-ucb"}, 2, 100)
    p = make_policy({"kind": "sw-ucb", "gamma_T": 2}, 2, 100)
    assert p.window == default_window(100, 2)


def test_factory_reports_every_problem():
    with pytest.raises(ConfigError) as info:
        make_policy({"kind": "cusum-ucb", "bogus": 1, "K": 3}, 2, 100)
    msg = str(info.value)
    for needle in ("bogus", "alpha", "K=3"):
        assert needle in msg


@pytest.mark.parametrize("bad", [
    lambda: DiscountedUCB(2, 0.0),
    lambda: SlidingWindowUCB(2, 0, 10),
    lambda: Exp3(2, 1.5),
    lambda: Rexp3(2, 0),
    lambda: Exp3R(2, 0.1, 0, 0.1),
])
def test_parameter_validation(bad):
    with pytest.raises(ValueError):
        bad()
