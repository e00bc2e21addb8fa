import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from cdbandit.detect import DetectorParams
from cdbandit.env import flipping_env, switching_env
from cdbandit.factory import make_policy
from cdbandit.policy import CDUCB, FixedArmPolicy, OraclePolicy, Policy, _argmax_ucb, draw_tape, ucb_index


def step_play(policy, means, tape, t0=1):
    """Reference driver: the per-step select/update API in a Python loop."""
    return Policy.play(policy, means, tape, t0)


def make_cd(detector, K=2, **kw):
    p = DetectorParams(kw.pop("epsilon", 0.1), kw.pop("M", 20), kw.pop("h", 5.0))
    return CDUCB(K, alpha=kw.pop("alpha", 0.05), detector=detector, params=p, **kw)


@pytest.mark.parametrize("detector,countdown", [("cusum", True), ("cusum", False), ("pht", False), ("pht-gated", True)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kernel_matches_step_api(detector, countdown, seed):
    env = flipping_env(3000, 0.3)
    means = env.dense()
    tape = draw_tape(np.random.default_rng(seed), env.T, 2)
    fast, slow = make_cd(detector, countdown=countdown), make_cd(detector, countdown=countdown)
    # two blocks so the carried state crosses a block edge
    a = np.r_[fast.play(means[:1234], tape.slice(0, 1234), 1), fast.play(means[1234:], tape.slice(1234, 3000), 1235)]
    b = step_play(slow, means, tape)
    assert np.array_equal(a, b)
    assert fast.n_alarms == slow.n_alarms > 0
    assert np.array_equal(fast.tau, slow.tau)
    assert np.array_equal(fast.counts, slow.counts)
    assert np.array_equal(fast.sums, slow.sums)
    assert np.array_equal(fast.det, slow.det)


def test_ucb_index_values():
    p = CDUCB(2)
    assert ucb_index(p, 0) == math.inf
    p.update(0, 1.0, 1)
    p.update(1, 0.0, 2)
    p.update(0, 0.0, 3)
    assert ucb_index(p, 0) == pytest.approx(0.5 + math.sqrt(math.log(3) / 2))
    assert ucb_index(p, 1, xi=2.0) == pytest.approx(math.sqrt(2 * math.log(3)))


def test_lowest_index_tie_break():
    assert _argmax_ucb(np.zeros(3, dtype=np.int64), np.zeros(3), 1.0, 0) == 0
    counts = np.array([2, 2, 2], dtype=np.int64)
    sums = np.array([1.0, 1.0, 1.0])
    assert _argmax_ucb(counts, sums, 1.0, 6) == 0


@settings(max_examples=200, deadline=None)
@given(
    counts=st.lists(st.integers(1, 500), min_size=2, max_size=6),
    frac=st.data(),
    shift=st.floats(-0.5, 0.5),
)
def test_argmax_invariant_to_common_shift(counts, frac, shift):
    counts = np.array(counts, dtype=np.int64)
    sums = np.array([frac.draw(st.integers(0, int(c))) for c in counts], dtype=float)
    n = int(counts.sum())
    idx = sums / counts + np.sqrt(math.log(n) / counts)
    top = np.sort(idx)[::-1]
    assume(top[0] - top[1] > 1e-9)
    shifted = sums + shift * counts
    assert _argmax_ucb(counts, sums, 1.0, n) == _argmax_ucb(counts, shifted, 1.0, n)


def test_forced_exploration_rate():
    K, T, alpha = 4, 200_000, 0.08
    env = switching_env(K, T, 0.0, np.random.default_rng(5))
    tape = draw_tape(np.random.default_rng(6), T, K)
    p = CDUCB(K, alpha=alpha)
    arms = p.play(env.dense(), tape, 1)
    gate = tape.gate_u < alpha
    # every gated slot plays its uniform pick
    assert np.array_equal(arms[gate], tape.pick[gate])
    q = alpha / K
    sigma = math.sqrt(T * q * (1 - q))
    for i in range(K):
        uniform_plays = np.count_nonzero(gate & (tape.pick == i))
        assert abs(uniform_plays - T * q) < 5 * sigma


def test_restart_isolation():
    p = make_cd("cusum", K=3, M=2, h=0.0, alpha=0.0)
    for t, (arm, r) in enumerate([(0, 1.0), (1, 0.0), (2, 1.0), (1, 1.0), (0, 0.0), (2, 0.0)], start=1):
        p.update(arm, r, t)
    before = (p.counts.copy(), p.sums.copy(), p.det.copy())
    assert p.update(1, 1.0, 7)  # third sample on arm 1 crosses h = 0
    assert p.counts[1] == 0 and p.sums[1] == 0.0 and not p.det[1].any()
    assert p.tau[1] == 8
    for i in (0, 2):
        assert p.counts[i] == before[0][i] and p.sums[i] == before[1][i]
        assert np.array_equal(p.det[i], before[2][i])


def test_countdown_forces_burn_in_plays():
    p = make_cd("cusum", K=3, M=5, h=1e9, alpha=0.5, countdown=True)
    T = 15
    tape = draw_tape(np.random.default_rng(0), T, 3)
    arms = p.play(np.full((T, 3), 0.5), tape, 1)
    assert list(arms) == [0] * 5 + [1] * 5 + [2] * 5


def test_reductions_on_shared_tapes():
    T, K = 3000, 3
    for seed in range(5):
        env = switching_env(K, T, 1e-3, np.random.default_rng(seed))
        means = env.dense()
        tape = draw_tape(np.random.default_rng(100 + seed), T, K)
        ref = make_policy({"kind": "ucb"}, K, T).play(means, tape, 1)
        variants = [
            {"kind": "cd-ucb", "alpha": 0.0, "detector": "cusum", "epsilon": 0.1, "M": 10, "h": math.inf},
            {"kind": "d-ucb", "discount": 1.0, "scale": 1.0},
            {"kind": "sw-ucb", "window": T},
        ]
        for spec in variants:
            got = make_policy(spec, K, T).play(means, tape, 1)
            assert np.array_equal(got, ref), spec["kind"]


def test_reference_policies():
    env = flipping_env(9, 0.1)
    tape = draw_tape(np.random.default_rng(0), 9, 2)
    assert list(OraclePolicy(2).play(env.dense(), tape, 1)) == [1, 1, 0, 0, 0, 0, 1, 1, 1]
    assert set(FixedArmPolicy(2, 1).play(env.dense(), tape, 1)) == {1}
    with pytest.raises(ValueError):
        FixedArmPolicy(2, 2)


def test_parameter_validation():
    with pytest.raises(ValueError):
        CDUCB(2, alpha=1.5)
    with pytest.raises(ValueError):
        CDUCB(2, xi=0.0)
    with pytest.raises(ValueError):
        CDUCB(2, detector="cusum")


def test_custom_detector_path():
    class EveryThird:
        def __init__(self):
            self.k = 0

        def update(self, y):
            self.k += 1
            return self.k % 3 == 0

        def reset(self):
            self.k = 0

    p = CDUCB(1, detector=EveryThird, params=DetectorParams(0.1, 2, 1.0))
    alarms = [p.update(0, 1.0, t) for t in range(1, 7)]
    assert alarms == [False, False, True, False, False, True]
    assert p.n_alarms == 2
