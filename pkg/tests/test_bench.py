import math

import numpy as np
import pytest

from cdbandit.bench import compare, pseudo_regret_increment, run_experiment, trial_seeds
from cdbandit.config import _switching_draw
from cdbandit.env import flipping_env, stationary_env
from functools import partial

CUSUM = {"kind": "cusum-ucb", "alpha": 0.01, "epsilon": 0.1, "M": 50, "h": 10.0}


def test_oracle_has_zero_regret():
    tr = run_experiment(flipping_env(5000, 0.2), {"kind": "oracle"}, 3)
    assert np.all(tr.mean == 0.0) and np.all(tr.se == 0.0)
    assert tr.suboptimal_plays.sum() == 0


def test_fixed_arm_regret_by_hand():
    # arm 2 loses 0.1 on slots 3..6 only
    tr = run_experiment(flipping_env(9, 0.1), {"kind": "fixed", "arm": 1}, 2)
    assert tr.final_mean == pytest.approx(0.4)
    assert np.allclose(tr.mean, [0, 0, 0.1, 0.2, 0.3, 0.4, 0.4, 0.4, 0.4])
    assert list(tr.suboptimal_plays[0]) == [0, 4]


def test_pseudo_regret_increment():
    env = flipping_env(9, 0.1)
    assert pseudo_regret_increment(env, 1, 0) == pytest.approx(0.3)
    assert pseudo_regret_increment(env, 4, 1) == pytest.approx(0.1)
    assert pseudo_regret_increment(env, 4, 0) == 0.0
    with pytest.raises(IndexError):
        pseudo_regret_increment(env, 4, 2)


def test_trace_invariants():
    env = flipping_env(20_000, 0.3)
    tr = run_experiment(env, CUSUM, 8, keep_trials=True)
    max_gap = 0.6
    t = np.arange(1, env.T + 1)
    for cum, sub in zip(tr.per_trial, tr.suboptimal_plays):
        assert np.all(np.diff(cum) >= 0)
        assert np.all(cum <= t * max_gap + 1e-9)
        assert sub.sum() <= env.T
        assert cum[-1] <= sub.sum() * max_gap + 1e-9
    assert np.allclose(tr.mean, tr.per_trial.mean(axis=0), rtol=1e-12, atol=1e-9)
    assert np.allclose(tr.se, tr.per_trial.std(axis=0, ddof=1) / math.sqrt(8), rtol=1e-9, atol=1e-9)


def test_deterministic_and_worker_independent():
    env = partial(_switching_draw, K=3, T=6000, beta=5e-4)
    a = run_experiment(env, CUSUM, 6, base_seed=4)
    b = run_experiment(env, CUSUM, 6, base_seed=4, workers=3)
    c = run_experiment(env, CUSUM, 6, base_seed=4, block=777)
    for other in (b, c):
        assert np.array_equal(a.mean, other.mean) and np.array_equal(a.se, other.se)
        assert np.array_equal(a.alarms, other.alarms)
    d = run_experiment(env, CUSUM, 6, base_seed=5)
    assert not np.array_equal(a.mean, d.mean)


def test_policies_share_environments_not_rewards():
    e1, p1 = trial_seeds(0, 3, "a")
    e2, p2 = trial_seeds(0, 3, "b")
    assert e1.entropy == e2.entropy and e1.spawn_key == e2.spawn_key
    assert np.random.default_rng(p1).random() != np.random.default_rng(p2).random()


def test_compare_ratios_and_horizon_check():
    env = flipping_env(3000, 0.2)
    traces = [
        run_experiment(env, {"kind": "fixed", "arm": 0}, 2, name="zero"),
        run_experiment(env, {"kind": "fixed", "arm": 1}, 2, name="one"),
        run_experiment(env, {"kind": "oracle"}, 2),
    ]
    cmp = compare(traces)
    r = traces[0].final_mean / traces[1].final_mean
    assert cmp.ratios[("zero", "one")] == pytest.approx(r)
    assert cmp.ratios[("zero", "oracle")] == math.inf
    assert "final regret ratios" in cmp.to_text()
    with pytest.raises(ValueError):
        compare([traces[0], run_experiment(flipping_env(100, 0.2), {"kind": "oracle"}, 1)])


def test_rejects_bad_arguments():
    env = stationary_env([0.5, 0.6], 10)
    with pytest.raises(ValueError):
        run_experiment(env, {"kind": "oracle"}, 0)
    with pytest.raises(ValueError):
        run_experiment(env, {"kind": "ucb", "K": 3}, 1)
