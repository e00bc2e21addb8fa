import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cdbandit.env import (
    ScheduleError,
    TraceFormatError,
    count_breakpoints,
    export_trace,
    flipping_env,
    from_segments,
    load_trace,
    sample_reward,
    stationary_env,
    summarize,
    switching_env,
)


def arm2(schedule):
    return [schedule.mean_at(t, 1) for t in range(1, schedule.T + 1)]


def test_flipping_small_horizon():
    s = flipping_env(9, 0.1)
    assert arm2(s) == pytest.approx([0.8, 0.8, 0.4, 0.4, 0.4, 0.4, 0.8, 0.8, 0.8])
    assert all(s.mean_at(t, 0) == 0.5 for t in range(1, 10))


def test_flipping_three_slots():
    s = flipping_env(3, 0.3)
    assert list(s.segment_ends()) == [1, 2, 3]
    assert arm2(s) == pytest.approx([0.8, 0.2, 0.8])


def test_flipping_breakpoints():
    assert count_breakpoints(flipping_env(100_000, 0.1)) == 2


@pytest.mark.parametrize("delta", [0.0, 0.5, -0.1, 0.7])
def test_flipping_rejects_delta(delta):
    with pytest.raises(ScheduleError):
        flipping_env(100, delta)


def test_switching_determinism_and_beta_zero():
    a = switching_env(5, 5000, 1e-3, np.random.default_rng(7))
    b = switching_env(5, 5000, 1e-3, np.random.default_rng(7))
    assert np.array_equal(a.dense(), b.dense())
    flat = switching_env(3, 1000, 0.0, np.random.default_rng(1))
    assert count_breakpoints(flat) == 0


def test_switching_every_slot():
    s = switching_env(1, 1000, 1.0, np.random.default_rng(3))
    assert count_breakpoints(s) == 999


def test_switching_chunking_invariant():
    a = switching_env(3, 3000, 0.01, np.random.default_rng(11), chunk=1 << 16)
    b = switching_env(3, 3000, 0.01, np.random.default_rng(11), chunk=1 << 16)
    assert np.array_equal(a.means, b.means) and np.array_equal(a.segment_ends(), b.segment_ends())


def test_from_segments_validation():
    s = from_segments(2, 10, [(1, [0.1, 0.2])])
    assert count_breakpoints(s) == 0
    with pytest.raises(ScheduleError, match="segment 0"):
        from_segments(1, 10, [(1, [1.2])])
    with pytest.raises(ScheduleError, match="duplicate"):
        from_segments(1, 10, [(1, [0.1]), (5, [0.2]), (5, [0.3])])
    with pytest.raises(ScheduleError, match="start at slot 1"):
        from_segments(1, 10, [(2, [0.1])])


def test_segment_cover_is_total():
    s = from_segments(2, 20, [(1, [0.1, 0.2]), (4, [0.3, 0.2]), (11, [0.9, 0.0])])
    dense = s.dense()
    assert dense.shape == (20, 2)
    for t in range(1, 21):
        seg = s.segment_index(t)
        assert 0 <= seg < 3
        assert np.array_equal(dense[t - 1], s.means[seg])


@settings(max_examples=60, deadline=None)
@given(
    T=st.integers(2, 400),
    K=st.integers(1, 4),
    data=st.data(),
)
def test_breakpoints_match_slot_scan(T, K, data):
    n = data.draw(st.integers(1, min(T, 12)))
    starts = sorted(data.draw(st.sets(st.integers(2, T), min_size=n - 1, max_size=n - 1)))
    vals = st.sampled_from([0.0, 0.25, 0.5, 1.0])
    segs = [(1, data.draw(st.lists(vals, min_size=K, max_size=K)))]
    segs += [(s, data.draw(st.lists(vals, min_size=K, max_size=K))) for s in starts]
    sched = from_segments(K, T, segs)
    dense = sched.dense()
    brute = sum(1 for t in range(T - 1) if np.any(dense[t] != dense[t + 1]))
    assert count_breakpoints(sched, 0.0) == brute


def test_breakpoint_threshold():
    s = from_segments(1, 10, [(1, [0.5]), (6, [0.504])])
    assert count_breakpoints(s, 0.005) == 0
    assert count_breakpoints(s, 0.0) == 1


def test_sample_reward():
    rng = np.random.default_rng(0)
    one = stationary_env([1.0, 0.0], 10)
    assert all(sample_reward(one, 1, 0, rng) == 1 for _ in range(100))
    assert all(sample_reward(one, 1, 1, rng) == 0 for _ in range(100))
    half = stationary_env([0.5], 10)
    n = 100_000
    m = np.mean([sample_reward(half, 5, 0, rng) for _ in range(n)])
    assert abs(m - 0.5) < 6 * math.sqrt(0.25 / n)
    with pytest.raises(IndexError):
        sample_reward(half, 11, 0, rng)
    with pytest.raises(IndexError):
        sample_reward(half, 1, 1, rng)


def test_summarize_examples():
    s = summarize(flipping_env(9, 0.1), 0.1, 10)
    assert s.per_arm_delta == pytest.approx((0.3, 0.1))
    assert s.gamma_T == 2
    assert summarize(stationary_env([0.55], 10), 0.1, 10).lam == pytest.approx(0.05)
    undefined = summarize(stationary_env([0.5], 10), 0.1, 10)
    assert undefined.lam is None and not undefined.lambda_defined


@settings(max_examples=100, deadline=None)
@given(mu=st.lists(st.floats(0, 1), min_size=1, max_size=4), eps=st.floats(0.01, 0.49), M=st.integers(1, 200))
def test_summary_ranges(mu, eps, M):
    s = summarize(stationary_env(mu, 5), eps, M)
    for d in s.per_arm_delta:
        assert d == math.inf or 0 < d <= 1
    if s.lam is not None:
        assert 0 < s.lam <= 1 / M + 1e-12


def test_trace_round_trip(tmp_path):
    s = from_segments(2, 10, [(1, [0.1, 0.2]), (6, [0.3, 0.4])])
    p = tmp_path / "trace.csv"
    export_trace(s, p)
    back = load_trace(p, 10)
    assert np.array_equal(back.means, s.means)
    assert np.array_equal(back.segment_ends(), s.segment_ends())


def test_trace_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("t,arm_1\n1,0.5\n5000,0.5\n3000,0.5\n")
    with pytest.raises(TraceFormatError, match="line 4"):
        load_trace(p, 10_000)
    p.write_text("t,arm_1\n1,0.5;\n")
    with pytest.raises(TraceFormatError, match="line 2"):
        load_trace(p, 10)
    p.write_text("1,0.5\n")
    with pytest.raises(TraceFormatError):
        load_trace(p, 10)
