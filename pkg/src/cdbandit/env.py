"""Piecewise-stationary Bernoulli reward environments.

A :class:`MeanSchedule` stores the expected reward of every arm as a list of
constant segments.  Time slots are 1-indexed (``1 <= t <= T``); arms are
0-indexed like any other Python sequence.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeanSchedule",
    "EnvSummary",
    "ScheduleError",
    "TraceFormatError",
    "flipping_env",
    "switching_env",
    "from_segments",
    "stationary_env",
    "load_trace",
    "export_trace",
    "sample_reward",
    "count_breakpoints",
    "summarize",
]

# distances to the 1/M grid below this are treated as exact hits
GRID_TOL = 1e-9


class ScheduleError(ValueError):
    """Invalid schedule parameters or segments."""


class TraceFormatError(ScheduleError):
    """Malformed trace file; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class MeanSchedule:
    """Ground-truth expected rewards, piecewise constant in time.

    ``starts[j]`` is the first slot of segment ``j`` and ``means[j]`` holds the
    K arm means on that segment.  Instances are immutable and may be shared
    between workers.
    """

    num_arms: int
    horizon: int
    starts: np.ndarray = field(repr=False)
    means: np.ndarray = field(repr=False)

    def __post_init__(self):
        starts = np.asarray(self.starts, dtype=np.int64).copy()
        means = np.asarray(self.means, dtype=np.float64).copy()
        _validate(self.num_arms, self.horizon, starts, means)
        starts.flags.writeable = False
        means.flags.writeable = False
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "means", means)

    @property
    def K(self) -> int:
        return self.num_arms

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def num_segments(self) -> int:
        return len(self.starts)

    @property
    def segments(self) -> list[tuple[int, tuple[float, ...]]]:
        return [(int(s), tuple(float(v) for v in m)) for s, m in zip(self.starts, self.means)]

    def segment_ends(self) -> np.ndarray:
        """Last slot (inclusive) of every segment."""
        return np.append(self.starts[1:] - 1, self.horizon)

    def segment_index(self, t: int) -> int:
        if not 1 <= t <= self.horizon:
            raise IndexError(f"slot {t} outside 1..{self.horizon}")
        return int(np.searchsorted(self.starts, t, side="right")) - 1

    def mean_at(self, t: int, arm: int) -> float:
        if not 0 <= arm < self.num_arms:
            raise IndexError(f"arm {arm} outside 0..{self.num_arms - 1}")
        return float(self.means[self.segment_index(t), arm])

    def means_block(self, t0: int, t1: int) -> np.ndarray:
        """Dense ``(t1 - t0, K)`` array of means for slots ``t0 <= t < t1``."""
        if not 1 <= t0 <= t1 <= self.horizon + 1:
            raise IndexError(f"block [{t0}, {t1}) outside 1..{self.horizon}")
        slots = np.arange(t0, t1)
        seg = np.searchsorted(self.starts, slots, side="right") - 1
        return self.means[seg]

    def __getstate__(self):
        # memoised dense blocks (see bench) are rebuilt, not shipped to workers
        state = dict(self.__dict__)
        state.pop("_blocks", None)
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)

    def dense(self) -> np.ndarray:
        return self.means_block(1, self.horizon + 1)

    def best_arms(self) -> np.ndarray:
        """Lowest-index best arm per segment."""
        return np.argmax(self.means, axis=1)

    def __eq__(self, other):
        if not isinstance(other, MeanSchedule):
            return NotImplemented
        return (
            self.num_arms == other.num_arms
            and self.horizon == other.horizon
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.means, other.means)
        )

    __hash__ = None


@dataclass(frozen=True)
class EnvSummary:
    gamma_T: int
    per_arm_delta: tuple[float, ...]
    lam: float | None  # None when every grid distance is exactly zero

    @property
    def lambda_defined(self) -> bool:
        return self.lam is not None


def _validate(K, T, starts, means):
    if int(K) != K or K < 1:
        raise ScheduleError(f"num_arms must be a positive integer, got {K}")
    if int(T) != T or T < 1:
        raise ScheduleError(f"horizon must be a positive integer, got {T}")
    if starts.ndim != 1 or len(starts) == 0:
        raise ScheduleError("at least one segment is required")
    if means.shape != (len(starts), K):
        raise ScheduleError(f"means must have shape ({len(starts)}, {K}), got {means.shape}")
    if starts[0] != 1:
        raise ScheduleError(f"segment 0: first segment must start at slot 1, got {starts[0]}")
    for j in range(1, len(starts)):
        if starts[j] == starts[j - 1]:
            raise ScheduleError(f"segment {j}: duplicate start slot {starts[j]}")
        if starts[j] < starts[j - 1]:
            raise ScheduleError(f"segment {j}: start {starts[j]} precedes {starts[j - 1]}")
    if starts[-1] > T:
        raise ScheduleError(f"segment {len(starts) - 1}: start {starts[-1]} beyond horizon {T}")
    bad = np.argwhere(~((means >= 0.0) & (means <= 1.0)))
    if len(bad):
        j, i = bad[0]
        raise ScheduleError(f"segment {j}: mean {means[j, i]!r} of arm {i} outside [0, 1]")


def from_segments(K: int, T: int, segments) -> MeanSchedule:
    """Build a schedule from ``[(start_slot, [mu_0, ..., mu_{K-1}]), ...]``."""
    segments = list(segments)
    if not segments:
        raise ScheduleError("at least one segment is required")
    starts = [s for s, _ in segments]
    rows = []
    for j, (_, m) in enumerate(segments):
        m = np.asarray(m, dtype=np.float64).ravel()
        if m.shape != (K,):
            raise ScheduleError(f"segment {j}: expected {K} means, got {m.size}")
        rows.append(m)
    return MeanSchedule(K, T, np.asarray(starts), np.vstack(rows))


def stationary_env(means, T: int) -> MeanSchedule:
    means = np.asarray(means, dtype=np.float64)
    return MeanSchedule(len(means), T, np.array([1]), means[None, :])


def _flip_window(T: int) -> tuple[int, int]:
    # clamp keeps the first stationary piece non-empty for T < 6
    lo = max(2, -(-T // 3))
    hi = (2 * T) // 3
    return lo, hi


def flipping_env(T: int, delta: float) -> MeanSchedule:
    """Two arms: arm 0 fixed at 0.5, arm 1 drops from 0.8 to 0.5 - delta
    on the middle third of the horizon."""
    if T < 3:
        raise ScheduleError(f"flipping environment needs T >= 3, got {T}")
    if not 0.0 < delta < 0.5:
        raise ScheduleError(f"delta must lie in (0, 0.5), got {delta}")
    lo, hi = _flip_window(T)
    starts = [1, lo]
    means = [[0.5, 0.8], [0.5, 0.5 - delta]]
    if hi < T:
        starts.append(hi + 1)
        means.append([0.5, 0.8])
    return MeanSchedule(2, T, np.array(starts), np.array(means))


def switching_env(K: int, T: int, beta: float, rng: np.random.Generator, chunk: int = 1 << 16) -> MeanSchedule:
    """Hazard-driven environment: every slot each arm independently redraws
    its mean from U[0, 1] with probability ``beta``.

    Uses only uniform draws compared against ``beta`` so the realized schedule
    is bit-identical for a given generator state on any platform.
    """
    if K < 1:
        raise ScheduleError(f"K must be >= 1, got {K}")
    if T < 1:
        raise ScheduleError(f"T must be >= 1, got {T}")
    if not 0.0 <= beta <= 1.0:
        raise ScheduleError(f"beta must lie in [0, 1], got {beta}")
    current = rng.random(K)  # mu_0
    starts = [1]
    rows = []
    for c0 in range(1, T + 1, chunk):
        n = min(chunk, T + 1 - c0)
        fire = rng.random((n, K)) < beta
        redraws = rng.random(int(fire.sum()))
        fired_rows = np.flatnonzero(fire.any(axis=1))
        pos = 0
        for r in fired_rows:
            t = c0 + r
            cols = np.flatnonzero(fire[r])
            if t > 1:
                rows.append(current.copy())
                starts.append(t)
            current[cols] = redraws[pos:pos + len(cols)]
            pos += len(cols)
    rows.append(current.copy())
    # a redraw at slot 1 replaces mu_0 before anything is observed
    return MeanSchedule(K, T, np.array(starts), np.vstack(rows))


def sample_reward(schedule: MeanSchedule, t: int, arm: int, rng: np.random.Generator) -> int:
    """Bernoulli reward of ``arm`` at slot ``t``."""
    p = schedule.mean_at(t, arm)
    return int(rng.random() < p)


def count_breakpoints(schedule: MeanSchedule, threshold: float = 0.0) -> int:
    """Number of slots ``t < T`` with ``max_i |mu_t(i) - mu_{t+1}(i)| > threshold``."""
    if threshold < 0:
        raise ScheduleError(f"threshold must be nonnegative, got {threshold}")
    if schedule.num_segments < 2:
        return 0
    jumps = np.abs(np.diff(schedule.means, axis=0)).max(axis=1)
    return int(np.count_nonzero(jumps > threshold))


def _grid_gaps(mu: np.ndarray, epsilon: float, M: int) -> np.ndarray:
    lo = (mu - epsilon) * M
    hi = (mu + epsilon) * M
    lo_gap = np.where(np.abs(lo - np.round(lo)) < GRID_TOL, 0.0, (lo - np.floor(lo)) / M)
    hi_gap = np.where(np.abs(hi - np.round(hi)) < GRID_TOL, 0.0, (np.ceil(hi) - hi) / M)
    return np.concatenate([lo_gap.ravel(), hi_gap.ravel()])


def summarize(schedule: MeanSchedule, epsilon: float, M: int) -> EnvSummary:
    """Breakpoint count, per-arm minimal suboptimality gap and the grid gap lambda."""
    if not 0.0 < epsilon < 0.5:
        raise ScheduleError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if M < 1:
        raise ScheduleError(f"M must be >= 1, got {M}")
    means = schedule.means
    best = means.max(axis=1, keepdims=True)
    gaps = best - means
    deltas = []
    for i in range(schedule.num_arms):
        g = gaps[:, i]
        g = g[g > 0]
        deltas.append(float(g.min()) if len(g) else math.inf)
    grid = _grid_gaps(means, epsilon, M)
    grid = grid[grid > 0]
    lam = float(grid.min()) if len(grid) else None
    return EnvSummary(count_breakpoints(schedule, 0.0), tuple(deltas), lam)


def load_trace(path, T: int, delimiter: str = ",") -> MeanSchedule:
    """Read binned ground-truth means.

    The first row is the header ``t,arm_1,...,arm_K``; each following row is a
    bin start slot and K means.  Bins extend to the next start, the last one
    to ``T``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter=delimiter))
    if not rows or not rows[0] or rows[0][0].strip() != "t":
        raise TraceFormatError("missing header 't,arm_1,...,arm_K'", 1)
    header = [c.strip() for c in rows[0]]
    K = len(header) - 1
    if K < 1 or header[1:] != [f"arm_{i + 1}" for i in range(K)]:
        raise TraceFormatError("header must read 't,arm_1,...,arm_K'", 1)
    starts, means = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != K + 1:
            raise TraceFormatError(f"expected {K + 1} cells, got {len(row)}", lineno)
        try:
            start = int(row[0])
        except ValueError:
            raise TraceFormatError(f"column 1: non-integer bin start {row[0]!r}", lineno) from None
        vals = []
        for col, cell in enumerate(row[1:], start=2):
            try:
                v = float(cell)
            except ValueError:
                raise TraceFormatError(f"column {col}: non-numeric cell {cell!r}", lineno) from None
            if not 0.0 <= v <= 1.0:
                raise TraceFormatError(f"column {col}: mean {cell!r} outside [0, 1]", lineno)
            vals.append(v)
        if not starts and start != 1:
            raise TraceFormatError(f"first bin must start at slot 1, got {start}", lineno)
        if starts and start <= starts[-1]:
            raise TraceFormatError(f"bin start {start} not after previous start {starts[-1]}", lineno)
        if start > T:
            raise TraceFormatError(f"bin start {start} beyond horizon {T}", lineno)
        starts.append(start)
        means.append(vals)
    if not starts:
        raise TraceFormatError("no bins", len(rows))
    return MeanSchedule(K, T, np.array(starts), np.array(means))


def export_trace(schedule: MeanSchedule, path, delimiter: str = ",") -> None:
    """Inverse of :func:`load_trace`; floats use the shortest round-trip repr."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["t"] + [f"arm_{i + 1}" for i in range(schedule.num_arms)])
        for s, m in zip(schedule.starts, schedule.means):
            w.writerow([int(s)] + [repr(float(v)) for v in m])
