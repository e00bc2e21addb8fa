"""
Piecewise-stationary environments
=================================

A bandit environment here is a table of expected rewards that is constant
on segments of the horizon.  Rewards are Bernoulli draws from those means.
This script builds the three synthetic kinds and a trace-backed one, then
asks each for its breakpoint count and gap statistics.
"""

# %%
# Flipping: two arms, the second one dips in the middle third
# ------------------------------------------------------------
import tempfile
from pathlib import Path

import numpy as np

from cdbandit import (
    count_breakpoints,
    export_trace,
    flipping_env,
    from_segments,
    load_trace,
    sample_reward,
    summarize,
    switching_env,
)

flip = flipping_env(9, 0.1)
print("arm 2 means:", [flip.mean_at(t, 1) for t in range(1, 10)])
print("segments:", flip.segments)
print("breakpoints:", count_breakpoints(flip))

# %%
# The per-arm gap is the smallest shortfall against the best arm, and lambda
# is the smallest nonzero distance from mu +/- epsilon to the 1/M grid.
s = summarize(flip, epsilon=0.1, M=10)
print("per-arm gap:", s.per_arm_delta, "lambda:", s.lam)

# %%
# Every mean +/- 0.1 above lands on the 1/10 grid, so lambda is undefined
# (None).  Shifting a mean off the grid gives a proper value.
print("lambda for mean 0.55:", summarize(from_segments(1, 10, [(1, [0.55])]), 0.1, 10).lam)

# %%
# Switching: every slot each arm redraws its mean with probability beta
# ----------------------------------------------------------------------
# The realized schedule depends only on the generator state.
sw = switching_env(K=5, T=100_000, beta=1e-4, rng=np.random.default_rng(1))
again = switching_env(K=5, T=100_000, beta=1e-4, rng=np.random.default_rng(1))
print("segments:", sw.num_segments, "breakpoints:", count_breakpoints(sw))
print("reproducible:", np.array_equal(sw.means, again.means))

# %%
# Rewards
# -------
rng = np.random.default_rng(0)
draws = [sample_reward(flip, 4, 1, rng) for _ in range(20_000)]
print("empirical mean of arm 2 at t=4:", np.mean(draws), "(true 0.4)")

# %%
# Trace files: binned ground-truth means, one row per bin
# --------------------------------------------------------
# Small jumps can be ignored when counting breakpoints.
hand = from_segments(2, 15_000, [(1, [0.030, 0.041]), (5001, [0.032, 0.041]), (10_001, [0.030, 0.050])])
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "ctr.csv"
    export_trace(hand, path)
    print(path.read_text())
    back = load_trace(path, T=15_000)
print("all breakpoints:", count_breakpoints(back), "jumps above 0.005:", count_breakpoints(back, 0.005))
