"""Monte-Carlo regret experiments.

Each trial rolls a fresh policy against a schedule in blocks of slots and
records cumulative pseudo-regret, i.e. the sum of ``best mean - mean of the
played arm``.  Seeds are derived per trial so results do not depend on how
trials are spread over worker processes, and trials are reduced in index
order.

Seed layout (stable):

* environment draws: ``SeedSequence([base_seed, r])``, shared by every policy
  so all policies face the same random environments;
* policy and reward draws: ``SeedSequence([base_seed, r, crc32(name)])``,
  spawned into one stream per tape field (see :class:`cdbandit.policy.TapeStream`).
"""
from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit

from .env import MeanSchedule
from .factory import ConfigError, make_policy
from .fit import FitResult, fit_power_law
from .policy import Policy, TapeStream

__all__ = [
    "RegretTrace",
    "ComparisonRow",
    "Comparison",
    "pseudo_regret_increment",
    "trial_seeds",
    "run_trial",
    "run_experiment",
    "compare",
]

DEFAULT_BLOCK = 1 << 15


@dataclass
class RegretTrace:
    """Trial-averaged cumulative pseudo-regret ``mean[t-1]`` for t = 1..T.

    ``per_trial`` is only populated when the experiment was run with
    ``keep_trials=True``.
    """

    name: str
    T: int
    trials: int
    mean: np.ndarray
    se: np.ndarray
    final: np.ndarray  # (trials,) final regret of each trial
    suboptimal_plays: np.ndarray  # (trials, K)
    alarms: np.ndarray  # (trials,) detector alarms, 0 for passive policies
    per_trial: np.ndarray | None = field(default=None, repr=False)

    @property
    def K(self) -> int:
        return self.suboptimal_plays.shape[1]

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def final_se(self) -> float:
        return float(self.se[-1])


def pseudo_regret_increment(schedule: MeanSchedule, t: int, chosen: int) -> float:
    """``max_i mu_t(i) - mu_t(chosen)``; arms are 0-based."""
    seg = schedule.segment_index(t)
    if not 0 <= chosen < schedule.K:
        raise IndexError(f"arm {chosen} outside 0..{schedule.K - 1}")
    row = schedule.means[seg]
    return float(row.max() - row[chosen])


def trial_seeds(base_seed: int, r: int, name: str) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """``(environment seed, policy/reward seed)`` of trial ``r``."""
    env_ss = np.random.SeedSequence([int(base_seed), int(r)])
    pol_ss = np.random.SeedSequence([int(base_seed), int(r), zlib.crc32(name.encode())])
    return env_ss, pol_ss


def _resolve_schedule(env, env_ss) -> MeanSchedule:
    if isinstance(env, MeanSchedule):
        return env
    schedule = env(np.random.default_rng(env_ss))
    if not isinstance(schedule, MeanSchedule):
        raise TypeError("environment callable must return a MeanSchedule")
    return schedule


def _build_policy(policy, schedule: MeanSchedule) -> Policy:
    p = make_policy(policy, schedule.K, schedule.T) if isinstance(policy, Mapping) else policy()
    if p.K != schedule.K:
        raise ConfigError(f"policy {p.name!r} has K={p.K} but the environment has K={schedule.K}")
    return p


@njit(cache=True, error_model="numpy")
def _accumulate(means, arms, total, cum_out, subopt):
    # sequential running sum, identical to np.cumsum over the whole horizon
    for j in range(arms.shape[0]):
        row = means[j]
        best = row[0]
        for i in range(1, row.shape[0]):
            if row[i] > best:
                best = row[i]
        got = row[arms[j]]
        total += best - got
        cum_out[j] = total
        if got != best:
            subopt[arms[j]] += 1
    return total


_BLOCK_CACHE_LIMIT = 1 << 23  # cached mean entries per fixed schedule


def _mean_blocks(schedule: MeanSchedule, block: int):
    """Dense mean blocks; memoised on fixed schedules reused across trials."""
    T, K = schedule.T, schedule.K
    bounds = [(t0, min(t0 + block, T + 1)) for t0 in range(1, T + 1, block)]
    cache = schedule.__dict__.get("_blocks")
    if cache is not None and cache[0] == block:
        return bounds, cache[1]
    blocks = [np.ascontiguousarray(schedule.means_block(a, b)) for a, b in bounds]
    if T * K <= _BLOCK_CACHE_LIMIT:
        object.__setattr__(schedule, "_blocks", (block, blocks))
    return bounds, blocks


def run_trial(env, policy, r: int, base_seed: int, name: str, block: int = DEFAULT_BLOCK):
    """One trial.  Returns ``(cumulative regret (T,), suboptimal plays (K,), alarms)``."""
    env_ss, pol_ss = trial_seeds(base_seed, r, name)
    schedule = _resolve_schedule(env, env_ss)
    p = _build_policy(policy, schedule)
    tapes = TapeStream(pol_ss, schedule.K)
    T, K = schedule.T, schedule.K
    cum = np.empty(T)
    subopt = np.zeros(K, dtype=np.int64)
    total = 0.0
    for (t0, t1), means in zip(*_mean_blocks(schedule, block)):
        tape = tapes.draw(t1 - t0)
        arms = p.play(means, tape, t0)
        total = _accumulate(means, np.ascontiguousarray(arms, dtype=np.int64), total, cum[t0 - 1 : t1 - 1], subopt)
    return cum, subopt, int(getattr(p, "n_alarms", 0))


def _policy_name(policy, env) -> str:
    if isinstance(policy, Mapping):
        return str(policy.get("name") or policy.get("kind"))
    return str(getattr(policy(), "name", "policy"))


def _two_sum_add(s, c, x):
    # Neumaier compensated accumulation, elementwise
    t = s + x
    big = np.abs(s) >= np.abs(x)
    c += np.where(big, (s - t) + x, (x - t) + s)
    return t, c


def run_experiment(
    env: MeanSchedule | Callable[[np.random.Generator], MeanSchedule],
    policy: Mapping | Callable[[], Policy],
    trials: int,
    base_seed: int = 0,
    *,
    name: str | None = None,
    workers: int = 1,
    keep_trials: bool = False,
    block: int = DEFAULT_BLOCK,
) -> RegretTrace:
    """Average cumulative pseudo-regret over ``trials`` independent runs.

    ``env`` is a fixed schedule or a picklable callable drawing one from a
    generator (a fresh environment per trial).  ``policy`` is a policy spec
    mapping (see :func:`cdbandit.factory.make_policy`) or a zero-argument
    factory.  With ``workers > 1`` trials run in a process pool; the result is
    bitwise identical to the serial run.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if block < 1:
        raise ValueError("block must be positive")
    if name is None:
        name = _policy_name(policy, env)
    job = partial(run_trial, env, policy, base_seed=base_seed, name=name, block=block)

    s = c = m2 = wmean = None
    finals, subopts, alarms, kept = [], [], [], []
    T = None

    def consume(k, res):
        nonlocal s, c, m2, wmean, T
        cum, sub, al = res
        if s is None:
            T = cum.shape[0]
            s, c = np.zeros(T), np.zeros(T)
            m2, wmean = np.zeros(T), np.zeros(T)
        elif cum.shape[0] != T:
            raise ConfigError("environment horizons differ between trials")
        s, c = _two_sum_add(s, c, cum)
        # Welford for the variance only; the mean comes from the compensated sum
        d = cum - wmean
        wmean += d / (k + 1)
        m2 += d * (cum - wmean)
        finals.append(cum[-1])
        subopts.append(sub)
        alarms.append(al)
        if keep_trials:
            kept.append(cum)

    if workers <= 1 or trials == 1:
        for r in range(trials):
            consume(r, job(r))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, trials)) as pool:
            for r, res in enumerate(pool.map(job, range(trials))):
                consume(r, res)

    mean = (s + c) / trials
    if trials > 1:
        se = np.sqrt(np.maximum(m2, 0.0) / (trials - 1) / trials)
    else:
        se = np.zeros(T)
    return RegretTrace(
        name=name,
        T=int(T),
        trials=trials,
        mean=mean,
        se=se,
        final=np.asarray(finals),
        suboptimal_plays=np.vstack(subopts),
        alarms=np.asarray(alarms, dtype=np.int64),
        per_trial=np.vstack(kept) if keep_trials else None,
    )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    final_mean: float
    final_se: float
    fit: FitResult


@dataclass(frozen=True)
class Comparison:
    """``ratios[(a, b)]`` is final mean regret of ``a`` over that of ``b``."""

    T: int
    rows: tuple[ComparisonRow, ...]
    ratios: dict

    def to_text(self) -> str:
        lines = [f"{'policy':<16}{'final':>14}{'se':>12}{'a':>12}{'b':>9}{'c':>12}  flags"]
        for row in self.rows:
            f = row.fit
            flags = ("degenerate " if f.degenerate else "") + ("" if f.converged else "unconverged")
            lines.append(
                f"{row.name:<16}{row.final_mean:>14.6g}{row.final_se:>12.4g}"
                f"{f.a:>12.5g}{f.b:>9.4f}{f.c:>12.5g}  {flags.strip()}"
            )
        if self.ratios:
            lines.append("")
            lines.append("final regret ratios")
            for (a, b), v in self.ratios.items():
                lines.append(f"  {a} / {b} = {v:.6g}")
        return "\n".join(lines)


def compare(traces: Mapping[str, RegretTrace] | Sequence[RegretTrace]) -> Comparison:
    """Final regrets, power-law fits of the mean curves and pairwise ratios."""
    if isinstance(traces, Mapping):
        items = list(traces.items())
    else:
        items = [(tr.name, tr) for tr in traces]
    if not items:
        raise ValueError("no traces to compare")
    horizons = {tr.T for _, tr in items}
    if len(horizons) > 1:
        raise ValueError(f"traces have different horizons: {sorted(horizons)}")
    rows = tuple(ComparisonRow(n, tr.final_mean, tr.final_se, fit_power_law(tr.mean)) for n, tr in items)
    ratios = {}
    for i, ra in enumerate(rows):
        for rb in rows[i + 1 :]:
            if rb.final_mean != 0.0:
                v = ra.final_mean / rb.final_mean
            else:
                v = 1.0 if ra.final_mean == 0.0 else math.inf
            ratios[(ra.name, rb.name)] = v
    return Comparison(items[0][1].T, rows, ratios)
