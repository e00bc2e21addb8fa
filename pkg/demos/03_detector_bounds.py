"""
Closed-form detector guarantees
===============================

The CUSUM detector comes with bounds on detection delay and false alarms.
This script evaluates the constants, sets them against simulation and
derives the threshold and exploration rate that minimise the regret bound.
"""

# %%
import math

from cdbandit import (
    DetectorParams,
    compute_mgf_roots,
    estimate_detection_metrics,
    prop1_bounds,
    theorem3_bounds,
    theorem3_constants,
    tuned_params,
)

eps, M, h = 0.1, 100, 50.0
c = theorem3_constants(eps, M, lam=0.05)
print(f"C1 = {c.C1:.4g} (log {c.log_C1:.4f}), C2 = {c.C2:.6f}")

# %%
# C1 is tiny, so the false-alarm bound is loose at this threshold.  With
# M = 1000 the constant leaves the float64 range altogether and only its
# log remains usable.
print("log C1 at M=1000:", theorem3_constants(eps, 1000, lam=0.005).log_C1)

# %%
# Bounds given the burn-in estimate
# ---------------------------------
roots = compute_mgf_roots(u0=0.5, u0_hat=0.5, epsilon=eps)
print(f"r- = {roots.r_minus:.4f}, its lower bound r_hat- = {roots.r_hat_minus:.4f} = ln 1.5")
pb = prop1_bounds(u0_hat=0.5, u0=0.5, u1=0.8, epsilon=eps, h=h, T=100_000)
print(f"delay bound {pb.delay_bound:.1f}, false-alarm bound {pb.false_alarm_bound:.3g}")

# %%
# Against simulation
# ------------------
p = DetectorParams(eps, M, h)
sim = estimate_detection_metrics("cusum", p, 0.5, 0.8, change_slot=5001, T=10_000, trials=300, seed=0)
delay_bound, fa_bound = theorem3_bounds(eps, M, h, T=100_000, lam=0.05)
print(f"simulated delay {sim.mean_delay:.1f} vs {pb.delay_bound:.1f} at the exact estimate")
print(f"unconditional bounds: delay {delay_bound:.1f}, false alarms {fa_bound:.4g}")

# %%
# The simulated delay sits a little above 255.  The bound holds given the
# burn-in estimate, and averaging it over the estimates the detector actually
# saw gives a larger number.
u = sim.u0_at_change
good = [x for x in u if not math.isnan(x) and abs(x - 0.5) < eps]
print(f"bound averaged over estimates: {sum((h + 1) / (abs(0.8 - x) - eps) for x in good) / len(good):.1f}")

# %%
# Tuned threshold and exploration rate
# ------------------------------------
# Made-up constants chosen to show the formula's shape.
tp = tuned_params(T=100_000, gamma_T=2, K=2, C1=0.05, C2=c.C2)
print(f"h = {tp.h:.1f}, alpha = {tp.alpha:.4f}")
