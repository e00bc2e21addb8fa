"""
CUSUM and Page-Hinkley on a Bernoulli stream
============================================

Both detectors run two random walks, one for upward and one for downward
drift, and alarm when either crosses ``h``.  CUSUM measures drift against a
mean frozen after a burn-in of ``M`` samples; Page-Hinkley uses the running
mean.  Detectors only report alarms, and the caller decides what to reset.
"""

# %%
import numpy as np

from cdbandit import CusumDetector, DetectorParams, PhtDetector, estimate_detection_metrics, run_detector

rng = np.random.default_rng(3)
stream = np.r_[rng.random(600) < 0.5, rng.random(600) < 0.8].astype(float)
params = DetectorParams(epsilon=0.1, M=100, h=50.0)

for kind in ("cusum", "pht"):
    g_plus, g_minus, first = run_detector(kind, params, stream)
    print(f"{kind:6s} first alarm at sample {first + 1}, peak g+ {g_plus.max():.1f}")

# %%
# Step-by-step use
# ----------------
# The CUSUM object exposes its burn-in estimate once M samples are in.
det = CusumDetector(params)
for k, y in enumerate(stream, start=1):
    if det.update(y):
        print(f"alarm at sample {k}; u0_hat was {det.u0_hat:.2f}")
        det.reset()
        break

pht = PhtDetector(params)
for y in stream[:5]:
    pht.update(y)
print("Page-Hinkley running mean after 5 samples:", pht.y_hat)

# %%
# Complementing the stream swaps the two walks exactly
# ----------------------------------------------------
gp, gm, _ = run_detector("cusum", params, stream)
gp_c, gm_c, _ = run_detector("cusum", params, 1.0 - stream)
print("swapped bit for bit:", np.array_equal(gp, gm_c) and np.array_equal(gm, gp_c))

# %%
# Delay and false alarms by simulation
# ------------------------------------
# Alarms before the change count as false alarms and reset the detector.
m = estimate_detection_metrics("cusum", params, 0.5, 0.8, change_slot=2001, T=4000, trials=200, seed=0)
print(f"mean delay {m.mean_delay:.1f} slots, {m.misses} misses, {m.false_alarms:.3f} false alarms per trial")
