"""
Curve fits and the command line
===============================

Regret curves are summarised by fitting ``a * t**b + c``.  The exponent
``b`` says how close to linear the growth is.  The same fit, the
experiments and the detector bounds are reachable from the ``cdbandit``
command, and this script drives it in-process.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from cdbandit import fit_power_law
from cdbandit.cli import main

t = np.arange(1, 50_001, dtype=float)
f = fit_power_law(3.0 * t**0.6 + 2.0)
print(f"a={f.a:.6f} b={f.b:.6f} c={f.c:.6f} converged={f.converged}")
print("constant series is degenerate:", fit_power_law(np.ones(100)).degenerate)

# %%
# Experiments from a preset
# -------------------------
# ``--dry-run`` prints the resolved configuration.  That text is itself a
# valid ``--config`` file.
main(["run", "--preset", "flipping", "--T", "5000", "--trials", "10", "--dry-run"])

# %%
with tempfile.TemporaryDirectory() as tmp:
    out = Path(tmp)
    main(["run", "--preset", "flipping", "--T", "5000", "--trials", "10", "--output", str(out),
          "--policy", "cusum-ucb", "--policy", "sw-ucb"])
    print(sorted(p.name for p in out.iterdir()))
    print((out / "summary.txt").read_text().split("#\n")[-1])
    # refit a written trace
    main(["fit", str(out / "trace_sw-ucb.csv")])

# %%
# Bounds and detector checks
# --------------------------
main(["constants", "--epsilon", "0.1", "--M", "100", "--lambda", "0.05", "--T", "100000", "--gamma-T", "2",
      "--u0", "0.5"])
main(["detect-eval", "--trials", "100", "--fa-T", "20000"])
