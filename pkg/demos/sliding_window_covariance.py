"""
Sliding-window covariance sketch
================================

Track the covariance of the last N rows of a noisy low-rank stream with a
ladder of snapshot sketches, and compare against the exact window.
"""

import numpy as np

from aerosketch import MLAeroSketch, RngState
from aerosketch.metrics import covariance_error
from aerosketch.streams import GenSpec, generate

# a stream of 3000 rows in 64 dimensions with a decaying spectrum
rows = generate(GenSpec("noisy", 3000, 64, zeta=10.0, seed=0))
window, eps = 1000, 0.1
r_max = float(np.max(np.sum(rows * rows, axis=1)))

sk = MLAeroSketch(64, window, r_max, eps, RngState(0))
print(f"levels: {len(sk.levels)}, rows kept per query: {sk.ell}")

for i, a in enumerate(rows, 1):
    sk.update(a, i)
    if i % 500 == 0:
        w = rows[max(0, i - window):i]
        b = sk.query()
        err = covariance_error(w.T @ w, b)
        print(f"t={i:5d}  level={sk.last_level}  error={err:.4f}  floats={sk.n_floats()}")

# the exact window would hold N*d floats
print("exact window floats:", window * 64)
