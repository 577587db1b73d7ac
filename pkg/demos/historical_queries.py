"""
Queries at any past time
========================

A persistent sketch answers "what was the covariance of the prefix up to
time t" for every t, after the stream has moved on.
"""

import numpy as np

from aerosketch import AttpSketch, RngState
from aerosketch.metrics import covariance_error
from aerosketch.streams import GenSpec, generate

rows = generate(GenSpec("uniform", 2000, 32, seed=1))
sk = AttpSketch(32, 0.1, RngState(1))
for i, a in enumerate(rows, 1):
    sk.update(a, i)

print(f"snapshots stored: {len(sk.inner.snaps)}")
for t in (100, 500, 1000, 1500, 2000):
    prefix = rows[:t]
    err = covariance_error(prefix.T @ prefix, sk.query(t))
    print(f"t={t:5d}  error={err:.4f}")
