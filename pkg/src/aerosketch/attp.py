"""At-the-time persistent covariance sketch.

A single AeroSketch whose dump threshold tracks ``eps`` times the running
Frobenius mass.  Snapshots are never removed or modified, so a query at any
past timestamp ``t`` sums the contributions dumped up to ``t``.
"""
from __future__ import annotations

import numpy as np

from .core import AeroSketch, shrink_gram
from .errors import InvalidInput


class AttpSketch:
    def __init__(self, d: int, eps: float, rng=None, *, delta=None, core=AeroSketch):
        self.inner = core(d, eps, theta=0.0, rng=rng, delta=delta)
        self.eps = eps
        self.fro_mass = 0.0

    @property
    def clock(self) -> int:
        return self.inner.clock

    @property
    def ell(self) -> int:
        return self.inner.ell

    def update(self, a, i: int | None = None) -> None:
        a = np.asarray(a, dtype=np.float64).ravel()
        self.fro_mass += float(a @ a)
        self.inner.theta = self.eps * self.fro_mass
        self.inner.update(a, i)

    def gram(self, t: int) -> np.ndarray:
        if not 0 < t <= self.clock:
            raise InvalidInput(f"query time {t} outside (0, {self.clock}]")
        return self.inner.gram(0, t)

    def query(self, t: int | None = None) -> np.ndarray:
        """Sketch of the prefix ``A_t``; defaults to the present."""
        t = self.clock if t is None else t
        return shrink_gram(self.gram(t), self.ell)

    def snapshot_mass(self) -> int:
        return sum(s.xi for s in self.inner.snaps)

    def n_floats(self) -> int:
        return self.inner.n_floats()
