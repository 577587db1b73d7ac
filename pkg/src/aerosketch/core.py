"""Single-level AeroSketch: FD residual buffer plus a queue of dumped snapshots.

Each update inserts the row into the residual buffer ``C`` (shrinking it FD
style when full), then asks power iteration whether any direction of the
buffer has grown past half the dump threshold.  If so, a doubling sequence
of simultaneous iterations finds every direction whose estimated squared
singular value reaches the threshold, and those directions are moved out of
the buffer into a snapshot ``(Z, Z.T C'.T C')``.

A snapshot restores the pre-dump Gram matrix exactly for any orthonormal
``Z``, approximate or not::

    (C' - C' Z Z.T).T (C' - C' Z Z.T) + Z M + M.T Z.T - Z (M Z) Z.T == C'.T C'

with ``M = Z.T C'.T C'``.  Queries sum these contributions over a time range
and shrink the result back to ``ell`` rows.
"""
from __future__ import annotations

import math
from bisect import bisect_right
from collections import deque
from dataclasses import dataclass
from itertools import islice

import numpy as np

from .errors import InvalidInput
from .fd import FdBuffer
from .linalg import (
    RngState,
    eigh,
    power_iteration,
    power_iteration_steps,
    simul_iter,
)

DEFAULT_EPS_SI = 0.4
AMPLIFIED_EPS_SI = 0.2


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Dumped subspace ``z`` (d x xi) with ``m = z.T C'.T C'`` (xi x d)."""

    z: np.ndarray
    m: np.ndarray
    s: int
    t: int
    theta: float = 0.0

    @property
    def xi(self) -> int:
        return self.z.shape[1]

    def n_floats(self) -> int:
        return self.z.size + self.m.size

    def contribution(self) -> np.ndarray:
        return restore_contribution(self)


@dataclass(frozen=True, eq=False)
class ExactRow:
    """A row stored verbatim in a level queue (too heavy to sketch)."""

    row: np.ndarray
    s: int
    t: int

    def n_floats(self) -> int:
        return self.row.size


def restore_contribution(snap: Snapshot) -> np.ndarray:
    """``Z M + M.T Z.T - Z (M Z) Z.T``: the Gram mass removed by a dump."""
    zm = snap.z @ snap.m
    core = snap.m @ snap.z
    return zm + zm.T - snap.z @ core @ snap.z.T


def shrink_gram(gram: np.ndarray, ell: int) -> np.ndarray:
    """Top ``ell`` rows of ``sqrt(max(Lambda - lambda_ell, 0)) V.T``."""
    lam, v = eigh(gram)
    lam = np.maximum(lam, 0.0)
    cut = lam[ell - 1] if ell <= lam.size else 0.0
    scale = np.sqrt(np.maximum(lam - cut, 0.0))
    out = np.zeros((ell, gram.shape[0]))
    m = min(ell, lam.size)
    out[:m] = scale[:m, None] * v[:, :m].T
    return out


def amplification_counts(delta: float) -> tuple[int, int]:
    """Candidate count r = ceil(log_100(2/delta)) and estimator count s = ceil(2 log_3(2/delta))."""
    if not 0.0 < delta < 1.0:
        raise InvalidInput(f"delta={delta} outside (0, 1)")
    r = math.ceil(round(math.log(2.0 / delta, 100), 12))
    s = math.ceil(round(2.0 * math.log(2.0 / delta, 3), 12))
    return max(r, 1), max(s, 1)


def doubling_ranks(cap: int) -> list[int]:
    """k = min(2**j, cap) for j = 1 .. ceil(log2 cap), deduplicated."""
    if cap <= 1:
        return [1]
    ks = []
    for j in range(1, math.ceil(math.log2(cap)) + 1):
        k = min(2**j, cap)
        if not ks or ks[-1] != k:
            ks.append(k)
    return ks


def _split_rng(rng) -> tuple[np.random.Generator, np.random.Generator]:
    if isinstance(rng, np.random.Generator):
        return rng, rng.spawn(1)[0]
    if not isinstance(rng, RngState):
        rng = RngState(0 if rng is None else int(rng))
    return rng.generator(), rng.split(1).generator()


class AeroSketch:
    """One AeroSketch level with dump threshold ``theta``.

    ``theta`` may be reassigned between updates (the persistent and
    distributed variants do so).  Setting ``delta`` switches every
    simultaneous iteration to the amplified candidate search; ``amplify_r``
    and ``amplify_s`` override the derived counts.
    """

    def __init__(
        self,
        d: int,
        eps: float,
        theta: float = 0.0,
        rng=None,
        *,
        delta: float | None = None,
        eps_si: float = DEFAULT_EPS_SI,
        amplify_r: int | None = None,
        amplify_s: int | None = None,
    ):
        if not 0.0 < eps <= 1.0:
            raise InvalidInput(f"eps={eps} outside (0, 1]")
        if theta < 0:
            raise InvalidInput(f"theta={theta} must be >= 0")
        if d < 1:
            raise InvalidInput(f"d={d} must be >= 1")
        self.d = d
        self.eps = eps
        self.ell = math.ceil(2.0 / eps)
        self.theta = float(theta)
        self.eps_si = eps_si
        self.c = FdBuffer(d, self.ell)
        self.snaps: deque = deque()
        self.clock = 0
        self.last_t = 0
        self._gen, self._est_gen = _split_rng(rng)
        self.pi_steps = power_iteration_steps(d)
        self.delta = delta
        self.amplify = None
        if delta is not None or amplify_r is not None or amplify_s is not None:
            r, s = amplification_counts(delta) if delta is not None else (1, 1)
            self.amplify = (amplify_r or r, amplify_s or s)
        # per-update trace, read by tests and the benchmark
        self.last_doubling_steps = 0
        self.last_simul_calls = 0
        self.simul_calls = 0
        self.dumps = 0

    # -- ingestion ---------------------------------------------------------

    def _check_row(self, a, i) -> tuple[np.ndarray, int]:
        a = np.asarray(a, dtype=np.float64).ravel()
        if a.size != self.d:
            raise InvalidInput(f"row of dimension {a.size}, expected {self.d}")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("row contains non-finite entries")
        i = self.clock + 1 if i is None else int(i)
        if i <= self.clock:
            raise InvalidInput(f"timestamp {i} does not advance clock {self.clock}")
        return a, i

    def update(self, a, i: int | None = None) -> None:
        a, i = self._check_row(a, i)
        self.clock = i
        self.last_doubling_steps = 0
        self.last_simul_calls = 0
        self.c.append(a)
        self._maybe_dump(i)

    def update_amplified(self, a, i: int | None = None) -> None:
        if self.amplify is None:
            raise InvalidInput("amplification not configured (delta unset)")
        self.update(a, i)

    def tick(self, i: int) -> None:
        """Advance the clock without ingesting a row."""
        if i <= self.clock:
            raise InvalidInput(f"timestamp {i} does not advance clock {self.clock}")
        self.clock = i

    def enqueue(self, entry) -> None:
        self.snaps.append(entry)
        self.last_t = entry.t

    # -- dump search -------------------------------------------------------

    def _candidate(self, rows: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        if self.amplify is None:
            self.last_simul_calls += 1
            return simul_iter(rows.T, k, self.eps_si, self._gen)
        r, s = self.amplify
        best, best_cost = None, math.inf
        for _ in range(r):
            self.last_simul_calls += 1
            z, sig = simul_iter(rows.T, k, AMPLIFIED_EPS_SI, self._gen)
            xi = self._count_above(sig)
            zh = z[:, :xi]
            resid = rows - (rows @ zh) @ zh.T
            cost = 0.0
            for _ in range(s):
                est, _ = power_iteration(resid.T, self.pi_steps, self._est_gen)
                cost = max(cost, est)
            if cost < best_cost:
                best, best_cost = (z, sig), cost
        return best

    def _count_above(self, sig: np.ndarray) -> int:
        sq = sig * sig
        return int(np.count_nonzero((sq >= self.theta) & (sq > 0.0)))

    def _maybe_dump(self, i: int) -> None:
        rows = self.c.rows
        if rows.shape[0] == 0 or not rows.any():
            return
        top, _ = power_iteration(rows.T, self.pi_steps, self._gen)
        if top < self.theta / 2.0:
            return
        xi = 0
        z = None
        for k in doubling_ranks(min(self.ell, self.d)):
            self.last_doubling_steps += 1
            z, sig = self._candidate(rows, k)
            xi = self._count_above(sig)
            if xi < k:
                break
        self.simul_calls += self.last_simul_calls
        if xi == 0:
            return
        z = z[:, :xi]
        proj = rows @ z
        m = proj.T @ rows
        self.enqueue(Snapshot(z, m, self.last_t + 1, i, self.theta))
        self.c.set_rows(rows - proj @ z.T)
        self.dumps += 1

    # -- queries -----------------------------------------------------------

    def snapshots_in(self, lb: int, ub: int) -> list:
        """Snapshot entries with ``lb < t <= ub`` (the queue is time sorted)."""
        hi = bisect_right(self.snaps, ub, key=lambda e: e.t)
        lo = bisect_right(self.snaps, lb, key=lambda e: e.t)
        return [e for e in islice(self.snaps, lo, hi) if isinstance(e, Snapshot)]

    def gram(self, lb: int, ub: int, *, residual: bool | None = None) -> np.ndarray:
        """Restored Gram matrix for ``(lb, ub]`` before the final shrink.

        Only the current residual buffer is held, so it is included when
        ``ub`` is the present time and left out for historical ``ub``.
        """
        if residual is None:
            residual = ub >= self.clock
        out = self.c.gram() if residual else np.zeros((self.d, self.d))
        for snap in self.snapshots_in(lb, ub):
            out += restore_contribution(snap)
        return out

    def query(self, lb: int, ub: int) -> np.ndarray:
        if lb >= ub:
            raise InvalidInput(f"empty query range ({lb}, {ub}]")
        if ub > self.clock:
            raise InvalidInput(f"query bound {ub} is past clock {self.clock}")
        return shrink_gram(self.gram(lb, ub), self.ell)

    # -- accounting --------------------------------------------------------

    def n_floats(self) -> int:
        return self.c.filled * self.d + sum(e.n_floats() for e in self.snaps)

    def snapshot_mass(self, lb: int, ub: int) -> int:
        return sum(s.xi for s in self.snapshots_in(lb, ub))
