"""Sliding-window approximate matrix multiplication.

``AeroSketchCOD`` tracks ``X_W @ Y_W.T`` for paired columns ``(x_i, y_i)``.
The residual pair ``(A, B)`` is shrunk Co-occurring Directions style; when
the residual product grows a direction past the threshold, the left and
right subspaces ``Z`` and ``H`` are moved out into a snapshot
``(Z, Z.T P, P H, H)`` with ``P = A' B'.T``.  For any orthonormal ``Z, H``::

    (I - ZZ.T) P (I - HH.T) + Z zm + mh H.T - Z (zm H) H.T == P

``AdaptiveAeroSketchCOD`` picks the threshold on the fly from the queue
length.  ``MLAeroSketchCOD`` is the ``2**j * eps * N`` ladder used by the
benchmark.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import AMPLIFIED_EPS_SI, DEFAULT_EPS_SI, _split_rng, amplification_counts, doubling_ranks
from .errors import InvalidInput
from .fd import cod_reduce
from .linalg import RngState, power_iteration, power_iteration_steps, svd, simul_iter
from .window import fact1_level, level_count


@dataclass(frozen=True, eq=False)
class CodSnapshot:
    z: np.ndarray   # d_x x xi
    h: np.ndarray   # d_y x xi
    zm: np.ndarray  # xi x d_y
    mh: np.ndarray  # d_x x xi
    s: int
    t: int

    @property
    def xi(self) -> int:
        return self.z.shape[1]

    def n_floats(self) -> int:
        return self.z.size + self.h.size + self.zm.size + self.mh.size

    def contribution(self) -> np.ndarray:
        return cod_contribution(self)


@dataclass(frozen=True, eq=False)
class ExactPair:
    x: np.ndarray
    y: np.ndarray
    s: int
    t: int

    def n_floats(self) -> int:
        return self.x.size + self.y.size


def cod_contribution(snap: CodSnapshot) -> np.ndarray:
    """``Z zm + mh H.T - Z (zm H) H.T``."""
    return snap.z @ snap.zm + snap.mh @ snap.h.T - snap.z @ (snap.zm @ snap.h) @ snap.h.T


def shrink_product(p: np.ndarray, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Factors ``(U D, V D)`` with ``D = sqrt(max(S - s_ell, 0))``, ``ell`` columns each."""
    u, s, vt = svd(p)
    cut = s[ell - 1] if ell <= s.size else 0.0
    scale = np.sqrt(np.maximum(s - cut, 0.0))
    m = min(ell, s.size)
    a = np.zeros((p.shape[0], ell))
    b = np.zeros((p.shape[1], ell))
    a[:, :m] = u[:, :m] * scale[:m]
    b[:, :m] = vt[:m].T * scale[:m]
    return a, b


class AeroSketchCOD:
    """Single-threshold sliding-window sketch of ``X_W Y_W.T`` over the last ``n`` pairs."""

    def __init__(
        self,
        dx: int,
        dy: int,
        eps: float,
        n: int,
        theta: float,
        rng=None,
        *,
        delta: float | None = None,
        eps_si: float = DEFAULT_EPS_SI,
    ):
        if not 0.0 < eps <= 1.0:
            raise InvalidInput(f"eps={eps} outside (0, 1]")
        if dx < 1 or dy < 1 or n < 1:
            raise InvalidInput(f"bad geometry dx={dx}, dy={dy}, n={n}")
        self.dx, self.dy = dx, dy
        self.eps = eps
        self.ell = math.ceil(2.0 / eps)
        self.n = n
        self.theta = float(theta)
        self.eps_si = eps_si
        self.a = np.zeros((dx, 0))
        self.b = np.zeros((dy, 0))
        self.snaps: deque = deque()
        self.clock = 0
        self.last_t = 0
        self._gen, self._est_gen = _split_rng(rng)
        self.pi_steps = power_iteration_steps(max(dx, dy))
        self.amplify = amplification_counts(delta) if delta is not None else None
        self.reductions = 0
        self.dumps = 0
        self.simul_calls = 0

    def _check(self, x, y, i):
        x = np.asarray(x, dtype=np.float64).ravel()
        y = np.asarray(y, dtype=np.float64).ravel()
        if x.size != self.dx or y.size != self.dy:
            raise InvalidInput(f"pair of dimensions ({x.size}, {y.size}), expected ({self.dx}, {self.dy})")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise InvalidInput("pair contains non-finite entries")
        i = self.clock + 1 if i is None else int(i)
        if i <= self.clock:
            raise InvalidInput(f"timestamp {i} does not advance clock {self.clock}")
        return x, y, i

    def expire(self, i: int) -> None:
        q = self.snaps
        while q and q[0].t + self.n <= i:
            q.popleft()

    def tick(self, i: int) -> None:
        if i <= self.clock:
            raise InvalidInput(f"timestamp {i} does not advance clock {self.clock}")
        self.clock = i

    def enqueue(self, entry) -> None:
        self.snaps.append(entry)
        self.last_t = entry.t

    def update(self, x, y, i: int | None = None) -> None:
        x, y, i = self._check(x, y, i)
        self.clock = i
        self.expire(i)
        self.a = np.column_stack([self.a, x])
        self.b = np.column_stack([self.b, y])
        if self.a.shape[1] >= 2 * self.ell:
            a, b = cod_reduce(self.a, self.b, self.ell)
            keep = np.flatnonzero(np.any(a != 0.0, axis=0) & np.any(b != 0.0, axis=0))
            self.a, self.b = a[:, keep], b[:, keep]
            self.reductions += 1
        self._maybe_dump(i)

    def _count_above(self, sig: np.ndarray) -> int:
        return int(np.count_nonzero((sig >= self.theta) & (sig > 0.0)))

    def _candidate(self, p: np.ndarray, k: int):
        if self.amplify is None:
            self.simul_calls += 2
            z, sig = simul_iter(p, k, self.eps_si, self._gen)
            h, _ = simul_iter(p.T, k, self.eps_si, self._gen)
            return z, h, sig
        r, s = self.amplify
        best, best_cost = None, math.inf
        for _ in range(r):
            self.simul_calls += 2
            z, sig = simul_iter(p, k, AMPLIFIED_EPS_SI, self._gen)
            h, _ = simul_iter(p.T, k, AMPLIFIED_EPS_SI, self._gen)
            zh = z[:, : self._count_above(sig)]
            resid = p - zh @ (zh.T @ p)
            cost = 0.0
            for _ in range(s):
                est, _ = power_iteration(resid, self.pi_steps, self._est_gen)
                cost = max(cost, est)
            if cost < best_cost:
                best, best_cost = (z, h, sig), cost
        return best

    def _maybe_dump(self, i: int) -> None:
        if self.a.shape[1] == 0:
            return
        p = self.a @ self.b.T
        if not p.any():
            return
        top_sq, _ = power_iteration(p, self.pi_steps, self._gen)
        if math.sqrt(top_sq) < self.theta / 2.0:
            return
        xi = 0
        for k in doubling_ranks(min(self.ell, self.dx, self.dy)):
            z, h, sig = self._candidate(p, k)
            xi = self._count_above(sig)
            if xi < k:
                break
        if xi == 0:
            return
        z, h = z[:, :xi], h[:, :xi]
        self.enqueue(CodSnapshot(z, h, z.T @ p, p @ h, self.last_t + 1, i))
        self.a = self.a - z @ (z.T @ self.a)
        self.b = self.b - h @ (h.T @ self.b)
        self.dumps += 1

    def product(self, lb: int | None = None) -> np.ndarray:
        """Pre-shrink estimate of ``X_W Y_W.T``; entries with ``t <= lb`` are ignored."""
        lb = self.clock - self.n if lb is None else lb
        out = self.a @ self.b.T
        for e in self.snaps:
            if e.t <= lb:
                continue
            if isinstance(e, CodSnapshot):
                out = out + cod_contribution(e)
            else:
                out = out + np.outer(e.x, e.y)
        return out

    def query(self) -> tuple[np.ndarray, np.ndarray]:
        if self.clock == 0:
            return np.zeros((self.dx, self.ell)), np.zeros((self.dy, self.ell))
        return shrink_product(self.product(), self.ell)

    def n_floats(self) -> int:
        return self.a.size + self.b.size + sum(e.n_floats() for e in self.snaps)


def _as_state(rng) -> RngState:
    if isinstance(rng, RngState):
        return rng
    return RngState(0 if rng is None else int(rng))


class AdaptiveAeroSketchCOD:
    """Main/auxiliary pair with a queue-length driven threshold level ``L``.

    The main sketch's threshold is always ``2**(L-1) * eps * n``.  Every ``n``
    steps the auxiliary sketch, which has seen exactly the last window,
    replaces the main one.
    """

    def __init__(self, dx: int, dy: int, eps: float, n: int, rng=None):
        self.dx, self.dy, self.eps, self.n = dx, dy, eps, n
        self.theta0 = eps * n
        self.level = 1
        self._rng = _as_state(rng)
        self._spawned = 0
        self.main = self._fresh()
        self.aux = self._fresh()
        self.swaps = 0

    def _fresh(self) -> AeroSketchCOD:
        self._spawned += 1
        return AeroSketchCOD(
            self.dx, self.dy, self.eps, self.n, self.theta, self._rng.split(self._spawned)
        )

    @property
    def theta(self) -> float:
        return 2 ** (self.level - 1) * self.theta0

    @property
    def ell(self) -> int:
        return self.main.ell

    def update(self, x, y, i: int | None = None) -> None:
        i = self.main.clock + 1 if i is None else int(i)
        self.main.expire(i)
        if self.n > 1 and i % self.n == 1 and i > 1:
            self.main = self.aux
            self.main.theta = self.theta
            self.aux = self._fresh()
            self.swaps += 1
        self.main.update(x, y, i)
        self.aux.update(x, y, i)
        size = len(self.main.snaps)
        if size >= self.level / self.eps:
            self.level += 1
        elif size <= (self.level - 1) / self.eps and self.level > 1:
            self.level -= 1
        self.main.theta = self.theta

    def query(self) -> tuple[np.ndarray, np.ndarray]:
        return self.main.query()

    def n_floats(self) -> int:
        return self.main.n_floats() + self.aux.n_floats()


class MLAeroSketchCOD:
    """Ladder of ``AeroSketchCOD`` levels with ``theta_j = 2**j * eps * n``.

    Pairs with ``|x| |y| >= theta_j`` are stored verbatim at level ``j``.
    Queue caps and level selection follow ``MLAeroSketch``.
    """

    def __init__(self, dx, dy, n, r_max, eps, rng=None, *, delta=None):
        if n < 1:
            raise InvalidInput(f"window n={n} must be >= 1")
        if r_max < 1:
            raise InvalidInput(f"r_max={r_max} must be >= 1")
        rng = _as_state(rng)
        self.dx, self.dy, self.n, self.eps = dx, dy, n, eps
        self.cap = math.ceil(8.0 / eps)
        self.levels = [
            AeroSketchCOD(dx, dy, eps, n, 2**j * eps * n, rng.split(j), delta=delta)
            for j in range(level_count(r_max))
        ]
        self.ell = self.levels[0].ell
        self.clock = 0
        self._norms: deque = deque()
        self.last_level: int | None = None
        self.last_fallback = False

    def _pop(self, level: AeroSketchCOD, i: int) -> None:
        q = level.snaps
        while q and (len(q) > self.cap or q[0].t <= i - self.n):
            q.popleft()

    def update(self, x, y, i: int | None = None) -> None:
        x = np.asarray(x, dtype=np.float64).ravel()
        y = np.asarray(y, dtype=np.float64).ravel()
        i = self.clock + 1 if i is None else int(i)
        if i <= self.clock:
            raise InvalidInput(f"timestamp {i} does not advance clock {self.clock}")
        nx, ny = float(x @ x), float(y @ y)
        self.clock = i
        self._norms.append((i, nx, ny))
        while self._norms[0][0] <= i - self.n:
            self._norms.popleft()
        weight = math.sqrt(nx * ny)
        for level in self.levels:
            self._pop(level, i)
            if weight >= level.theta:
                level.tick(i)
                level.enqueue(ExactPair(x.copy(), y.copy(), level.last_t + 1, i))
            else:
                level.update(x, y, i)
            self._pop(level, i)

    def window_mass(self) -> float:
        """``|X_W|_F |Y_W|_F``."""
        fx = math.fsum(r[1] for r in self._norms)
        fy = math.fsum(r[2] for r in self._norms)
        return math.sqrt(fx * fy)

    def select_level(self) -> tuple[int, bool]:
        head = max(self.clock - self.n, 0) + 1
        for j, level in enumerate(self.levels):
            start = level.snaps[0].s if level.snaps else level.last_t + 1
            if 1 <= start <= head:
                return j, False
        return fact1_level(self.window_mass(), self.n, len(self.levels)), True

    def product(self) -> np.ndarray:
        j, fallback = self.select_level()
        self.last_level, self.last_fallback = j, fallback
        return self.levels[j].product(max(self.clock - self.n, 0))

    def query(self) -> tuple[np.ndarray, np.ndarray]:
        if self.clock == 0:
            return np.zeros((self.dx, self.ell)), np.zeros((self.dy, self.ell))
        return shrink_product(self.product(), self.ell)

    def n_floats(self) -> int:
        return sum(level.n_floats() for level in self.levels)
