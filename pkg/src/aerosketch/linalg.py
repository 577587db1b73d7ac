"""Dense factorization kernels and the randomized estimators built on them.

Every sketch in the package reduces to a handful of operations on small
dense matrices: a thin SVD, a symmetric eigendecomposition, a QR with a
fixed sign convention, and two randomized routines (power iteration for the
top singular value, simultaneous iteration for a top-k subspace).

Sign conventions are fixed so that snapshots are reproducible: QR factors
have a nonnegative R diagonal, and singular/eigen vectors are flipped so that
their largest-magnitude entry is positive.

Random draws come from numpy's ``Generator`` (PCG64 bit generator, ziggurat
normal sampler).  ``RngState`` names a reproducible stream as a
``(seed, stream_id)`` pair and can be split into independent children.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np
from scipy.linalg import lapack

from .errors import InvalidInput

_MASK64 = (1 << 64) - 1

# Multiplier on log2(d)/eps_si for the simultaneous-iteration power count.
SIMUL_ITER_CQ = 1.0


@dataclass(frozen=True)
class RngState:
    """A named, splittable random stream.

    Identical ``(seed, stream_id)`` pairs always produce identical draws.
    """

    seed: int
    stream_id: int = 0

    def _seq(self, *extra: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(
            self.seed & _MASK64, spawn_key=(self.stream_id & _MASK64, *extra)
        )

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._seq()))

    def split(self, key: int) -> "RngState":
        """Child stream keyed by ``key``; independent of the parent and siblings."""
        child = int(self._seq(key & _MASK64).generate_state(1, np.uint64)[0])
        return RngState(self.seed, child)


RngLike = Union[RngState, np.random.Generator, int, None]


def as_generator(rng: RngLike) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngState):
        return rng.generator()
    if rng is None:
        return np.random.default_rng()
    return RngState(int(rng)).generator()


class SvdResult(NamedTuple):
    u: np.ndarray
    sigma: np.ndarray
    vt: np.ndarray


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array or raise ``InvalidInput``."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def _fix_column_signs(cols: np.ndarray) -> np.ndarray:
    """Per-column sign (+1/-1) that makes each column's largest |entry| positive."""
    if cols.size == 0:
        return np.ones(cols.shape[1])
    idx = np.argmax(np.abs(cols), axis=0)
    signs = np.sign(cols[idx, np.arange(cols.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def svd(a) -> SvdResult:
    """Thin SVD ``a = u @ diag(sigma) @ vt`` with sigma descending."""
    a = as_matrix(a)
    if a.size == 0:
        raise InvalidInput("svd of an empty matrix")
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    signs = _fix_column_signs(u)
    return SvdResult(u * signs, s, vt * signs[:, None])


def eigh(b) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    The input is symmetrized as ``(b + b.T) / 2`` first.  Eigenvalues may be
    negative; callers that need a PSD spectrum clamp themselves.
    """
    b = as_matrix(b)
    if b.shape[0] != b.shape[1]:
        raise InvalidInput(f"eigh needs a square matrix, got {b.shape}")
    lam, v = np.linalg.eigh((b + b.T) * 0.5)
    lam = lam[::-1]
    v = v[:, ::-1]
    return lam, v * _fix_column_signs(v)


def qr(a) -> tuple[np.ndarray, np.ndarray]:
    """Reduced QR with a nonnegative R diagonal.  Requires rows >= cols."""
    a = as_matrix(a)
    if a.shape[0] < a.shape[1]:
        raise InvalidInput(f"qr needs rows >= cols, got {a.shape}")
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs, r * signs[:, None]


def _orthonormalize(block: np.ndarray) -> np.ndarray:
    """Q factor of a tall block, straight from LAPACK (no sign fix).

    Used inside iteration loops where numpy's ``qr`` wrapper overhead
    dominates the arithmetic on small blocks.
    """
    qr_, tau, _, info = lapack.dgeqrf(block)
    if info != 0:
        raise np.linalg.LinAlgError(f"dgeqrf failed with info={info}")
    q, _, info = lapack.dorgqr(qr_, tau)
    if info != 0:
        raise np.linalg.LinAlgError(f"dorgqr failed with info={info}")
    return q


def power_iteration_steps(d: int) -> int:
    """Iteration count ceil(log2 d) + 1 used by the dump gate."""
    return math.ceil(math.log2(max(d, 2))) + 1


def power_iteration(a, k: int, rng: RngLike) -> tuple[float, np.ndarray]:
    """Estimate the top squared singular value of ``a`` and its right vector.

    Runs ``k`` multiplications by ``a.T @ a`` from a Gaussian start vector.
    The estimate is the Rayleigh quotient of the final iterate, so it never
    exceeds the true ``sigma_1**2``.
    """
    if k < 1:
        raise InvalidInput("power_iteration needs k >= 1")
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[1]
    e1 = np.zeros(n)
    e1[0] = 1.0
    if not a.any():
        return 0.0, e1
    gen = as_generator(rng)
    x = gen.standard_normal(n)
    x /= math.sqrt(float(x @ x))
    for _ in range(k):
        x = a.T @ (a @ x)
        nrm = math.sqrt(float(x @ x))
        if nrm == 0.0:
            return 0.0, e1
        x /= nrm
    ax = a @ x
    return float(ax @ ax), x


def simul_iter_steps(d: int, eps_si: float, c_q: float = SIMUL_ITER_CQ) -> int:
    return math.ceil(c_q * math.log2(max(d, 2)) / eps_si)


def simul_iter(
    a, k: int, eps_si: float, rng: RngLike, c_q: float = SIMUL_ITER_CQ
) -> tuple[np.ndarray, np.ndarray]:
    """Approximate top-``k`` left singular subspace of ``a`` (shape d x l).

    Returns ``(z, sigma_hat)`` with ``z`` of shape (d, k) having orthonormal
    columns and ``sigma_hat`` the matching singular value estimates in
    descending order.  The block is re-orthonormalized after every product
    with ``a @ a.T``; that leaves the spanned subspace unchanged and keeps
    the iteration from overflowing.  When ``a`` has rank below ``k`` the
    surplus columns of ``z`` are an arbitrary orthonormal completion with
    ``sigma_hat`` near zero.
    """
    a = np.asarray(a, dtype=np.float64)
    d, l = a.shape
    if not 1 <= k <= d:
        raise InvalidInput(f"simul_iter rank k={k} outside [1, {d}]")
    if not 0.0 < eps_si < 1.0:
        raise InvalidInput(f"eps_si={eps_si} outside (0, 1)")
    if not a.any():
        return np.eye(d)[:, :k], np.zeros(k)
    gen = as_generator(rng)
    q_steps = simul_iter_steps(d, eps_si, c_q)
    block = a @ gen.standard_normal((l, k))
    # With more samples than rows, one d x d product per step is cheaper.
    gram = a @ a.T if l > d else None
    for _ in range(q_steps):
        block = _orthonormalize(block)
        block = gram @ block if gram is not None else a @ (a.T @ block)
    q, _ = qr(block)
    w = a.T @ q
    lam, u = eigh(w.T @ w)
    return q @ u, np.sqrt(np.maximum(lam, 0.0))
