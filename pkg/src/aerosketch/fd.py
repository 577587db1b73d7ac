"""Frequent Directions and Co-occurring Directions shrink steps."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import InvalidInput
from .linalg import as_matrix, svd


def fd_reduce(b, ell: int) -> np.ndarray:
    """Shrink a full ``2*ell``-row buffer by its ``ell``-th squared singular value.

    Returns a matrix of the same shape as ``b`` whose nonzero rows are
    ``sqrt(max(sigma**2 - sigma_ell**2, 0)) * v.T``; at most ``ell - 1`` of
    them are nonzero.  When ``b`` has fewer than ``ell`` columns there is no
    ``ell``-th singular value and the buffer is only rotated, not shrunk.
    """
    b = as_matrix(b, "buffer")
    if b.shape[0] != 2 * ell:
        raise InvalidInput(f"fd_reduce expects {2 * ell} rows, got {b.shape[0]}")
    _, s, vt = svd(b)
    cut = s[ell - 1] ** 2 if ell <= s.size else 0.0
    out = np.zeros_like(b)
    out[: s.size] = np.sqrt(np.maximum(s * s - cut, 0.0))[:, None] * vt
    return out


class FdBuffer:
    """A ``2*ell x d`` row buffer that applies ``fd_reduce`` when full.

    Rows past ``filled`` are kept exactly zero.  ``reductions`` counts the
    shrink events, which the benchmark uses to compare sketches.
    """

    def __init__(self, d: int, ell: int):
        if d < 1 or ell < 1:
            raise InvalidInput(f"bad buffer geometry d={d}, ell={ell}")
        self.d = d
        self.ell = ell
        self.buf = np.zeros((2 * ell, d))
        self.filled = 0
        self.reductions = 0

    @property
    def rows(self) -> np.ndarray:
        """View of the occupied rows."""
        return self.buf[: self.filled]

    def append(self, row: np.ndarray) -> bool:
        """Insert one row; reduce if that fills the buffer.  Returns True on reduce."""
        self.buf[self.filled] = row
        self.filled += 1
        if self.filled == 2 * self.ell:
            self.reduce()
            return True
        return False

    def reduce(self) -> None:
        shrunk = fd_reduce(self.buf, self.ell)
        keep = np.flatnonzero(np.any(shrunk != 0.0, axis=1))
        self.buf[:] = 0.0
        self.buf[: keep.size] = shrunk[keep]
        self.filled = keep.size
        self.reductions += 1

    def set_rows(self, rows: np.ndarray) -> None:
        """Overwrite the occupied rows in place (row count unchanged)."""
        self.buf[: self.filled] = rows

    def gram(self) -> np.ndarray:
        r = self.rows
        return r.T @ r

    def copy(self) -> "FdBuffer":
        out = FdBuffer(self.d, self.ell)
        out.buf = self.buf.copy()
        out.filled = self.filled
        out.reductions = self.reductions
        return out


def fd_stream(rows: Iterable, ell: int) -> np.ndarray:
    """Frequent Directions over a whole stream; returns the occupied sketch rows.

    Guarantees ``||A.T A - B.T B||_2 <= ||A||_F**2 / ell``.
    """
    buffer = None
    for row in rows:
        row = np.asarray(row, dtype=np.float64).ravel()
        if buffer is None:
            buffer = FdBuffer(row.size, ell)
        elif row.size != buffer.d:
            raise InvalidInput(f"row of dimension {row.size}, expected {buffer.d}")
        buffer.append(row)
    if buffer is None:
        raise InvalidInput("fd_stream over an empty stream")
    return buffer.rows.copy()


def cod_reduce(a, b, ell: int) -> tuple[np.ndarray, np.ndarray]:
    """Co-occurring Directions shrink of the column-paired product ``a @ b.T``.

    With ``a = Q_a R_a``, ``b = Q_b R_b`` and ``R_a R_b.T = U S V.T`` the
    result is ``(Q_a U D, Q_b V D)`` where ``D = sqrt(max(S - s_ell, 0))``,
    zero-padded to the input column count.  The product of the outputs has
    spectrum ``max(S - s_ell, 0)``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise InvalidInput(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    cols = a.shape[1]
    out_a = np.zeros_like(a)
    out_b = np.zeros_like(b)
    if not a.any() or not b.any():
        return out_a, out_b
    qa, ra = np.linalg.qr(a)
    qb, rb = np.linalg.qr(b)
    u, s, vt = svd(ra @ rb.T)
    cut = s[ell - 1] if ell <= s.size else 0.0
    scale = np.sqrt(np.maximum(s - cut, 0.0))
    m = min(s.size, cols)
    out_a[:, :m] = (qa @ u[:, :m]) * scale[:m]
    out_b[:, :m] = (qb @ vt[:m].T) * scale[:m]
    return out_a, out_b
