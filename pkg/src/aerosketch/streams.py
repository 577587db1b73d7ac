"""Synthetic stream generators and the CSV / AERO row formats.

AERO layout (little endian)::

    b"AERO" | u8 version=1 | u32 d | u64 n (0 = read to EOF) | n*d float64, row major
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import FormatError, InvalidInput
from .linalg import RngState

MAGIC = b"AERO"
VERSION = 1
_HEADER = struct.Struct("<4sBIQ")

UNIFORM = "uniform"
NOISY = "noisy"


@dataclass(frozen=True)
class StreamRecord:
    t: int
    vec: np.ndarray
    site: int | None = None


@dataclass(frozen=True)
class GenSpec:
    kind: str
    rows: int
    dim: int
    zeta: float = 10.0
    seed: int = 0
    dim_y: int | None = None

    def __post_init__(self):
        if self.kind not in (UNIFORM, NOISY):
            raise InvalidInput(f"unknown generator {self.kind!r}")
        if self.rows < 1 or self.dim < 1:
            raise InvalidInput(f"rows={self.rows} and dim={self.dim} must be >= 1")
        if self.kind == NOISY and not self.zeta > 0:
            raise InvalidInput(f"zeta={self.zeta} must be > 0")


def _records(mat: np.ndarray) -> Iterator[StreamRecord]:
    for i, row in enumerate(mat, 1):
        yield StreamRecord(i, row)


def uniform_matrix(spec: GenSpec, dim: int | None = None, stream: int = 0) -> np.ndarray:
    """Entries uniform on (0, 1]."""
    gen = RngState(spec.seed).split(stream).generator()
    return 1.0 - gen.random((spec.rows, dim or spec.dim))


def noisy_matrix(spec: GenSpec, dim: int | None = None, stream: int = 0) -> np.ndarray:
    """``S D U + N / zeta`` with a linearly decaying diagonal ``D``."""
    d = dim or spec.dim
    gen = RngState(spec.seed).split(stream).generator()
    u, r = np.linalg.qr(gen.standard_normal((d, d)))
    u = u * np.where(np.diag(r) < 0, -1.0, 1.0)
    diag = 1.0 - np.arange(d) / d
    s = gen.standard_normal((spec.rows, d))
    noise = gen.standard_normal((spec.rows, d))
    return (s * diag) @ u + noise / spec.zeta


def generate(spec: GenSpec, dim: int | None = None, stream: int = 0) -> np.ndarray:
    if spec.kind == UNIFORM:
        return uniform_matrix(spec, dim, stream)
    return noisy_matrix(spec, dim, stream)


def gen_uniform(spec: GenSpec) -> Iterator[StreamRecord]:
    if spec.kind != UNIFORM:
        raise InvalidInput(f"gen_uniform given a {spec.kind} spec")
    return _records(uniform_matrix(spec))


def gen_noisy(spec: GenSpec) -> Iterator[StreamRecord]:
    if spec.kind != NOISY:
        raise InvalidInput(f"gen_noisy given a {spec.kind} spec")
    return _records(noisy_matrix(spec))


# -- files ---------------------------------------------------------------


def _stack(records: Iterable) -> np.ndarray:
    rows = [np.asarray(r.vec if isinstance(r, StreamRecord) else r, dtype=np.float64) for r in records]
    if not rows:
        raise InvalidInput("cannot save an empty stream")
    d = rows[0].size
    for k, r in enumerate(rows, 1):
        if r.ndim != 1 or r.size != d:
            raise InvalidInput(f"record {k} has shape {r.shape}, expected ({d},)")
    return np.vstack(rows)


def save_stream(records, path, fmt: str = "aero") -> None:
    mat = records if isinstance(records, np.ndarray) and records.ndim == 2 else _stack(records)
    path = Path(path)
    if fmt == "aero":
        with path.open("wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, mat.shape[1], mat.shape[0]))
            fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())
    elif fmt == "csv":
        with path.open("w") as fh:
            for row in mat:
                fh.write(",".join(format(float(v), ".17g") for v in row))
                fh.write("\n")
    else:
        raise InvalidInput(f"unknown format {fmt!r}")


def read_aero(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than the AERO header")
    magic, version, d, n = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported AERO version {version}")
    if d == 0:
        raise FormatError("AERO header declares d = 0")
    body = raw[_HEADER.size:]
    if n == 0:
        if len(body) % (8 * d):
            raise FormatError("trailing bytes do not form whole rows")
        n = len(body) // (8 * d)
    elif len(body) != 8 * d * n:
        raise FormatError(f"expected {8 * d * n} payload bytes, found {len(body)}")
    mat = np.frombuffer(body, dtype="<f8").reshape(n, d).astype(np.float64)
    if not np.all(np.isfinite(mat)):
        raise FormatError("non-finite value in AERO payload")
    return mat


def read_csv(path) -> np.ndarray:
    rows = []
    d = None
    with Path(path).open() as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(x) for x in line.split(",")]
            except ValueError as exc:
                raise FormatError(f"line {lineno}: {exc}") from exc
            if d is None:
                d = len(vals)
            elif len(vals) != d:
                raise FormatError(f"line {lineno}: {len(vals)} fields, expected {d}")
            if not all(math.isfinite(v) for v in vals):
                raise FormatError(f"line {lineno}: non-finite value")
            rows.append(vals)
    if not rows:
        raise FormatError("no data rows")
    return np.array(rows, dtype=np.float64)


def read_matrix(path, fmt: str | None = None) -> np.ndarray:
    fmt = fmt or ("aero" if str(path).endswith(".aero") else "csv")
    if fmt == "aero":
        return read_aero(path)
    if fmt == "csv":
        return read_csv(path)
    raise InvalidInput(f"unknown format {fmt!r}")


def load_stream(path, fmt: str | None = None) -> Iterator[StreamRecord]:
    return _records(read_matrix(path, fmt))


# -- norm handling ---------------------------------------------------------


@dataclass(frozen=True)
class NormStats:
    min_sq: float
    max_sq: float

    @property
    def ratio(self) -> float:
        """Induced ``R = max/min`` after rescaling so the smallest row has norm 1."""
        return self.max_sq / self.min_sq if self.min_sq > 0 else math.inf


def norm_stats(mat: np.ndarray) -> NormStats:
    sq = np.einsum("ij,ij->i", mat, mat)
    return NormStats(float(sq.min()), float(sq.max()))


def normalize(mat: np.ndarray) -> tuple[np.ndarray, NormStats]:
    """Rescale so the smallest nonzero squared row norm is 1."""
    sq = np.einsum("ij,ij->i", mat, mat)
    pos = sq[sq > 0]
    if pos.size == 0:
        raise InvalidInput("cannot normalize an all-zero stream")
    out = mat / math.sqrt(float(pos.min()))
    return out, norm_stats(out)
