"""Probe records and exact error oracles shared by the simulator and the benchmark."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

CSV_HEADER = (
    "step",
    "empirical_error",
    "sketch_rows",
    "sketch_bytes",
    "amortized_update_ns",
    "comm_bytes",
    "level_selected",
)


@dataclass
class MetricsReport:
    step: int
    empirical_error: float | None
    sketch_rows: int
    sketch_bytes: int
    cum_update_ns: int
    comm_bytes: int | None = None
    level_selected: int | None = None

    @property
    def amortized_update_ns(self) -> float:
        return self.cum_update_ns / self.step if self.step else 0.0

    def csv_row(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [
            str(self.step),
            fmt(self.empirical_error),
            str(self.sketch_rows),
            str(self.sketch_bytes),
            fmt(float(self.amortized_update_ns)),
            fmt(self.comm_bytes),
            fmt(self.level_selected),
        ]


def report_fields() -> list[str]:
    return [f.name for f in fields(MetricsReport)]


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value; symmetric input goes through ``eigvalsh``."""
    if m.shape[0] == m.shape[1] and np.allclose(m, m.T, rtol=0, atol=1e-12 * (1 + np.abs(m).max())):
        lam = np.linalg.eigvalsh((m + m.T) * 0.5)
        return float(max(abs(lam[0]), abs(lam[-1])))
    return float(np.linalg.norm(m, 2))


def covariance_error(gram: np.ndarray, sketch: np.ndarray) -> float:
    """``|A.T A - B.T B|_2 / |A|_F**2`` given the exact Gram ``A.T A``."""
    mass = float(np.trace(gram))
    if mass <= 0.0:
        return 0.0
    return spectral_norm(gram - sketch.T @ sketch) / mass


def product_error(x: np.ndarray, y: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """``|X Y.T - A B.T|_2 / (|X|_F |Y|_F)`` with samples as columns of ``x`` and ``y``."""
    denom = math.sqrt(float(np.sum(x * x)) * float(np.sum(y * y)))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(x @ y.T - a @ b.T, 2)) / denom
