"""Scenario runner: feed a stream through a sketch, probe it against an exact oracle, write CSV."""
from __future__ import annotations

import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from .amm import MLAeroSketchCOD
from .attp import AttpSketch
from .core import AeroSketch, Snapshot
from .distributed import round_robin, run_simulation
from .errors import InvalidInput, OracleCapExceeded
from .fd import FdBuffer
from .linalg import RngState, svd
from .metrics import CSV_HEADER, MetricsReport, covariance_error, product_error
from .streams import GenSpec, generate, norm_stats, normalize, read_matrix
from .window import MLAeroSketch

log = logging.getLogger(__name__)

SCENARIOS = ("sw", "attp", "amm", "dist", "dist-sw", "fd")
DEFAULT_ORACLE_CAP = 50_000


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    eps: float
    dim: int | None = None
    dim_y: int | None = None
    window: int | None = None
    r_max: float | None = None
    sites: int = 1
    delta: float | None = None
    seed: int = 0
    query_every: int = 20
    input: str | None = None
    gen: str | None = None
    rows: int | None = None
    zeta: float = 10.0
    out: str | None = None
    normalize: bool = False
    baseline: str | None = None
    oracle_cap: int = DEFAULT_ORACLE_CAP
    latency: int = 0

    def validate(self) -> "RunConfig":
        if self.scenario not in SCENARIOS:
            raise InvalidInput(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not 0.0 < self.eps <= 1.0:
            raise InvalidInput(f"eps={self.eps} outside (0, 1]")
        if self.scenario in ("sw", "amm", "dist-sw") and not self.window:
            raise InvalidInput(f"scenario {self.scenario} needs --window")
        if self.window is not None and self.window < 1:
            raise InvalidInput("--window must be >= 1")
        if (self.input is None) == (self.gen is None):
            raise InvalidInput("give exactly one of --input and --gen")
        if self.gen is not None:
            if self.rows is None or self.rows < 1:
                raise InvalidInput("--gen needs --rows >= 1")
            if self.dim is None or self.dim < 1:
                raise InvalidInput("--gen needs --dim >= 1")
        if self.scenario == "amm" and not self.dim_y:
            raise InvalidInput("scenario amm needs --dim-y")
        if self.sites < 1:
            raise InvalidInput("--sites must be >= 1")
        if self.query_every < 1:
            raise InvalidInput("--query-every must be >= 1")
        if self.delta is not None and not 0.0 < self.delta < 1.0:
            raise InvalidInput(f"delta={self.delta} outside (0, 1)")
        if self.baseline not in (None, "svd"):
            raise InvalidInput(f"unknown baseline {self.baseline!r}")
        if self.baseline and self.scenario not in ("sw", "attp"):
            raise InvalidInput("--baseline svd applies to the sw and attp scenarios")
        if self.r_max is not None and self.r_max < 1:
            raise InvalidInput("--rmax must be >= 1")
        return self


class SvdDumpSketch(AeroSketch):
    """AeroSketch with the randomized gate replaced by an exact SVD each update.

    Same snapshot schema, so restoration and queries are unchanged.
    """

    def _maybe_dump(self, i: int) -> None:
        rows = self.c.rows
        if rows.shape[0] == 0 or not rows.any():
            return
        _, s, vt = svd(rows)
        xi = int(np.count_nonzero((s * s >= self.theta) & (s > 0.0)))
        if xi == 0:
            return
        z = vt[:xi].T
        proj = rows @ z
        self.enqueue(Snapshot(z, proj.T @ rows, self.last_t + 1, i, self.theta))
        self.c.set_rows(rows - proj @ z.T)
        self.dumps += 1


def baseline_svd_sketch(rows, eps: float, window: int | None = None, rng=None, r_max=None):
    """Run the exact-SVD comparator over ``rows``; yields the sketch after every update."""
    rows = np.asarray(rows, dtype=np.float64)
    if window is None:
        sk = AttpSketch(rows.shape[1], eps, rng, core=SvdDumpSketch)
    else:
        r = r_max or max(float(np.max(np.einsum("ij,ij->i", rows, rows))), 1.0)
        sk = MLAeroSketch(rows.shape[1], window, r, eps, rng, core=SvdDumpSketch)
    for i, a in enumerate(rows, 1):
        sk.update(a, i)
        yield sk


def exact_oracle(history: np.ndarray, lb: int, ub: int, cap: int = DEFAULT_ORACLE_CAP) -> np.ndarray:
    """Exact Gram of rows with timestamps in ``(lb, ub]`` (rows are 1-indexed)."""
    if ub - lb > cap:
        raise OracleCapExceeded(f"oracle over {ub - lb} rows exceeds cap {cap}")
    w = history[lb:ub]
    return w.T @ w


class _Oracle:
    """Incremental exact Gram over a prefix or a sliding window."""

    def __init__(self, d: int, window: int | None):
        self.window = window
        self.gram = np.zeros((d, d))
        self.start = 0

    def advance(self, history: np.ndarray, i: int) -> None:
        a = history[i - 1]
        self.gram += np.outer(a, a)
        if self.window is not None and i - self.start > self.window:
            old = history[self.start]
            self.gram -= np.outer(old, old)
            self.start += 1


def _load(cfg: RunConfig):
    if cfg.input is not None:
        mat = read_matrix(cfg.input)
        if cfg.scenario == "amm":
            if not cfg.dim or cfg.dim >= mat.shape[1]:
                raise InvalidInput("amm input needs --dim < column count (x columns first, then y)")
            return mat[:, : cfg.dim], mat[:, cfg.dim:]
        if cfg.dim is not None and cfg.dim != mat.shape[1]:
            raise InvalidInput(f"--dim {cfg.dim} disagrees with input dimension {mat.shape[1]}")
        return mat, None
    spec = GenSpec(cfg.gen, cfg.rows, cfg.dim, zeta=cfg.zeta, seed=cfg.seed)
    x = generate(spec)
    y = generate(spec, dim=cfg.dim_y, stream=1) if cfg.scenario == "amm" else None
    return x, y


def run_scenario(cfg: RunConfig, *, write: bool = True) -> list[MetricsReport]:
    cfg.validate()
    x, y = _load(cfg)
    if cfg.scenario != "amm":
        stats = norm_stats(x)
        log.info("squared row norms in [%.4g, %.4g]", stats.min_sq, stats.max_sq)
        if cfg.normalize:
            x, stats = normalize(x)
            log.info("normalized: induced R = %.4g", stats.ratio)
            if cfg.r_max is None:
                cfg = replace(cfg, r_max=max(stats.ratio, 1.0))
    runner = {
        "fd": _run_fd,
        "sw": _run_sw,
        "attp": _run_attp,
        "amm": _run_amm,
        "dist": _run_dist,
        "dist-sw": _run_dist,
    }[cfg.scenario]
    reports = runner(cfg, x, y)
    if write:
        write_csv(reports, cfg.out)
    return reports


def write_csv(reports, out: str | None) -> None:
    fh = sys.stdout if out in (None, "-") else open(out, "w", newline="")
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in reports:
            w.writerow(r.csv_row())
    finally:
        if fh is not sys.stdout:
            fh.close()


def _oracle_enabled(cfg: RunConfig, n_rows: int) -> bool:
    windowed = cfg.scenario in ("sw", "amm", "dist-sw")
    span = cfg.window if windowed else n_rows
    if span > cfg.oracle_cap:
        log.warning("oracle span %d exceeds cap %d; error column omitted", span, cfg.oracle_cap)
        return False
    return True


def _probe_loop(cfg, x, update, sketch_gram_fn, floats_fn, window, level_fn=None):
    n, d = x.shape
    checking = _oracle_enabled(cfg, n)
    oracle = _Oracle(d, window) if checking else None
    reports, cum, peak = [], 0, 0
    for i in range(1, n + 1):
        t0 = time.perf_counter_ns()
        update(x[i - 1], i)
        cum += time.perf_counter_ns() - t0
        if oracle is not None:
            oracle.advance(x, i)
        peak = max(peak, floats_fn())
        if i % cfg.query_every == 0 or i == n:
            err = covariance_error(oracle.gram, sketch_gram_fn()) if checking else None
            reports.append(
                MetricsReport(i, err, -(-peak // d), 8 * peak, cum,
                              level_selected=level_fn() if level_fn else None)
            )
    return reports


def _run_fd(cfg, x, _y):
    ell = math.ceil(1.0 / cfg.eps)
    buf = FdBuffer(x.shape[1], ell)
    return _probe_loop(cfg, x, lambda a, i: buf.append(a), lambda: buf.rows,
                       lambda: buf.filled * buf.d, None)


def _core(cfg):
    return SvdDumpSketch if cfg.baseline == "svd" else AeroSketch


def _run_sw(cfg, x, _y):
    r_max = cfg.r_max or max(norm_stats(x).max_sq, 1.0)
    sk = MLAeroSketch(x.shape[1], cfg.window, r_max, cfg.eps, RngState(cfg.seed),
                      delta=cfg.delta, core=_core(cfg))

    def level():
        return sk.last_level

    return _probe_loop(cfg, x, sk.update, sk.query, sk.n_floats, cfg.window, level)


def _run_attp(cfg, x, _y):
    sk = AttpSketch(x.shape[1], cfg.eps, RngState(cfg.seed).split(0), delta=cfg.delta,
                    core=_core(cfg))
    return _probe_loop(cfg, x, sk.update, sk.query, sk.n_floats, None)


def _run_amm(cfg, x, y):
    n = x.shape[0]
    if y.shape[0] != n:
        raise InvalidInput("x and y streams differ in length")
    if cfg.r_max is not None:
        r_max = cfg.r_max
    else:
        r_max = max(float(np.max(np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))), 1.0)
    sk = MLAeroSketchCOD(x.shape[1], y.shape[1], cfg.window, r_max, cfg.eps,
                         RngState(cfg.seed), delta=cfg.delta)
    checking = _oracle_enabled(cfg, n)
    reports, cum, peak = [], 0, 0
    dd = x.shape[1] + y.shape[1]
    for i in range(1, n + 1):
        t0 = time.perf_counter_ns()
        sk.update(x[i - 1], y[i - 1], i)
        cum += time.perf_counter_ns() - t0
        peak = max(peak, sk.n_floats())
        if i % cfg.query_every == 0 or i == n:
            err = None
            if checking:
                lo = max(i - cfg.window, 0)
                a, b = sk.query()
                err = product_error(x[lo:i].T, y[lo:i].T, a, b)
            reports.append(MetricsReport(i, err, -(-peak // dd), 8 * peak, cum,
                                         level_selected=sk.last_level))
    return reports


def _run_dist(cfg, x, _y):
    window = cfg.window if cfg.scenario == "dist-sw" else None
    checking = _oracle_enabled(cfg, x.shape[0])
    res = run_simulation(
        round_robin(x, cfg.sites), x.shape[1], cfg.sites, cfg.eps,
        window=window, seed=cfg.seed, query_every=cfg.query_every,
        latency=cfg.latency, delta=cfg.delta, probe_error=checking,
    )
    return res.reports
