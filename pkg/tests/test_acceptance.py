"""End-to-end acceptance checks, one test per criterion.

Each test records a single pass/fail line (printed inline and repeated in the
terminal summary) before asserting.
"""
import math
import time

import numpy as np
import pytest

from aerosketch import (
    AeroSketch,
    AttpSketch,
    MLAeroSketch,
    MLAeroSketchCOD,
    RngState,
    fd_stream,
    power_iteration,
    restore_contribution,
    simul_iter,
)
from aerosketch.bench import RunConfig, SvdDumpSketch, run_scenario
from aerosketch.core import Snapshot, amplification_counts
from aerosketch.distributed import round_robin, run_simulation
from aerosketch.linalg import power_iteration_steps
from aerosketch.metrics import CSV_HEADER, covariance_error, product_error
from aerosketch.streams import GenSpec, generate, read_aero, read_csv, save_stream
from aerosketch.window import fact1_level

from conftest import random_orthonormal


def window_run(eps, seed, *, delta=None, trace=None, mass_check=None):
    """Criterion-5 stream: d=32, N=500, T=1500 Gaussian rows, probes every 20 steps."""
    d, n, t_total = 32, 500, 1500
    rows = np.random.default_rng(seed).standard_normal((t_total, d))
    r_max = float(np.max(np.einsum("ij,ij->i", rows, rows)))
    sk = MLAeroSketch(d, n, r_max, eps, RngState(seed), delta=delta)
    errors = []
    for i, a in enumerate(rows, 1):
        sk.update(a, i)
        if trace is not None:
            trace(sk)
        if i % 20 == 0:
            w = rows[max(0, i - n):i]
            errors.append(covariance_error(w.T @ w, sk.query()))
            if mass_check is not None:
                j = fact1_level(float(np.sum(w * w)), n, len(sk.levels))
                mass_check(sk.snapshot_mass(j), sk)
    return errors


def test_c01_restoration_identity(record_criterion):
    start = time.perf_counter()
    gen = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        d = int(gen.integers(2, 65))
        xi = int(gen.integers(1, min(8, d) + 1))
        c_prime = gen.standard_normal((int(gen.integers(1, 41)), d))
        z = random_orthonormal(gen, d, xi)
        snap = Snapshot(z, z.T @ c_prime.T @ c_prime, 1, 1)
        resid = c_prime - c_prime @ z @ z.T
        target = c_prime.T @ c_prime
        rel = np.linalg.norm(resid.T @ resid + restore_contribution(snap) - target) / np.linalg.norm(target)
        worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5
    record_criterion(1, "restoration identity", ok, f"worst rel {worst:.2e}, {elapsed:.2f}s")
    assert ok


def test_c02_fd_bound(record_criterion):
    start = time.perf_counter()
    failures = []
    worst = 0.0
    for seed in range(20):
        a = np.random.default_rng(seed).standard_normal((2000, 32))
        gram = a.T @ a
        mass = float(np.sum(a * a))
        for ell in (4, 8, 16):
            b = fd_stream(a, ell)
            gap = np.linalg.norm(gram - b.T @ b, 2)
            worst = max(worst, gap * ell / mass)
            if gap > mass / ell:
                failures.append((seed, ell))
    elapsed = time.perf_counter() - start
    ok = not failures and elapsed < 30
    record_criterion(2, "FD deterministic bound", ok,
                     f"worst gap/(|A|_F^2/ell) {worst:.3f}, {elapsed:.1f}s")
    assert ok, failures


def test_c03_power_iteration_statistics(record_criterion):
    start = time.perf_counter()
    a = np.random.default_rng(0).standard_normal((32, 64))
    sigma1_sq = np.linalg.svd(a, compute_uv=False)[0] ** 2
    k = power_iteration_steps(64)
    assert k == 7
    hits = sum(power_iteration(a, k, RngState(seed))[0] >= sigma1_sq / 2 for seed in range(200))
    elapsed = time.perf_counter() - start
    frac = hits / 200
    ok = frac >= 0.95 and elapsed < 20
    record_criterion(3, "power iteration half bound", ok, f"fraction {frac:.3f}, {elapsed:.2f}s")
    assert ok


def test_c04_simul_iter_statistics(record_criterion):
    start = time.perf_counter()
    cells = {}
    for k in (1, 2, 4):
        for eps_si in (0.2, 0.4):
            good = 0
            for seed in range(100):
                a = np.random.default_rng(10_000 + seed).standard_normal((32, 32))
                s = np.linalg.svd(a, compute_uv=False)
                best = math.sqrt(float(np.sum(s[k:] ** 2)))
                z, _ = simul_iter(a, k, eps_si, RngState(seed))
                good += np.linalg.norm(a - z @ (z.T @ a)) <= (1 + eps_si) * best
            cells[(k, eps_si)] = good
    elapsed = time.perf_counter() - start
    ok = min(cells.values()) >= 95 and elapsed < 60
    record_criterion(4, "simultaneous iteration Frobenius bound", ok,
                     f"min cell {min(cells.values())}/100, {elapsed:.1f}s")
    assert ok, cells


@pytest.fixture(scope="module")
def window_results():
    start = time.perf_counter()
    out = {}
    for eps in (0.1, 0.2):
        ell = math.ceil(2 / eps)
        bound = 4 / eps + 16 * ell
        for seed in range(10):
            masses = []
            errs = window_run(eps, seed, mass_check=lambda m, _sk: masses.append(m))
            out[(eps, seed)] = (max(errs), max(masses), bound)
    return out, time.perf_counter() - start


def test_c05_sliding_window_end_to_end(record_criterion, window_results):
    results, elapsed = window_results
    bad = {k: v[0] for k, v in results.items() if v[0] > k[0]}
    worst = max(v[0] / k[0] for k, v in results.items())
    ok = not bad and elapsed < 180
    record_criterion(5, "sliding-window error <= eps", ok,
                     f"worst err/eps {worst:.3f}, {elapsed:.1f}s")
    assert ok, bad


def test_c06_snapshot_mass_bound(record_criterion, window_results):
    results, _ = window_results
    bad = {k: v[1:] for k, v in results.items() if v[1] > v[2]}
    peak = max(v[1] / v[2] for v in results.values())
    ok = not bad
    record_criterion(6, "in-window snapshot mass at Fact-1 level", ok, f"peak mass/bound {peak:.3f}")
    assert ok, bad


def test_c07_attp_persistence(record_criterion):
    start = time.perf_counter()
    eps, d = 0.2, 32
    rows = np.random.default_rng(7).standard_normal((3000, d))
    sk = AttpSketch(d, eps, RngState(7))
    probes = (150, 600, 1100, 1500, 1999)
    for i in range(1, 2001):
        sk.update(rows[i - 1], i)
    before = {t: sk.query(t) for t in probes}
    for i in range(2001, 3001):
        sk.update(rows[i - 1], i)
    after = {t: sk.query(t) for t in probes}
    identical = all(np.array_equal(before[t], after[t]) for t in probes)
    errs = {}
    for t in probes:
        prefix = rows[:t]
        errs[t] = covariance_error(prefix.T @ prefix, after[t])
    elapsed = time.perf_counter() - start
    ok = identical and max(errs.values()) <= eps and elapsed < 120
    record_criterion(7, "ATTP persistence and prefix error", ok,
                     f"identical={identical}, worst err {max(errs.values()):.3f}, {elapsed:.1f}s")
    assert ok, errs


def test_c08_amm_end_to_end(record_criterion):
    start = time.perf_counter()
    eps, n = 0.2, 400
    worst = 0.0
    for seed in range(10):
        spec = GenSpec("uniform", 1200, 24, seed=seed)
        x = generate(spec)
        y = generate(spec, dim=16, stream=1)
        r_max = float(np.max(np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)))
        sk = MLAeroSketchCOD(24, 16, n, r_max, eps, RngState(seed))
        for i in range(1, 1201):
            sk.update(x[i - 1], y[i - 1], i)
            if i % 20 == 0:
                lo = max(0, i - n)
                a, b = sk.query()
                worst = max(worst, product_error(x[lo:i].T, y[lo:i].T, a, b))
    elapsed = time.perf_counter() - start
    ok = worst <= eps and elapsed < 180
    record_criterion(8, "AMM sliding-window error", ok, f"worst err {worst:.4f}, {elapsed:.1f}s")
    assert ok


def test_c09_distributed(record_criterion):
    start = time.perf_counter()
    eps, d = 0.2, 32
    common = dict(eps=eps, dim=d, gen="noisy", rows=3000, seed=5, zeta=10.0)
    single = run_scenario(RunConfig("dist", sites=1, **common), write=False)
    attp = run_scenario(RunConfig("attp", **common), write=False)
    col_single = [r.empirical_error for r in single]
    col_attp = [r.empirical_error for r in attp]
    equivalent = col_single == col_attp
    max_diff = max(abs(a - b) for a, b in zip(col_single, col_attp))

    rows = generate(GenSpec("noisy", 3000, d, zeta=10.0, seed=5))
    res = run_simulation(round_robin(rows, 4), d, 4, eps, seed=5)
    err4 = max(r.empirical_error for r in res.reports)
    sent = sum(s.sent_gram for s in res.sites)
    decomp = float(np.linalg.norm(res.coordinator.b - sent))
    mass = float(np.sum(rows * rows))
    round_cap = math.ceil(math.log(mass) / math.log1p(eps)) + 1
    rounds_ok = res.coordinator.broadcasts <= round_cap
    elapsed = time.perf_counter() - start
    ok = equivalent and err4 <= eps and decomp <= 1e-8 and rounds_ok and elapsed < 180
    record_criterion(
        9, "distributed equivalence and decomposability", ok,
        f"m=1 vs ATTP identical={equivalent} (max |diff| {max_diff:.3g}); "
        f"m=4 err {err4:.3f}; decomposability {decomp:.1e}; "
        f"broadcasts {res.coordinator.broadcasts}/{round_cap}; {elapsed:.1f}s",
    )
    assert equivalent, f"m=1 error column differs from ATTP by up to {max_diff:.3g}"
    assert err4 <= eps and decomp <= 1e-8 and rounds_ok


def test_c10_distributed_sliding_window(record_criterion):
    start = time.perf_counter()
    eps, d, n = 0.2, 32, 1000
    worst, stale, lingering, resid, expires = 0.0, 0, 0, 0.0, 0
    for seed in range(3):
        rows = generate(GenSpec("noisy", 3000, d, zeta=10.0, seed=seed))
        res = run_simulation(round_robin(rows, 4), d, 4, eps, window=n, seed=seed, audit_expiry=True)
        worst = max(worst, max(r.empirical_error for r in res.reports))
        lingering += sum(still for still, _ in res.expire_audits)
        resid = max([resid] + [r for _, r in res.expire_audits])
        stale += sum(res.stale_counts)
        expires += len(res.expire_audits)
    elapsed = time.perf_counter() - start
    ok = worst <= eps and lingering == 0 and stale == 0 and resid <= 1e-8 and elapsed < 180
    record_criterion(10, "distributed sliding window", ok,
                     f"worst err {worst:.3f}, {expires} expiries audited, "
                     f"cache residual {resid:.1e}, {elapsed:.1f}s")
    assert ok


def test_c11_amplification(record_criterion):
    start = time.perf_counter()
    r, s = amplification_counts(0.01)
    assert (r, s) == (2, 10)
    mismatches = []
    updates = 0

    def trace(sk):
        nonlocal updates
        for level in sk.levels:
            if level.clock == sk.clock and level.last_doubling_steps:
                updates += 1
                if level.last_simul_calls != r * level.last_doubling_steps:
                    mismatches.append((level.last_simul_calls, level.last_doubling_steps))

    worst = 0.0
    for eps in (0.1, 0.2):
        for seed in range(10):
            errs = window_run(eps, seed, delta=0.01, trace=trace)
            worst = max(worst, max(errs) / eps)
    elapsed = time.perf_counter() - start
    ok = worst <= 1.0 and not mismatches and updates > 0 and elapsed < 180
    record_criterion(11, "amplified updates", ok,
                     f"worst err/eps {worst:.3f}, {updates} traced searches, "
                     f"{len(mismatches)} count mismatches, {elapsed:.1f}s")
    assert ok


def test_c12_timing_trend(record_criterion):
    """Informational: reports amortized update time for both sketches at d=256."""
    d, rows_n = 256, 400
    rows = np.random.default_rng(12).standard_normal((rows_n, d))
    lines = []
    ratios = []
    for inv in (8, 16, 32):
        eps = 1.0 / inv
        times = {}
        for name, core in (("aero", AeroSketch), ("svd", SvdDumpSketch)):
            sk = AttpSketch(d, eps, RngState(12), core=core)
            t0 = time.perf_counter_ns()
            for i, a in enumerate(rows, 1):
                sk.update(a, i)
            times[name] = (time.perf_counter_ns() - t0) / rows_n
        ratios.append(times["svd"] / times["aero"])
        lines.append(f"1/eps={inv}: aero {times['aero'] / 1e3:.0f}us, svd {times['svd'] / 1e3:.0f}us, "
                     f"speedup {ratios[-1]:.2f}")
    for line in lines:
        print("   ", line)
    record_criterion(12, "timing trend (informational)", True,
                     "speedup " + " -> ".join(f"{r:.2f}" for r in ratios))


def test_c13_format_round_trips(record_criterion, tmp_path):
    start = time.perf_counter()
    gen = np.random.default_rng(13)
    aero_ok = csv_ok = True
    for k in range(50):
        n, d = int(gen.integers(1, 40)), int(gen.integers(1, 20))
        mat = gen.standard_normal((n, d)) * 10.0 ** gen.integers(-300, 300, size=(n, d))
        path = tmp_path / f"s{k}.aero"
        save_stream(mat, path, "aero")
        back = read_aero(path)
        aero_ok &= back.tobytes() == mat.astype("<f8").tobytes()
        cpath = tmp_path / f"s{k}.csv"
        save_stream(mat, cpath, "csv")
        csv_ok &= np.array_equal(read_csv(cpath), mat)
    out = tmp_path / "run.csv"
    run_scenario(RunConfig("fd", eps=0.125, dim=8, gen="uniform", rows=40, out=str(out)))
    golden = (
        __import__("pathlib").Path(__file__).parent / "data" / "golden_header.csv"
    ).read_text()
    header_ok = out.read_text().splitlines()[0] == golden.strip() == ",".join(CSV_HEADER)
    elapsed = time.perf_counter() - start
    ok = aero_ok and csv_ok and header_ok and elapsed < 10
    record_criterion(13, "format round trips and CSV header", ok,
                     f"aero={aero_ok}, csv={csv_ok}, header={header_ok}, {elapsed:.2f}s")
    assert ok
