import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aerosketch import InvalidInput, RngState, eigh, power_iteration, qr, simul_iter, svd
from aerosketch.linalg import as_generator, power_iteration_steps, simul_iter_steps

dims = st.integers(min_value=1, max_value=24)


def test_rng_state_is_reproducible_and_splits():
    a = RngState(5, 3).generator().standard_normal(4)
    b = RngState(5, 3).generator().standard_normal(4)
    assert np.array_equal(a, b)
    c1 = RngState(5).split(1).generator().standard_normal(4)
    c2 = RngState(5).split(2).generator().standard_normal(4)
    assert not np.array_equal(c1, c2)
    assert RngState(5).split(1) == RngState(5).split(1)


def test_as_generator_accepts_all_forms():
    g = np.random.default_rng(1)
    assert as_generator(g) is g
    assert isinstance(as_generator(3), np.random.Generator)
    assert isinstance(as_generator(None), np.random.Generator)


def test_svd_diagonal():
    res = svd(np.diag([4.0, 3.0, 2.0, 1.0]))
    assert np.allclose(res.sigma, [4, 3, 2, 1])
    assert np.allclose(res.u, np.eye(4))
    assert np.allclose(res.vt, np.eye(4))


def test_svd_zero_matrix():
    res = svd(np.zeros((3, 2)))
    assert np.array_equal(res.sigma, [0.0, 0.0])
    assert np.allclose(res.u.T @ res.u, np.eye(2))


def test_svd_reconstructs_gaussian_seed7():
    a = np.random.default_rng(7).standard_normal((8, 5))
    u, s, vt = svd(a)
    assert np.linalg.norm(u * s @ vt - a) <= 1e-10 * np.linalg.norm(a)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_svd_rejects_non_finite():
    with pytest.raises(InvalidInput):
        svd(np.array([[1.0, np.nan]]))
    with pytest.raises(InvalidInput):
        svd(np.ones(3))


def test_svd_sign_convention():
    u, _, vt = svd(-np.diag([2.0, 1.0]))
    for col in u.T:
        assert col[np.argmax(np.abs(col))] > 0


def test_eigh_examples():
    lam, v = eigh(np.diag([2.0, -1.0]))
    assert np.allclose(lam, [2, -1])
    assert np.allclose(v, np.eye(2))
    lam, _ = eigh(np.eye(4))
    assert np.allclose(lam, 1.0)
    with pytest.raises(InvalidInput):
        eigh(np.ones((2, 3)))


def test_eigh_matches_squared_singular_values():
    c = np.random.default_rng(0).standard_normal((6, 3))
    lam, _ = eigh(c.T @ c)
    s = np.linalg.svd(c, compute_uv=False)
    assert np.allclose(lam, s**2, atol=1e-9, rtol=0)


def test_qr_examples():
    q, r = qr(np.eye(3))
    assert np.allclose(q, np.eye(3)) and np.allclose(r, np.eye(3))
    q, r = qr(np.array([[3.0, 0.0], [4.0, 0.0], [0.0, 0.0]]))
    assert r[0, 0] == pytest.approx(5.0)
    assert np.all(np.diag(r) >= 0)
    with pytest.raises(InvalidInput):
        qr(np.ones((2, 3)))


def test_qr_random_seed3():
    a = np.random.default_rng(3).standard_normal((10, 4))
    q, r = qr(a)
    assert np.linalg.norm(q.T @ q - np.eye(4)) <= 1e-10
    assert np.linalg.norm(q @ r - a) <= 1e-10 * np.linalg.norm(a)
    assert np.allclose(r, np.triu(r))


@given(st.integers(0, 2**32 - 1), dims, dims)
def test_factorizations_reconstruct(seed, m, n):
    a = np.random.default_rng(seed).standard_normal((m, n))
    u, s, vt = svd(a)
    assert np.linalg.norm(u * s @ vt - a) <= 1e-10 * max(np.linalg.norm(a), 1.0)
    lam, v = eigh(a.T @ a)
    g = a.T @ a
    assert np.linalg.norm(v * lam @ v.T - g) <= 1e-10 * max(np.linalg.norm(g), 1.0)
    padded = np.vstack([a, np.zeros((max(n - m, 0), n))])
    q, r = qr(padded)
    assert np.linalg.norm(q @ r - padded) <= 1e-10 * max(np.linalg.norm(a), 1.0)


def test_power_iteration_examples():
    val, vec = power_iteration(np.array([[2.0, 0.0], [0.0, 0.0]]), 1, RngState(0))
    assert val == pytest.approx(4.0, abs=1e-12)
    assert np.linalg.norm(vec) == pytest.approx(1.0)
    val, _ = power_iteration(np.eye(5), 3, RngState(1))
    assert val == pytest.approx(1.0, abs=1e-12)


def test_power_iteration_zero_and_bad_k():
    val, vec = power_iteration(np.zeros((3, 4)), 2, RngState(0))
    assert val == 0.0 and np.array_equal(vec, np.eye(4)[0])
    with pytest.raises(InvalidInput):
        power_iteration(np.eye(2), 0, RngState(0))


@given(st.integers(0, 2**32 - 1))
def test_power_iteration_never_exceeds_top(seed):
    a = np.random.default_rng(seed).standard_normal((9, 6))
    val, vec = power_iteration(a, 3, RngState(seed))
    top = np.linalg.svd(a, compute_uv=False)[0] ** 2
    assert 0.0 <= val <= top * (1 + 1e-12)
    assert np.linalg.norm(vec) == pytest.approx(1.0)


def test_iteration_counts():
    assert power_iteration_steps(64) == 7
    assert power_iteration_steps(1) == 2
    # ceil(log2(32) / 0.4) = ceil(12.5)
    assert simul_iter_steps(32, 0.4) == 13
    assert simul_iter_steps(32, 0.2) == 25


def test_simul_iter_diag_example():
    a = np.diag([3.0, 2.0, 1.0])
    z, sig = simul_iter(a, 2, 0.4, RngState(0))
    assert np.allclose(z.T @ z, np.eye(2), atol=1e-8)
    assert np.all(np.abs(sig**2 - np.array([9.0, 4.0])) <= 0.4)


def test_simul_iter_zero_and_range():
    z, sig = simul_iter(np.zeros((4, 3)), 2, 0.4, RngState(0))
    assert np.array_equal(z, np.eye(4)[:, :2]) and np.array_equal(sig, [0.0, 0.0])
    with pytest.raises(InvalidInput):
        simul_iter(np.eye(3), 0, 0.4, RngState(0))
    with pytest.raises(InvalidInput):
        simul_iter(np.eye(3), 4, 0.4, RngState(0))
    with pytest.raises(InvalidInput):
        simul_iter(np.eye(3), 1, 1.0, RngState(0))


def test_simul_iter_rank_deficient_pads_orthonormally():
    a = np.zeros((6, 4))
    a[0, 0] = 2.0
    z, sig = simul_iter(a, 3, 0.4, RngState(2))
    assert np.allclose(z.T @ z, np.eye(3), atol=1e-8)
    assert sig[0] == pytest.approx(2.0)
    assert np.all(sig[1:] < 1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_simul_iter_orthonormal_and_sorted(seed, k):
    a = np.random.default_rng(seed).standard_normal((8, 10))
    z, sig = simul_iter(a, k, 0.4, RngState(seed))
    assert z.shape == (8, k)
    assert np.linalg.norm(z.T @ z - np.eye(k)) <= 1e-8
    assert np.all(np.diff(sig) <= 1e-12)


def test_simul_iter_deterministic():
    a = np.random.default_rng(4).standard_normal((12, 7))
    z1, s1 = simul_iter(a, 3, 0.4, RngState(9, 1))
    z2, s2 = simul_iter(a, 3, 0.4, RngState(9, 1))
    assert np.array_equal(z1, z2) and np.array_equal(s1, s2)


def test_simul_iter_frobenius_bound_rate():
    good = 0
    for seed in range(40):
        a = np.random.default_rng(seed).standard_normal((32, 32))
        s = np.linalg.svd(a, compute_uv=False)
        z, _ = simul_iter(a, 2, 0.4, RngState(seed))
        good += np.linalg.norm(a - z @ (z.T @ a)) <= 1.4 * math.sqrt(np.sum(s[2:] ** 2))
    assert good >= 38
