import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import count_1d, count_box_lp, count_l2_2d
from sosmom.normmean import (
    L1,
    L2,
    LINF,
    CentralQuery,
    NormError,
    bucket_means,
    estimate_mean_norm,
    find_central_point,
    gen_tst_value,
    get_oracle,
    is_central,
)

seeds = st.integers(0, 2**32 - 1)


def instance(seed, d, kmax=6):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, kmax + 1))
    return rng.standard_normal((k, d)), rng.standard_normal(d), float(rng.uniform(0.05, 2.0)), rng


def test_bucket_means_examples():
    assert bucket_means(np.array([[1.0], [3.0], [5.0], [7.0]]), 2)[:, 0].tolist() == [2.0, 6.0]
    X = np.random.default_rng(0).standard_normal((12, 3))
    assert np.allclose(bucket_means(X, 4).mean(axis=0), X.mean(axis=0))
    assert np.allclose(bucket_means(np.tile([1.0, 2.0], (6, 1)), 3), [1.0, 2.0])
    with pytest.raises(ValueError, match="too many buckets"):
        bucket_means(X, 13)


def test_interval_example():
    q = CentralQuery(np.array([[0.0], [10.0]]), 6.0, 0.1)
    assert q.size == 1
    assert is_central(q, [5.0]).central
    res = is_central(q, [0.0])
    assert not res.central
    assert res.T == (1,)
    assert 10 * res.u[0] >= 6 - 1e-9 and abs(res.u[0]) <= 1 + 1e-9
    assert gen_tst_value(q.Z, [0.0], 6.0) == 1
    x = find_central_point(q)
    assert x is not None and 4 <= x[0] <= 6


def test_interval_below_minimal_radius():
    Z = np.array([[0.0], [10.0]])
    q = CentralQuery(Z, 4.9, 0.1)
    assert find_central_point(q) is None
    grid = np.linspace(-1, 11, 2401)
    assert not any(is_central(q, [g]).central for g in grid)


@pytest.mark.parametrize("seed", range(3))
def test_none_confirmed_by_grid_2d(seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((5, 2)) * 3
    q = CentralQuery(Z, 0.05, 0.1)
    assert find_central_point(q) is None
    lo, hi = Z.min(axis=0), Z.max(axis=0)
    for a in np.linspace(lo[0], hi[0], 41):
        for b in np.linspace(lo[1], hi[1], 41):
            assert not is_central(q, [a, b]).central


def test_common_point():
    z = np.array([1.0, -2.0, 0.5])
    Z = np.tile(z, (4, 1))
    for r in (0.0, 0.3):
        x = find_central_point(CentralQuery(Z, r))
        assert np.allclose(x, z)
        assert gen_tst_value(Z, z, 0.3) == 0


def test_large_radius_is_central():
    Z, x, _, _ = instance(3, 2)
    for oracle in (L2, L1, LINF):
        r = max(oracle.norm(v) for v in Z - x) + 0.1
        assert is_central(CentralQuery(Z, r), x, oracle).central


@given(seeds)
def test_gen_tst_matches_1d_brute_force(seed):
    Z, x, r, _ = instance(seed, 1)
    for oracle in (L2, L1, LINF):
        assert gen_tst_value(Z, x, r, oracle) == count_1d(Z, x, r)


@given(seeds)
def test_gen_tst_matches_l2_arcs(seed):
    Z, x, r, _ = instance(seed, 2)
    assert gen_tst_value(Z, x, r) == count_l2_2d(Z, x, r)


@given(seeds)
def test_gen_tst_matches_box_lp(seed):
    Z, x, r, _ = instance(seed, 2, kmax=5)
    assert gen_tst_value(Z, x, r, L1) == count_box_lp(Z, x, r)


@given(seeds, st.sampled_from([0.0, 0.1, 0.25, 0.5]), st.sampled_from(["l2", "l1", "linf"]))
def test_is_central_consistent_with_count(seed, p, name):
    Z, x, r, _ = instance(seed, 2)
    oracle = get_oracle(name)
    q = CentralQuery(Z, r, p)
    assert is_central(q, x, oracle).central == (gen_tst_value(Z, x, r, oracle) <= math.floor(p * q.k))


@given(seeds)
def test_gen_tst_bounded_differences(seed):
    Z, x, r, rng = instance(seed, 2)
    base = gen_tst_value(Z, x, r)
    assert 0 <= base <= len(Z)
    for i in range(len(Z)):
        Z2 = Z.copy()
        Z2[i] = 5 * rng.standard_normal(2)
        assert abs(gen_tst_value(Z2, x, r) - base) <= 1


def central_points(Z, r, oracle, rng, tries=400):
    q = CentralQuery(Z, r, 0.1)
    lo, hi = Z.min(axis=0) - r, Z.max(axis=0) + r
    pts = [p for p in rng.uniform(lo, hi, size=(tries, Z.shape[1])) if is_central(q, p, oracle).central]
    x = find_central_point(q, oracle)
    return pts + ([x] if x is not None else [])


@pytest.mark.parametrize("name", ["l2", "l1", "linf"])
@pytest.mark.parametrize("seed", range(3))
def test_convexity_and_closeness(name, seed):
    oracle = get_oracle(name)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((6, 2))
    r = 0.75 * max(oracle.norm(a - b) for a in Z for b in Z)
    pts = central_points(Z, r, oracle, rng)
    assert len(pts) >= 2
    q = CentralQuery(Z, r, 0.1)
    for a, b in zip(pts, pts[1:]):
        assert oracle.norm(a - b) <= 2 * r + 1e-9
        assert is_central(q, (a + b) / 2, oracle).central


@pytest.mark.parametrize("oracle,dual_norm", [(L2, np.linalg.norm), (L1, lambda a: np.abs(a).sum()), (LINF, lambda a: np.abs(a).max())])
def test_separation_oracles(oracle, dual_norm, rng):
    # max over B* of <a, u> is the primal-dual pairing: |a|_2, |a|_1 for the box, |a|_inf for the cross-polytope
    for _ in range(200):
        w = rng.standard_normal(3) * 2
        sep = oracle.separation(w)
        if sep is None:
            assert oracle.norm is not None
            continue
        a, b = sep
        assert a @ w > b
        assert dual_norm(a) <= b + 1e-12


def test_separation_inside_returns_none():
    assert L2.separation(np.array([0.6, 0.8])) is None
    assert L1.separation(np.array([1.0, -1.0])) is None
    assert LINF.separation(np.array([0.5, -0.5])) is None


def test_constant_data():
    v = np.array([2.0, -1.0])
    res = estimate_mean_norm(np.tile(v, (50, 1)), 0.01)
    assert np.array_equal(res.mu_hat, v)


@pytest.mark.parametrize("name", ["l2", "l1", "linf"])
def test_gaussian_estimate(name):
    X = np.random.default_rng(9).standard_normal((2000, 2))
    oracle = get_oracle(name)
    res = estimate_mean_norm(X, 0.01, oracle)
    assert res.k == math.ceil(3 * math.log(100))
    assert oracle.norm(res.mu_hat) <= 0.25
    assert is_central(CentralQuery(bucket_means(X, res.k), res.r), res.mu_hat, oracle).central


def test_guards():
    Z = np.zeros((25, 1))
    with pytest.raises(NormError, match="guard"):
        is_central(CentralQuery(Z, 1.0), [0.0])
    with pytest.raises(NormError):
        estimate_mean_norm(np.zeros((10, 1)), 1e-5)
    with pytest.raises(NormError):
        estimate_mean_norm(np.zeros((3, 1)), 0.01)
    with pytest.raises(NormError):
        get_oracle("l3")
    with pytest.raises(NormError):
        CentralQuery(Z, -1.0)
