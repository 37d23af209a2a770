"""Acceptance criteria AC1-AC11, one summary line each (printed at the end of the run)."""

import math
import time

import numpy as np
import pytest

from oracles import count_1d, count_l2_2d, mc_planted_moment, mc_single_moment, random_hermite_index
from sosmom.covariance import CovConfig, _search, _gradient, estimate_covariance, test_cov_value as cov_value
from sosmom.harness import BenchConfig, run_tail_benchmark
from sosmom.normmean import CentralQuery, L2, estimate_mean_norm, find_central_point, gen_tst_value, is_central
from sosmom.regression import RegConfig, RegDataset, certify_done, estimate_regression
from sosmom.roadblock import accuracy, hermite_planted_moment, hermite_single_moment, is_super_even, low_degree_norm
from sosmom.sampler import BucketSummary, Dataset, DistSpec, make_buckets, sample_dist
from sosmom.sos import Polynomial, build_basis, compile_program, max_pe_quadform, sos_bernstein_bound

pytestmark = pytest.mark.acceptance


def random_psd(rng, d, scale=1.0):
    A = rng.standard_normal((d, d))
    return scale * A @ A.T / d


def test_ac1_pseudoexpectation_validity(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = dict(one=0.0, eig=0.0, idem=0.0, sphere=0.0, cs=-math.inf)
    bad_status = 0
    for _ in range(100):
        d, k = int(rng.integers(1, 5)), int(rng.integers(1, 7))
        B = build_basis(d, k, "partial")
        bs = [B.b(j) for j in range(k)]
        ineqs = [b * (B.quad_form(rng.standard_normal((d, d))) - rng.uniform(0, 0.5)) for b in bs]
        obj = sum(bs[1:], bs[0]) + B.quad_form(rng.standard_normal((d, d)))
        pe = compile_program(obj, [B.sphere()] + B.idempotence(), ineqs, B, bs).solve()
        bad_status += pe.status != "optimal"
        worst["one"] = max(worst["one"], abs(pe(B.one()) - 1))
        worst["eig"] = max(worst["eig"], -pe.min_eig())
        for e in B.entries:
            q = Polynomial({e: 1.0}, B.nvars)
            # every basis monomial times b_j or |u|^2 stays within degree 4 products of the basis
            for b in bs:
                try:
                    worst["idem"] = max(worst["idem"], abs(pe(b * b * q) - pe(b * q)))
                except KeyError:
                    pass
            try:
                worst["sphere"] = max(worst["sphere"], abs(pe((B.sphere() + 1) * q) - pe(q)))
            except KeyError:
                pass
        for _ in range(5):
            f = B.linear_form(rng.standard_normal(d))
            g = B.linear_form(rng.standard_normal(d))
            worst["cs"] = max(worst["cs"], pe(f * g) ** 2 - pe(f * f) * pe(g * g))
    elapsed = time.perf_counter() - t0
    ok = (
        bad_status == 0
        and worst["one"] <= 1e-6
        and worst["eig"] <= 1e-6
        and worst["idem"] <= 1e-6
        and worst["sphere"] <= 1e-6
        and worst["cs"] <= 1e-8
        and elapsed <= 300
    )
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    report("AC1", ok, f"100 programs, non-optimal={bad_status}, {detail}, {elapsed:.0f}s")
    assert ok


def test_ac2_quadform_vs_eigensolver(report):
    rng = np.random.default_rng(2)
    err = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 5))
        A = rng.standard_normal((d, d))
        A = A + A.T
        v, _ = max_pe_quadform([A])
        err = max(err, abs(v - np.linalg.eigvalsh(A)[-1]))
    ok = err <= 1e-5
    report("AC2", ok, f"50 programs, max |value - lambda_max| = {err:.2e}")
    assert ok


def test_ac3_bounded_differences(report):
    rng = np.random.default_rng(3)
    d, k = 3, 6
    worst = 0.0
    for _ in range(20):
        Z = BucketSummary(np.array([random_psd(rng, d) for _ in range(k)]), 1, math.inf)
        x = random_psd(rng, d, 0.5)
        r = float(rng.uniform(0.05, 0.5))
        sign = str(rng.choice(["pos", "neg"]))
        base = cov_value(Z, x, r, sign).value
        i = int(rng.integers(k))
        alt = cov_value(Z.replace(i, random_psd(rng, d, 10.0)), x, r, sign).value
        worst = max(worst, abs(alt - base) / k)
    ok = worst <= 1 / k + 1e-6
    report("AC3", ok, f"20 instances, max |change|/k = {worst:.4f} (bound {1 / k:.4f})")
    assert ok


def test_ac4_distance_and_gradient(report):
    d, k, m = 4, 8, 2000
    cfg = CovConfig(k=k)
    t0 = time.perf_counter()
    lines, all_ok, nuc = [], True, 0.0
    for s in (0.5, 1.0, 2.0):
        good = 0
        for seed in range(10):
            rng = np.random.default_rng([4, seed])
            St = random_psd(rng, d) + 0.5 * np.eye(d)
            spec = DistSpec("gaussian", d, target_cov=St)
            Z = make_buckets(sample_dist(spec, k * m, seed), k)
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            x = St - (1 if seed % 2 == 0 else -1) * s * np.outer(v, v)
            dist, res = _search(Z, x, cfg)
            G = _gradient(res) if res is not None else np.zeros((d, d))
            if res is not None:
                nuc = max(nuc, abs(np.abs(np.linalg.eigvalsh(G)).sum() - 1))
            corr = float(np.sum(G * (St - x)))
            good += 0.7 * s <= dist <= 1.3 * s and corr >= 0.4 * s
        lines.append(f"s={s:g}: {good}/10")
        all_ok &= good >= 9
    elapsed = time.perf_counter() - t0
    ok = all_ok and nuc <= 1e-4 and elapsed <= 600
    report("AC4", ok, f"{', '.join(lines)}, max | |G|_1 - 1 | = {nuc:.1e}, {elapsed:.0f}s")
    assert ok


def test_ac5_covariance_end_to_end(report):
    n, k, d = 3000, 10, 3
    ok_err = ok_contract = 0
    errs = []
    for seed in range(10):
        data = sample_dist(DistSpec("gaussian", d), n, seed)
        res = estimate_covariance(data, CovConfig(k=k, epsilon=0.02))
        err = float(np.linalg.norm(res.Sigma_hat - np.eye(d), 2))
        errs.append(err)
        ok_err += err <= 0.5
        # Frobenius distance to the population covariance along steps taken from far iterates
        fro = [np.linalg.norm(X - np.eye(d)) for X in res.iterates]
        far = [t for t, dt in res.trace if dt >= 0.5 and t + 1 < len(fro)]
        ok_contract += all(fro[t + 1] <= fro[t] + 1e-9 for t in far)
    v = np.array([1.0, -0.5, 2.0])
    pm = estimate_covariance(Dataset(np.tile(v, (60, 1))), CovConfig(k=6, epsilon=1e-4))
    pm_err = float(np.abs(pm.Sigma_hat - np.outer(v, v)).max())
    ok = ok_err >= 9 and pm_err <= 1e-3 and ok_contract >= 9
    report(
        "AC5",
        ok,
        f"err<=0.5 in {ok_err}/10 (max {max(errs):.3f}), point mass err {pm_err:.1e}, far-regime contraction {ok_contract}/10",
    )
    assert ok


def regression_data(seed, n, d, noise):
    rng = np.random.default_rng([6, seed])
    f = rng.standard_normal(d)
    X = rng.standard_normal((n, d))
    return X, X @ f + noise * rng.standard_normal(n), f


def test_ac6_regression_end_to_end(report):
    d = 4
    cfg = RegConfig(delta=1e-3)
    clean = cert = noisy = 0
    for seed in range(10):
        X, Y, f = regression_data(seed, 800, d, 0.0)
        data = RegDataset(X, Y, cfg.buckets())
        clean += np.linalg.norm(estimate_regression(data, cfg).f_hat - f) <= 0.05
        cert += certify_done(data, f, cfg)
        X, Y, f = regression_data(100 + seed, 2000, d, 1.0)
        res = estimate_regression(RegDataset(X, Y, cfg.buckets()), cfg)
        noisy += np.linalg.norm(res.f_hat - f) ** 2 <= 10 * d / 2000
    ok = clean >= 9 and noisy >= 8 and cert == 10
    report("AC6", ok, f"noiseless {clean}/10, noisy {noisy}/10, certify at f* {cert}/10")
    assert ok


def test_ac7_general_norm_mean(report):
    rng = np.random.default_rng(7)
    disagree = brute = 0
    for case in range(1000):
        d = 1 + case % 2
        k = int(rng.integers(1, 7))
        Z = rng.standard_normal((k, d))
        x = rng.standard_normal(d)
        r = float(rng.uniform(0.05, 2.0))
        p = float(rng.choice([0.0, 0.1, 0.25, 0.5]))
        value = gen_tst_value(Z, x, r)
        disagree += is_central(CentralQuery(Z, r, p), x).central != (value <= math.floor(p * k))
        brute += value != (count_1d(Z, x, r) if d == 1 else count_l2_2d(Z, x, r))
    close_bad = close_n = 0
    for case in range(30):
        Z = rng.standard_normal((6, 2))
        r = 0.75 * max(np.linalg.norm(a - b) for a in Z for b in Z)
        q = CentralQuery(Z, r)
        pts = [y for y in rng.uniform(Z.min(0) - r, Z.max(0) + r, size=(60, 2)) if is_central(q, y).central]
        x = find_central_point(q)
        pts += [x] if x is not None else []
        for a in pts:
            for b in pts:
                close_n += 1
                close_bad += np.linalg.norm(a - b) > 2 * r + 1e-9
    good = 0
    for seed in range(10):
        X = np.random.default_rng([7, seed]).standard_normal((2000, 2))
        good += np.linalg.norm(estimate_mean_norm(X, 0.01, L2).mu_hat) <= 0.25
    ok = disagree == 0 and brute == 0 and close_bad == 0 and good >= 9
    report(
        "AC7",
        ok,
        f"oracle/count disagreements {disagree}/1000, brute-force mismatches {brute}, "
        f"closeness violations {close_bad}/{close_n}, |mu_hat|<=0.25 in {good}/10",
    )
    assert ok


def test_ac8_heavy_tail_separation(report):
    delta = 0.002
    rep = run_tail_benchmark(BenchConfig("mean1d", 4000, (delta,), 2000, seed=0, tail=2.5))
    mom = rep.row("mom", delta).quantile_error
    emp = rep.row("empirical", delta).quantile_error
    ratio = emp / mom
    ok = mom < emp and ratio >= 2
    report("AC8", ok, f"quantile error MoM {mom:.4f} vs empirical {emp:.4f}, ratio {ratio:.2f} (need >= 2)")
    assert mom < emp
    assert ratio >= 2


def test_ac9_hermite_moments(report):
    rng = np.random.default_rng(9)
    draws = 10**6
    single_bad = planted_bad = 0
    for i in range(20):
        x = rng.standard_normal(3)
        x *= rng.uniform(0.3, 1.0) / np.linalg.norm(x)
        lam = float(rng.uniform(-0.9, 0.9))
        alpha = random_hermite_index(rng, 1, 3, 6)[0]
        mean, se = mc_single_moment(alpha, lam, x, draws, 1000 + i)
        single_bad += abs(mean - hermite_single_moment(alpha, lam, x)) > 3 * se + 1e-12
    d, m, lam = 2, 2, 0.4
    indices = []
    while len(indices) < 20:
        A = random_hermite_index(rng, m * d, d, 6)
        # half of the indices are super-even so that nonzero moments are exercised
        if len(indices) % 2 == 0 or is_super_even(A, d, m):
            indices.append(A)
    for i, A in enumerate(indices):
        mean, se = mc_planted_moment(A, lam, d, m, draws, 2000 + i)
        planted_bad += abs(mean - hermite_planted_moment(A, lam, d, m)) > 3 * se + 1e-12
    ldn = (low_degree_norm(0, 0.5, 3, 4), low_degree_norm(2, 0.5, 3, 4))
    ok = single_bad == 0 and planted_bad == 0 and ldn == (1.0, 1.0)
    report("AC9", ok, f"single-moment misses {single_bad}/20, planted misses {planted_bad}/20, low-degree t=0,2 -> {ldn}")
    assert ok


def test_ac10_block_mixture_threshold(report):
    d, m, trials = 8, 1000, 20
    acc = {}
    for test in ("subset", "sos"):
        for lam in (0.9, 0.05):
            acc[test, lam] = {c: accuracy(test, d, m, lam, c, trials, seed=10) for c in ("null", "planted")}
    strong = all(min(acc[t, 0.9].values()) >= 0.8 for t in ("subset", "sos"))
    weak = all(np.mean(list(acc[t, 0.05].values())) <= 0.7 for t in ("subset", "sos"))
    ok = strong and weak
    detail = "; ".join(
        f"{t} lam={lam:g}: null {a['null']:.2f} planted {a['planted']:.2f}" for (t, lam), a in acc.items()
    )
    report("AC10", ok, detail)
    assert ok


def test_ac11_sos_matrix_bernstein(report):
    rng = np.random.default_rng(11)
    d = 4
    pool = []
    for _ in range(6):
        S = rng.standard_normal((d, d))
        pool.append((S + S.T) / 2)
    # M = eps S_J with eps a random sign and J uniform over the pool
    R = max(np.linalg.norm(S, 2) for S in pool)
    sigma = math.sqrt(np.linalg.norm(np.mean([S @ S for S in pool], axis=0), 2))
    parts = []
    ok = True
    for k in (5, 20):
        vals = []
        for _ in range(50):
            J = rng.integers(len(pool), size=k)
            eps = rng.choice([-1.0, 1.0], size=k)
            mats = [e * pool[j] for e, j in zip(eps, J)]
            vals.append(max_pe_quadform([sum(mats)])[0])
        bound = sos_bernstein_bound(R, sigma, k, d, 1)
        ok &= float(np.mean(vals)) <= bound
        parts.append(f"k={k}: mean {np.mean(vals):.3f} <= bound {bound:.3f}")
    report("AC11", ok, ", ".join(parts))
    assert ok
