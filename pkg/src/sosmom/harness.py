"""Tail-probability benchmarks of classical against median-of-means estimators.

Each trial draws a fresh dataset from a per-trial seed, runs every
estimator and records its error.  For each confidence level delta the
report keeps the empirical (1 - delta)-quantile of the errors, i.e. the
order statistic of rank ceil((1 - delta) T) among T trials.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .covariance import CovConfig, estimate_covariance
from .normmean import estimate_mean_norm, get_oracle
from .regression import RegConfig, RegDataset, estimate_regression, ols_init
from .sampler import Dataset, DistSpec, compute_truncation_alpha, sample_dist

log = logging.getLogger(__name__)

CSV_VERSION = "# sosmom-bench-csv v1"
TASKS = ("mean1d", "cov", "regress", "mean_norm")
ESTIMATORS = {
    "mean1d": ("empirical", "mom"),
    "cov": ("empirical", "sos_mom"),
    "regress": ("ols", "sos_mom"),
    "mean_norm": ("empirical", "sos_mom"),
}
COLUMNS = ("task", "estimator", "delta", "n", "d", "quantile_error", "mean_error", "trials", "failures")


def median_of_means_1d(samples, k: int) -> float:
    """Lower median of k contiguous bucket means."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if not 1 <= k <= x.size:
        raise ValueError(f"too many buckets: k={k} > n={x.size}")
    m = x.size // k
    means = np.sort(x[: m * k].reshape(k, m).mean(axis=1))
    return float(means[(k - 1) // 2])


def mom_buckets(delta: float) -> int:
    return max(1, math.ceil(3 * math.log2(1 / delta)))


def quantile_error(errors, delta: float) -> float:
    """Order statistic of rank ceil((1 - delta) T), 1-based."""
    e = np.sort(np.asarray(errors, dtype=float))
    T = e.size
    rank = min(T, max(1, math.ceil((1 - delta) * T - 1e-12)))
    return float(e[rank - 1])


def pareto_1d(n: int, rng: np.random.Generator, tail: float = 2.5) -> np.ndarray:
    """Centered Pareto(tail) rescaled to unit variance (needs tail > 2)."""
    mean = tail / (tail - 1)
    var = tail / ((tail - 1) ** 2 * (tail - 2))
    x = (1.0 - rng.random(n)) ** (-1.0 / tail)
    return (x - mean) / math.sqrt(var)


def trial_seed(master: int, t: int) -> int:
    """Seed of trial t: first word of SeedSequence([master, t])."""
    return int(np.random.SeedSequence([master, t]).generate_state(1)[0])


@dataclass
class BenchConfig:
    task: str
    n: int
    deltas: tuple[float, ...]
    trials: int
    seed: int = 0
    dist: DistSpec | None = None
    tail: float = 2.5  # Pareto index for mean1d when ``dist`` is None
    estimators: tuple[str, ...] | None = None
    noise: float = 1.0
    norm: str = "l2"
    epsilon: float = 0.02
    out: str | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        self.deltas = tuple(float(x) for x in self.deltas)
        if not self.deltas or not all(0 < x < 1 for x in self.deltas):
            raise ValueError("delta values must lie in (0, 1)")
        if self.estimators is None:
            self.estimators = ESTIMATORS[self.task]
        self.estimators = tuple(self.estimators)
        bad = set(self.estimators) - set(ESTIMATORS[self.task])
        if bad:
            raise ValueError(f"unknown estimators for {self.task}: {sorted(bad)}")
        if self.task != "mean1d" and self.dist is None:
            raise ValueError(f"task {self.task} needs a distribution spec")

    @property
    def d(self) -> int:
        return 1 if self.dist is None else self.dist.dim


@dataclass
class BenchRow:
    task: str
    estimator: str
    delta: float
    n: int
    d: int
    quantile_error: float
    mean_error: float
    trials: int
    failures: int = 0
    runtime_ms: float = 0.0


@dataclass
class BenchReport:
    rows: list[BenchRow]
    errors: dict[tuple[str, float], list[float]] = field(default_factory=dict, repr=False)

    def row(self, estimator: str, delta: float) -> BenchRow:
        for r in self.rows:
            if r.estimator == estimator and r.delta == delta:
                return r
        raise KeyError((estimator, delta))

    def to_csv(self, include_runtime: bool = False) -> str:
        cols = COLUMNS + (("runtime_ms",) if include_runtime else ())
        buf = io.StringIO()
        buf.write(CSV_VERSION + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            vals = [getattr(r, c) for c in cols]
            w.writerow([repr(v) if isinstance(v, float) else v for v in vals])
        return buf.getvalue()

    def summary(self) -> str:
        lines = []
        for r in self.rows:
            lines.append(
                f"{r.task} {r.estimator:<10} delta={r.delta:g} n={r.n} d={r.d} "
                f"q_err={r.quantile_error:.6g} mean_err={r.mean_error:.6g} trials={r.trials} failures={r.failures}"
            )
        return "\n".join(lines) + "\n"


def _draw(cfg: BenchConfig, seed: int):
    rng = np.random.default_rng(seed)
    if cfg.task == "mean1d":
        if cfg.dist is None:
            return pareto_1d(cfg.n, rng, cfg.tail)[:, None], 0.0
        return sample_dist(cfg.dist, cfg.n, seed).samples, 0.0
    data = sample_dist(cfg.dist, cfg.n, seed)
    if cfg.task == "regress":
        f_star = rng.standard_normal(cfg.d)
        f_star /= np.linalg.norm(f_star)
        noise_spec = DistSpec(cfg.dist.kind, 1, nu=cfg.dist.nu, sigma_ln=cfg.dist.sigma_ln) if cfg.dist.kind != "point_mass" else None
        eps = sample_dist(noise_spec, cfg.n, seed + 1).samples[:, 0] if noise_spec else np.zeros(cfg.n)
        return (data.samples, data.samples @ f_star + cfg.noise * eps), f_star
    return data.samples, None


def _run_one(cfg: BenchConfig, est: str, delta: float, sample, truth) -> float:
    task = cfg.task
    if task == "mean1d":
        x = sample[:, 0]
        mu = float(np.mean(x)) if est == "empirical" else median_of_means_1d(x, mom_buckets(delta))
        return abs(mu - truth)
    if task == "cov":
        Sigma = cfg.dist.sigma()
        if est == "empirical":
            S = sample.T @ sample / sample.shape[0]
        else:
            k = min(mom_buckets(delta), sample.shape[0])
            tr, op = float(np.trace(Sigma)), float(np.linalg.norm(Sigma, 2))
            alpha = compute_truncation_alpha(tr, op, cfg.dist.hypercontractivity_L(), sample.shape[0], k) if tr > 0 else math.inf
            S = estimate_covariance(Dataset(sample), CovConfig(k=k, alpha=alpha, epsilon=cfg.epsilon)).Sigma_hat
        return float(np.linalg.norm(S - Sigma, 2))
    if task == "regress":
        X, Y = sample
        rc = RegConfig(delta=delta)
        data = RegDataset(X, Y, min(rc.buckets(), X.shape[0]))
        f = ols_init(data) if est == "ols" else estimate_regression(data, rc).f_hat
        return float(np.linalg.norm(f - truth))
    oracle = get_oracle(cfg.norm)
    mu0 = np.zeros(sample.shape[1])
    mu = sample.mean(axis=0) if est == "empirical" else estimate_mean_norm(sample, delta, oracle).mu_hat
    return oracle.norm(mu - mu0)


def run_tail_benchmark(cfg: BenchConfig) -> BenchReport:
    """Quantile errors for every (estimator, delta) pair, in config order."""
    errs: dict[tuple[str, float], list[float]] = {(e, dl): [] for e in cfg.estimators for dl in cfg.deltas}
    fails = dict.fromkeys(errs, 0)
    rt = dict.fromkeys(errs, 0.0)
    for t in range(cfg.trials):
        sample, truth = _draw(cfg, trial_seed(cfg.seed, t))
        for est in cfg.estimators:
            cache = None
            for dl in cfg.deltas:
                t0 = time.perf_counter()
                try:
                    if est in ("empirical", "ols") and cache is not None:
                        e = cache
                    else:
                        e = _run_one(cfg, est, dl, sample, truth)
                        if est in ("empirical", "ols"):
                            cache = e
                except Exception as exc:  # recorded per row; the run continues
                    log.warning("trial %d %s delta=%g failed: %s", t, est, dl, exc)
                    fails[(est, dl)] += 1
                    e = math.inf
                rt[(est, dl)] += 1000 * (time.perf_counter() - t0)
                errs[(est, dl)].append(e)
    rows = []
    for (est, dl), e in errs.items():
        finite = [v for v in e if math.isfinite(v)]
        rows.append(
            BenchRow(
                cfg.task, est, dl, cfg.n, cfg.d,
                quantile_error(e, dl),
                float(np.mean(finite)) if finite else math.inf,
                cfg.trials, fails[(est, dl)], rt[(est, dl)] / cfg.trials,
            )
        )
    return BenchReport(rows, errs)
