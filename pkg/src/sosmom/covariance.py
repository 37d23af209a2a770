"""Median-of-means covariance estimation by certified gradient descent.

For a candidate matrix x the two signed certification programs ask for a
pseudo-distribution over a unit direction u and bucket indicators b_i
such that almost every bucket second moment Z_i exceeds x (or falls
below it) by r along u:

    maximize   pE sum_i b_i
    subject to b_i^2 = b_i,  |u|^2 = 1,
               pE[ +-b_i <Z_i - x, u u^T> ] >= r pE[b_i]

The largest r at which one of the two programs still reaches 0.999 k is
the distance estimate, and pE[u u^T] of the winning program (negated for
the lower side) is a descent direction with unit nuclear norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .sampler import BucketSummary, Dataset, compute_truncation_alpha, make_buckets
from .sos import PseudoExpectation, build_basis, compile_program, pe_extract_uu

log = logging.getLogger(__name__)


class NoGradientError(RuntimeError):
    """Neither signed program reaches the acceptance threshold."""


class CovEstimationError(RuntimeError):
    def __init__(self, message: str, partial: "CovResult"):
        super().__init__(message)
        self.partial = partial


@dataclass
class CovConfig:
    """Parameters of the covariance estimator.

    ``r_min`` defaults to ``epsilon / 4`` and ``r_max`` to the largest
    spectral distance between ``x`` and a bucket matrix.  ``nit`` defaults
    to ``ceil(16 d ln(max(1, F0 / epsilon)))`` where ``F0 = sqrt(d) d_0``
    bounds the Frobenius distance implied by the first estimate.  The
    loop also stops once the estimated distance is at most ``epsilon`` or
    has not improved by 1% for ``patience`` iterations (``None`` disables
    the patience rule).
    """

    k: int
    alpha: float = math.inf
    epsilon: float = 1e-3
    nit: int | None = None
    r_min: float | None = None
    r_max: float | None = None
    r_step: float = 0.01
    accept: float = 0.999
    certify: float = 0.001
    step_divisor: float = 4.0
    basis_mode: str = "partial"
    localize: bool = True
    patience: int | None = 12
    tie_tol: float = 1e-6

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 0 < self.certify < self.accept <= 1:
            raise ValueError("need 0 < certify < accept <= 1")
        if self.nit is not None and self.nit < 0:
            raise ValueError("nit must be nonnegative")
        if self.r_min is not None and not self.r_min > 0:
            raise ValueError("r_min must be positive")
        if not self.r_step > 0:
            raise ValueError("r_step must be positive")

    @property
    def rmin(self) -> float:
        return self.r_min if self.r_min is not None else self.epsilon / 4

    @staticmethod
    def buckets_for(delta: float) -> int:
        """k = ceil(3 log2(1/delta))."""
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        return max(1, math.ceil(3 * math.log2(1 / delta)))


@dataclass
class CertResult:
    value: float
    pe: PseudoExpectation
    sign: str
    r: float

    @property
    def ok(self) -> bool:
        return self.pe.status == "optimal"


@dataclass
class CovResult:
    Sigma_hat: np.ndarray
    d_star: float
    iterations: int
    trace: list[tuple[int, float]]
    iterates: list[np.ndarray] = field(default_factory=list)
    status: str = "ok"

    def as_dict(self) -> dict:
        return {
            "Sigma_hat": self.Sigma_hat.tolist(),
            "d_star": self.d_star,
            "iterations": self.iterations,
            "trace": [[t, d] for t, d in self.trace],
            "status": self.status,
        }


def test_cov_value(
    Z: BucketSummary, x: np.ndarray, r: float, sign: str = "pos", basis_mode: str = "partial", localize: bool = True
) -> CertResult:
    """Solve the signed certification program at radius ``r``."""
    if sign not in ("pos", "neg"):
        raise ValueError("sign must be 'pos' or 'neg'")
    x = np.asarray(x, dtype=float)
    if x.shape != (Z.d, Z.d):
        raise ValueError(f"x has shape {x.shape}, buckets are {Z.d}x{Z.d}")
    s = 1.0 if sign == "pos" else -1.0
    B = build_basis(Z.d, Z.k, basis_mode)
    bs = [B.b(i) for i in range(Z.k)]
    ineqs = [b * (B.quad_form(s * (Zi - x)) - r) for b, Zi in zip(bs, Z.Z)]
    prog = compile_program(sum(bs[1:], bs[0]), [B.sphere()] + B.idempotence(), ineqs, B, bs if localize else ())
    pe = prog.solve()
    return CertResult(float(pe.value), pe, sign, float(r))


test_cov_value.__test__ = False  # not a pytest test


def _probe(Z, x, r, cfg: CovConfig):
    """Accepting certificate at radius r, positive side first, or None.

    A bucket whose deviation has no eigenvalue reaching r along the tested
    side forces pE[b_i] = 0 (the localizing blocks make
    pE[b_i (lambda I - D_i) . u u^T] nonnegative), so the count of the
    remaining buckets bounds the program value and the solve can be
    skipped when that bound is below the threshold.
    """
    thr = cfg.accept * Z.k - cfg.tie_tol * Z.k
    top = np.linalg.eigvalsh(Z.Z - x[None])
    for sign in ("pos", "neg"):
        reach = top[:, -1] if sign == "pos" else -top[:, 0]
        if cfg.localize and np.count_nonzero(reach >= r) < thr:
            continue
        res = test_cov_value(Z, x, r, sign, cfg.basis_mode, cfg.localize)
        if not res.ok:
            log.warning("certification at r=%.4g (%s) ended with status %s", r, sign, res.pe.status)
            continue
        if res.value >= thr:
            return res
    return None


def _search(Z: BucketSummary, x: np.ndarray, cfg: CovConfig, hint: float | None = None):
    """Largest accepted radius on the geometric grid and its certificate.

    Acceptance is monotone in r, so the grid is bisected.  With a ``hint``
    (the previous distance during descent) the bracket is first located by
    doubling steps outward from the hint.
    """
    rmin = cfg.rmin
    rmax = cfg.r_max
    if rmax is None:
        rmax = max(float(np.max(np.abs(np.linalg.eigvalsh(Zi - x)))) for Zi in Z.Z)
    J = max(0, math.ceil(math.log(max(rmax, rmin) / rmin) / math.log1p(cfg.r_step)))
    grid = rmin * (1 + cfg.r_step) ** np.arange(J + 1)
    found: dict[int, CertResult | None] = {}

    def probe(j):
        if j not in found:
            found[j] = _probe(Z, x, float(grid[j]), cfg)
        return found[j]

    if hint is None or hint <= rmin:
        if probe(0) is None:
            return rmin, None
        lo, hi = 0, J + 1
    else:
        j0 = min(J, int(math.floor(math.log(hint / rmin) / math.log1p(cfg.r_step))))
        step = 1
        if probe(j0) is not None:
            lo, hi = j0, None
            while hi is None:
                j = lo + step
                if j > J:
                    hi = J + 1
                elif probe(j) is None:
                    hi = j
                else:
                    lo = j
                step *= 2
        else:
            lo, hi = None, j0
            while lo is None:
                j = max(0, hi - step)
                if probe(j) is not None:
                    lo = j
                elif j == 0:
                    return rmin, None
                else:
                    hi = j
                step *= 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid) is None:
            hi = mid
        else:
            lo = mid
    return float(grid[lo]), found[lo]


def dist_est(Z: BucketSummary, x: np.ndarray, cfg: CovConfig) -> float:
    """Estimated spectral distance from ``x`` to the bucket matrices."""
    return _search(Z, x, cfg)[0]


def _gradient(res: CertResult) -> np.ndarray:
    G = pe_extract_uu(res.pe)
    G = 0.5 * (G + G.T)
    return G if res.sign == "pos" else -G


def grad_est(Z: BucketSummary, x: np.ndarray, cfg: CovConfig) -> np.ndarray:
    """Signed pE[u u^T] from the accepted program at the estimated distance."""
    _, res = _search(Z, x, cfg)
    if res is None:
        raise NoGradientError("no gradient available: neither program reaches the acceptance threshold")
    return _gradient(res)


def default_nit(d: int, d0: float, epsilon: float) -> int:
    F0 = math.sqrt(d) * d0
    return max(1, math.ceil(16 * d * math.log(max(1.0, F0 / epsilon))))


def estimate_covariance(data: Dataset | BucketSummary, cfg: CovConfig) -> CovResult:
    """Gradient descent on the certified distance, starting from zero.

    Returns the iterate with the smallest estimated distance.
    """
    Z = data if isinstance(data, BucketSummary) else make_buckets(data, cfg.k, cfg.alpha)
    d = Z.d
    x = np.zeros((d, d))
    trace: list[tuple[int, float]] = []
    iterates = [x.copy()]
    best_x, best_d = x.copy(), math.inf
    nit = cfg.nit
    since_improve = 0
    status = "ok"
    t = 0
    while True:
        try:
            dt, res = _search(Z, x, cfg, hint=trace[-1][1] if trace else None)
        except Exception as exc:  # solver blew up: hand back what we have
            partial = CovResult(best_x, best_d, t, trace, iterates, "failed")
            raise CovEstimationError(f"descent aborted at iteration {t}: {exc}", partial) from exc
        trace.append((t, dt))
        if nit is None:
            nit = default_nit(d, dt, cfg.epsilon)
        if dt < best_d * 0.99:
            since_improve = 0
        else:
            since_improve += 1
        if dt < best_d:
            best_x, best_d = x.copy(), dt
        if t >= nit:
            break
        if res is None:
            status = "no_gradient"
            break
        if dt <= cfg.epsilon:
            status = "converged"
            break
        if cfg.patience is not None and since_improve >= cfg.patience:
            status = "stalled"
            break
        x = x + (dt / cfg.step_divisor) * _gradient(res)
        x = 0.5 * (x + x.T)
        iterates.append(x.copy())
        t += 1
    return CovResult(best_x, best_d, t, trace, iterates, status)


def config_from_params(
    data: Dataset,
    delta: float | None = None,
    k: int | None = None,
    trsigma: float | None = None,
    opnorm: float | None = None,
    L: float | None = None,
    **kwargs,
) -> tuple[CovConfig, Dataset]:
    """Build a config, estimating missing covariance scales from a split.

    When ``trsigma`` or ``opnorm`` is missing, the first half of the rows
    estimates them (median of bucket traces, spectral norm of the half's
    second moment) and the second half is returned for estimation.
    """
    if k is None:
        k = CovConfig.buckets_for(delta if delta is not None else 1e-3)
    if L is None:
        L = data.spec.hypercontractivity_L() if data.spec is not None else math.sqrt(105.0)
    if trsigma is None or opnorm is None:
        h = data.n // 2
        head = data.samples[:h]
        kk = max(1, min(k, h))
        traces = np.sum(head[: (h // kk) * kk] ** 2, axis=1).reshape(kk, -1).mean(axis=1)
        est_tr = float(np.median(traces))
        est_op = float(np.linalg.norm(head.T @ head / h, 2))
        trsigma = trsigma if trsigma is not None else est_tr
        opnorm = opnorm if opnorm is not None else est_op
        data = Dataset(data.samples[h:], data.seed, data.spec)
    if trsigma <= 0 or opnorm <= 0:
        alpha = math.inf
    else:
        alpha = compute_truncation_alpha(trsigma, opnorm, L, data.n, k)
    return CovConfig(k=k, alpha=alpha, **kwargs), data
