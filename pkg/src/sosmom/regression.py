"""Heavy-tailed linear regression by certified descent.

Samples are split into k contiguous buckets.  For a linear function f
(identified with its coefficient vector) the bucket quantities are

    <h, f>_i = mean_{j in B_i} h_j f(X_j),   |f|_i^2 = <f, f>_i,
    L_i(f)   = mean_{j in B_i} (Y_j - f(X_j))^2,

all of which are quadratic in the coefficients, so every program below
is a degree-4 pseudoexpectation program over (f_1..f_d, b_1..b_k).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .sos import PseudoExpectation, build_basis, compile_program

log = logging.getLogger(__name__)


class DescentStalled(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class RegDataset:
    """Regression sample with contiguous buckets and joint truncation.

    A pair (X_j, Y_j) is zeroed when |X_j| exceeds ``alpha_x`` (default
    3 sqrt(d)); trailing samples beyond ``k * (n // k)`` are dropped from
    the bucket statistics.
    """

    X: np.ndarray
    Y: np.ndarray
    k: int
    alpha_x: float | None = None
    Q: np.ndarray = field(init=False, repr=False)
    c: np.ndarray = field(init=False, repr=False)
    y2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1)
        n, d = self.X.shape
        if self.Y.shape[0] != n:
            raise ValueError("X and Y have different numbers of rows")
        if not 1 <= self.k <= n:
            raise ValueError(f"too many buckets: k={self.k} > n={n}")
        if self.alpha_x is None:
            self.alpha_x = 3.0 * math.sqrt(d)
        keep = np.linalg.norm(self.X, axis=1) <= self.alpha_x
        Xt = self.X * keep[:, None]
        Yt = self.Y * keep
        m = n // self.k
        Xb = Xt[: m * self.k].reshape(self.k, m, d)
        Yb = Yt[: m * self.k].reshape(self.k, m)
        self.Q = np.einsum("kmi,kmj->kij", Xb, Xb) / m
        self.c = np.einsum("kmi,km->ki", Xb, Yb) / m
        self.y2 = np.mean(Yb**2, axis=1)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def replace_bucket(self, i: int, X_i: np.ndarray, Y_i: np.ndarray) -> "RegDataset":
        """Copy with the rows of bucket ``i`` replaced."""
        m = self.n // self.k
        X = self.X.copy()
        Y = self.Y.copy()
        X[i * m : (i + 1) * m] = X_i
        Y[i * m : (i + 1) * m] = Y_i
        return RegDataset(X, Y, self.k, self.alpha_x)


@dataclass
class RegConfig:
    """Thresholds are fractions of k; ``r_const`` is C in r^2 = C (d + log(1/delta)) / n."""

    delta: float = 1e-3
    k: int | None = None
    r: float | None = None
    r_const: float = 1.0
    feasible: float = 0.998
    certify_cap: float = 0.1
    noise_cap: float = 0.001
    C_up: float = 1.01
    c_low: float = 0.99
    contraction: float = 0.999
    C_cert: float = 10.0
    s_probes: int = 40
    max_steps: int = 10_000
    basis_mode: str = "partial"
    localize: bool = True
    tie_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not 0 < self.certify_cap < self.feasible <= 1:
            raise ValueError("need 0 < certify_cap < feasible <= 1")

    def buckets(self) -> int:
        return self.k if self.k is not None else max(1, math.ceil(3 * math.log2(1 / self.delta)))

    def radius(self, n: int, d: int) -> float:
        if self.r is not None:
            return self.r
        return math.sqrt(self.r_const * (d / n + math.log(1 / self.delta) / n))


def ols_init(data: RegDataset) -> np.ndarray:
    """Least-squares coefficients on the raw sample (pseudoinverse)."""
    return np.linalg.pinv(data.X) @ data.Y


def _basis(data: RegDataset, mode: str):
    return build_basis(data.d, data.k, mode, prefix="f")


def _solve(objective, equalities, inequalities, B, localize: bool) -> PseudoExpectation:
    bs = [B.b(i) for i in range(B.k)]
    prog = compile_program(objective, equalities, inequalities, B, bs if localize else ())
    return prog.solve()


def noise_sdp_value(data: RegDataset, g, r: float, basis_mode: str = "partial", localize: bool = True):
    """max pE sum b_i  s.t.  b_i^2 = b_i, |f|^2 = 1, pE[b_i <Y - g, f>_i] >= r pE[b_i]."""
    g = np.asarray(g, dtype=float)
    B = _basis(data, basis_mode)
    bs = [B.b(i) for i in range(data.k)]
    resid = data.c - data.Q @ g
    ineqs = [b * (B.linear_form(w) - r) for b, w in zip(bs, resid)]
    pe = _solve(sum(bs[1:], bs[0]), [B.sphere()] + B.idempotence(), ineqs, B, localize)
    return pe.value, pe


def norm_sdp_value(data: RegDataset, direction: str, c: float, basis_mode: str = "partial", localize: bool = True):
    """Bucket-norm deviation program, ``direction`` in {"upper", "lower"}.

    max pE sum b_i |f|^2  s.t.  pE|f|^4 <= 1, b_i^2 = b_i and
    pE[b_i |f|_i^2] >= c pE[b_i |f|^2]  (upper)  or  <= (lower).
    """
    if direction not in ("upper", "lower"):
        raise ValueError("direction must be 'upper' or 'lower'")
    if not c > 0:
        raise ValueError("c must be positive")
    B = _basis(data, basis_mode)
    bs = [B.b(i) for i in range(data.k)]
    sq = B.quad_form(np.eye(data.d))
    sgn = 1.0 if direction == "upper" else -1.0
    ineqs = [1.0 - sq * sq]
    ineqs += [b * (B.quad_form(sgn * (Qi - c * np.eye(data.d)))) for b, Qi in zip(bs, data.Q)]
    objective = sum((b * sq for b in bs[1:]), bs[0] * sq)
    pe = _solve(objective, B.idempotence(), ineqs, B, localize)
    return pe.value, pe


def certify_done(data: RegDataset, g, cfg: RegConfig, r: float | None = None) -> bool:
    """True when the noise program at radius C_cert r stays below certify_cap k."""
    r = cfg.radius(data.n, data.d) if r is None else r
    value, pe = noise_sdp_value(data, g, cfg.C_cert * r, cfg.basis_mode, cfg.localize)
    if pe.status != "optimal":
        log.warning("certification program ended with status %s; continuing descent", pe.status)
        return False
    return value < cfg.certify_cap * data.k


def _loss_poly(B, data: RegDataset, i: int):
    """L_i(f) as a polynomial in f."""
    return B.quad_form(data.Q[i]) - B.linear_form(2 * data.c[i]) + float(data.y2[i])


def progress_program(data: RegDataset, g, s: float, cfg: RegConfig) -> PseudoExpectation:
    """max pE sum b_i  s.t.  b_i^2 = b_i, |f - g|^2 = s^2, pE[b_i L_i(f)] <= pE[b_i (L_i(g) - 0.97 s^2)].

    A value of at least ``feasible * k`` is equivalent to the existence of a
    pseudo-distribution with sum b_i equal to ``feasible * k``: zeroing one
    b_j keeps every constraint and the f-moments, so mixtures interpolate
    the bucket mass down to the target without changing pE[f].
    """
    g = np.asarray(g, dtype=float)
    B = _basis(data, cfg.basis_mode)
    bs = [B.b(i) for i in range(data.k)]
    sq = B.quad_form(np.eye(data.d)) - B.linear_form(2 * g) + float(g @ g)
    loss_g = data.y2 - 2 * data.c @ g + np.einsum("i,kij,j->k", g, data.Q, g)
    ineqs = [b * (float(loss_g[i]) - 0.97 * s * s - _loss_poly(B, data, i)) for i, b in enumerate(bs)]
    return _solve(sum(bs[1:], bs[0]), [sq - s * s] + B.idempotence(), ineqs, B, cfg.localize)


CERTIFY = "CERTIFY"


@dataclass
class StepResult:
    next: np.ndarray | None
    certify: bool
    s: float | None = None
    value: float | None = None


def _s_grid(data: RegDataset, g, r: float, cfg: RegConfig) -> np.ndarray:
    rms = math.sqrt(float(np.mean(data.Y**2)))
    hi = max(2.0 * (float(np.linalg.norm(g)) + rms), 2.0 * r)
    return np.geomspace(r, hi, cfg.s_probes)


def descent_step(data: RegDataset, g, cfg: RegConfig, r: float | None = None) -> StepResult:
    """One certified descent step from ``g``.

    Returns a ``StepResult`` with ``certify=True`` when the certification
    check passes; otherwise bisects the geometric s-grid for the largest
    s whose progress program reaches ``feasible * k`` and returns pE[f].
    """
    g = np.asarray(g, dtype=float)
    r = cfg.radius(data.n, data.d) if r is None else r
    if certify_done(data, g, cfg, r):
        return StepResult(None, True)
    grid = _s_grid(data, g, r, cfg)
    thr = cfg.feasible * data.k - cfg.tie_tol * data.k
    cache: dict[int, PseudoExpectation | None] = {}

    def probe(j):
        if j not in cache:
            pe = progress_program(data, g, float(grid[j]), cfg)
            ok = pe.status == "optimal" and pe.value >= thr
            if pe.status != "optimal":
                log.warning("progress program at s=%.4g ended with status %s", grid[j], pe.status)
            cache[j] = pe if ok else None
        return cache[j]

    # feasibility is downward closed in s: find the largest feasible index
    lo, hi = -1, len(grid)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid) is not None:
            lo = mid
        else:
            hi = mid
    if lo < 0:
        raise DescentStalled(
            "descent stalled: no feasible s on the grid",
            {"g": g.tolist(), "s_min": float(grid[0]), "s_max": float(grid[-1]), "r": r},
        )
    pe = cache[lo]
    return StepResult(pe.first_moment(), False, float(grid[lo]), pe.value)


@dataclass
class RegResult:
    f_hat: np.ndarray
    steps: int
    status: str
    path: list[np.ndarray] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"f_hat": self.f_hat.tolist(), "steps": self.steps, "status": self.status}


def step_budget(initial: float, r: float, cfg: RegConfig) -> int:
    if initial <= r:
        return 1
    return min(cfg.max_steps, 2 * math.ceil(math.log(initial / r) / math.log(1 / cfg.contraction)))


def estimate_regression(data: RegDataset, cfg: RegConfig) -> RegResult:
    """OLS start, then certified descent until the certify check passes."""
    r = cfg.radius(data.n, data.d)
    g = ols_init(data)
    path = [g.copy()]
    budget = step_budget(float(_s_grid(data, g, r, cfg)[-1]), r, cfg)
    steps = 0
    while steps < budget:
        try:
            res = descent_step(data, g, cfg, r)
        except DescentStalled as exc:
            log.warning("%s", exc)
            return RegResult(g, steps, "stalled", path)
        if res.certify:
            return RegResult(g, steps, "certified", path)
        g = res.next
        path.append(g.copy())
        steps += 1
    return RegResult(g, steps, "budget", path)
