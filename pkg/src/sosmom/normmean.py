"""Mean estimation in a general norm through central points.

A point x is (r, p)-central for bucket means Z_1..Z_k when no direction u
in the dual unit ball B* has more than p k indices with <Z_i - x, u> >= r.
Centrality is decided by enumerating index sets T of size floor(p k) + 1
and testing whether

    S_T = {u in B* : <Z_i - x, u> >= r for all i in T}

is empty.  Both S_T and the set of central points are convex, and each is
searched with a deep-cut ellipsoid method driven by separation oracles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sampler import Dataset

MAX_BUCKETS = 24


class NormError(ValueError):
    pass


@dataclass(frozen=True)
class NormOracle:
    """Separation oracle for the dual unit ball B*.

    ``separation(w)`` returns None when w is in B*, otherwise a pair
    ``(a, b)`` with <a, u> <= b on B* and <a, w> > b.  ``R`` bounds the
    Euclidean radius of B* and ``rho`` is the radius of a Euclidean ball
    inside B*.  ``norm`` evaluates the primal norm when it is available.
    """

    name: str
    separation: Callable[[np.ndarray], tuple[np.ndarray, float] | None]
    R: Callable[[int], float]
    rho: Callable[[int], float]
    norm: Callable[[np.ndarray], float] | None = None


def _sep_l2(w):
    n = float(np.linalg.norm(w))
    return None if n <= 1.0 else (w / n, 1.0)


def _sep_box(w):
    j = int(np.argmax(np.abs(w)))
    if abs(w[j]) <= 1.0:
        return None
    a = np.zeros_like(w)
    a[j] = math.copysign(1.0, w[j])
    return a, 1.0


def _sep_cross(w):
    if float(np.sum(np.abs(w))) <= 1.0:
        return None
    return np.sign(w), 1.0


L2 = NormOracle("l2", _sep_l2, lambda d: 1.0, lambda d: 1.0, lambda v: float(np.linalg.norm(v)))
L1 = NormOracle("l1", _sep_box, lambda d: math.sqrt(d), lambda d: 1.0, lambda v: float(np.sum(np.abs(v))))
LINF = NormOracle("linf", _sep_cross, lambda d: 1.0, lambda d: 1.0 / math.sqrt(d), lambda v: float(np.max(np.abs(v))))

ORACLES = {"l2": L2, "l1": L1, "linf": LINF}


def get_oracle(name: str) -> NormOracle:
    try:
        return ORACLES[name]
    except KeyError:
        raise NormError(f"unknown norm {name!r}; choose from {sorted(ORACLES)}") from None


@dataclass
class CentralQuery:
    Z: np.ndarray
    r: float
    p: float = 0.1

    def __post_init__(self):
        self.Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        if self.Z.shape[0] < 1:
            raise NormError("need at least one bucket mean")
        if not self.r >= 0:
            raise NormError("r must be nonnegative")
        if not 0 <= self.p <= 1:
            raise NormError("p must lie in [0, 1]")

    @property
    def k(self) -> int:
        return self.Z.shape[0]

    @property
    def size(self) -> int:
        """Smallest violating set size, floor(p k) + 1."""
        return math.floor(self.p * self.k) + 1


@dataclass
class CentralResult:
    central: bool
    u: np.ndarray | None = None
    T: tuple[int, ...] | None = None


def bucket_means(data: Dataset | np.ndarray, k: int) -> np.ndarray:
    """Means of k contiguous buckets of n // k rows (remainder dropped)."""
    X = data.samples if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"too many buckets: k={k} > n={n}")
    m = n // k
    return X[: m * k].reshape(k, m, -1).mean(axis=1)


class _Ellipsoid:
    """{c + L v : |v| <= 1} with P = L L^T, deep cuts, interval arithmetic for d = 1."""

    def __init__(self, center: np.ndarray, radius: float):
        self.c = np.array(center, dtype=float)
        self.d = d = self.c.size
        self.P = radius**2 * np.eye(d)
        self.logvol = d * math.log(radius)  # log of the product of semiaxes
        self.empty = False

    def cut(self, a: np.ndarray, b: float) -> None:
        """Keep {u : <a, u> <= b}."""
        Pa = self.P @ a
        s2 = float(a @ Pa)
        if s2 <= 0:
            return
        s = math.sqrt(s2)
        alpha = (float(a @ self.c) - b) / s
        if alpha >= 1:
            self.empty = True
            return
        if alpha <= -1:
            return
        d = self.d
        if d == 1:
            lo, hi = self.c[0] - math.sqrt(self.P[0, 0]), self.c[0] + math.sqrt(self.P[0, 0])
            bound = b / a[0]
            if a[0] > 0:
                hi = min(hi, bound)
            else:
                lo = max(lo, bound)
            half = 0.5 * (hi - lo)
            self.c[0] = 0.5 * (lo + hi)
            self.P[0, 0] = half * half
            self.logvol = math.log(half) if half > 0 else -math.inf
            return
        alpha = max(alpha, -1.0 / d)  # shallower cuts do not shrink the ellipsoid
        tau = (1 + d * alpha) / (d + 1)
        sigma = 2 * (1 + d * alpha) / ((d + 1) * (1 + alpha))
        delta = d * d * (1 - alpha * alpha) / (d * d - 1)
        g = Pa / s
        self.c = self.c - tau * g
        self.P = delta * (self.P - sigma * np.outer(g, g))
        self.P = 0.5 * (self.P + self.P.T)
        self.logvol += 0.5 * (d * math.log(delta) + math.log1p(-sigma))


def _nonempty(V: np.ndarray, r: float, oracle: NormOracle, tol: float) -> np.ndarray | None:
    """A point of {u in B* : <v, u> >= r for every row v of V}, or None."""
    d = V.shape[1]
    E = _Ellipsoid(np.zeros(d), oracle.R(d))
    floor = d * math.log(tol * oracle.R(d))
    while not E.empty and E.logvol > floor:
        sep = oracle.separation(E.c)
        if sep is not None:
            E.cut(np.asarray(sep[0], dtype=float), float(sep[1]))
            continue
        vals = V @ E.c
        j = int(np.argmin(vals))
        if vals[j] >= r:
            return E.c.copy()
        E.cut(-V[j], -r)
    return None


def _candidates(q: CentralQuery, x: np.ndarray, oracle: NormOracle) -> np.ndarray:
    """Indices that can violate at radius r, farthest first.

    <Z_i - x, u> <= |Z_i - x| on B*, so indices within r never exceed r.
    """
    D = q.Z - x[None]
    if oracle.norm is None:
        return np.arange(q.k)
    dist = np.array([oracle.norm(v) for v in D])
    idx = np.nonzero(dist > q.r)[0]
    return idx[np.argsort(-dist[idx], kind="stable")]


def _guard(k: int) -> None:
    if k > MAX_BUCKETS:
        raise NormError(f"k={k} exceeds the subset enumeration guard of {MAX_BUCKETS}; use fewer buckets")


def is_central(q: CentralQuery, x, oracle: NormOracle = L2, tol: float = 1e-9) -> CentralResult:
    """Decide (r, p)-centrality of x; a non-central answer carries a witness (u, T)."""
    _guard(q.k)
    x = np.asarray(x, dtype=float).reshape(-1)
    size = q.size
    if size > q.k:
        return CentralResult(True)
    cand = _candidates(q, x, oracle)
    D = q.Z - x[None]
    for T in itertools.combinations(cand.tolist(), size):
        u = _nonempty(D[list(T)], q.r, oracle, tol)
        if u is not None:
            return CentralResult(False, u, tuple(sorted(T)))
    return CentralResult(True)


def gen_tst_value(Z, x, r: float, oracle: NormOracle = L2, tol: float = 1e-9) -> int:
    """max over u in B* of |{i : <Z_i - x, u> >= r}|.

    Sizes are scanned upward and only supersets of nonempty sets are
    extended, which is exact because S_T shrinks as T grows.
    """
    q = CentralQuery(Z, r)
    _guard(q.k)
    x = np.asarray(x, dtype=float).reshape(-1)
    D = q.Z - x[None]
    cand = sorted(_candidates(q, x, oracle).tolist())
    live = [(i,) for i in cand if _nonempty(D[[i]], r, oracle, tol) is not None]
    best = 1 if live else 0
    while live:
        nxt = set()
        for T in live:
            for i in cand:
                if i > T[-1]:
                    S = T + (i,)
                    if S not in nxt and _nonempty(D[list(S)], r, oracle, tol) is not None:
                        nxt.add(S)
        live = sorted(nxt)
        if live:
            best = len(live[0])
    return best


def enclosing_ball(Z: np.ndarray, iters: int = 200) -> tuple[np.ndarray, float]:
    """Approximately smallest Euclidean ball containing the rows of Z.

    Badoiu-Clarkson updates locate the center; the radius is then the exact
    farthest distance, so the ball always contains every point.
    """
    c = Z[0].astype(float).copy()
    for t in range(1, iters + 1):
        far = Z[int(np.argmax(np.linalg.norm(Z - c, axis=1)))]
        c = c + (far - c) / (t + 1)
    return c, float(np.max(np.linalg.norm(Z - c, axis=1)))


def find_central_point(q: CentralQuery, oracle: NormOracle = L2, tol: float = 1e-9, max_iter: int = 100_000):
    """Ellipsoid search for an (r, p)-central point; None when none is found.

    A witness (u, T) at a non-central x yields the cut
    <u, y> > min_{i in T} <Z_i, u> - r that every central y satisfies.
    The search gives up once the ellipsoid is smaller than a ball of
    Euclidean radius rho r / 100.
    """
    _guard(q.k)
    d = q.Z.shape[1]
    c, rad = enclosing_ball(q.Z)
    res = is_central(q, c, oracle, tol)
    if res.central:
        return c
    if q.r == 0:
        return None
    E = _Ellipsoid(c, rad + q.r / oracle.rho(d))
    floor = d * math.log(oracle.rho(d) * q.r / 100)
    for _ in range(max_iter):
        if E.empty or E.logvol <= floor:
            return None
        res = is_central(q, E.c, oracle, tol)
        if res.central:
            return E.c.copy()
        u = res.u
        E.cut(-u, q.r - float(np.min(q.Z[list(res.T)] @ u)))
    return None


def buckets_for_mean(delta: float, C: float = 3.0) -> int:
    if not 0 < delta < 1:
        raise NormError("delta must lie in (0, 1)")
    return max(1, math.ceil(C * math.log(1 / delta)))


@dataclass
class MeanResult:
    mu_hat: np.ndarray
    r: float
    k: int

    def as_dict(self) -> dict:
        return {"mu_hat": self.mu_hat.tolist(), "r": self.r, "k": self.k}


def estimate_mean_norm(
    data: Dataset | np.ndarray, delta: float, oracle: NormOracle = L2, p: float = 0.1, C: float = 3.0, tol: float = 1e-9
) -> MeanResult:
    """Central point of the bucket means at the smallest feasible radius.

    The radius starts at d max_{i,j} |Z_i - Z_j|_2 (scaled to the target
    norm) and halves while a central point can still be found.
    """
    X = data.samples if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))
    n, d = X.shape
    if not 2.0 ** (-n) < delta < 1:
        raise NormError("delta must lie in (2^-n, 1)")
    k = buckets_for_mean(delta, C)
    _guard(k)
    Z = bucket_means(X, k)
    spread = max(float(np.max(np.linalg.norm(Z - z, axis=1))) for z in Z)
    if spread == 0:
        return MeanResult(Z[0].copy(), 0.0, k)
    r = d * spread / oracle.rho(d)
    best = find_central_point(CentralQuery(Z, r, p), oracle, tol)
    if best is None:
        raise NormError("no central point at the initial radius")
    best_r = r
    while r > 1e-12 * spread:
        r /= 2
        x = find_central_point(CentralQuery(Z, r, p), oracle, tol)
        if x is None:
            break
        best, best_r = x, r
    return MeanResult(np.asarray(best, dtype=float), best_r, k)
