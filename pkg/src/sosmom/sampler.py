"""Heavy-tailed sample generators, norm truncation and bucket summaries.

Every built-in generator is mean-zero with a known population covariance
and a known hypercontractivity constant L, defined by

    E<X,u>^8 <= L^2 (E<X,u>^2)^4,    E<X,u>^4 <= L (E<X,u>^2)^2.

Coordinates are independent before the optional linear transform, so L
comes from the one-dimensional moment ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

KINDS = ("gaussian", "product_t", "product_rademacher", "lognormal_product", "point_mass")

GAUSSIAN_KURT4 = 3.0
GAUSSIAN_KURT8 = 105.0


class SpecError(ValueError):
    """Raised for invalid distribution parameters."""


def t_moment(nu: float, p: int) -> float:
    """E|T|^p for a Student t with ``nu`` degrees of freedom, p even, p < nu."""
    if p >= nu:
        return math.inf
    k = p / 2
    return math.exp(
        k * math.log(nu) + gammaln(k + 0.5) + gammaln(nu / 2 - k) - 0.5 * math.log(math.pi) - gammaln(nu / 2)
    )


def lognormal_diff_moment(s: float, p: int) -> float:
    """E[(e^{sZ} - e^{sZ'})^p] for independent standard normals, p even."""
    # binomial expansion with E e^{jsZ} = e^{j^2 s^2 / 2}
    total = 0.0
    for j in range(p + 1):
        total += math.comb(p, j) * (-1) ** (p - j) * math.exp(0.5 * s * s * (j * j + (p - j) ** 2))
    return total


@dataclass(frozen=True)
class DistSpec:
    """Parameters of a sample generator.

    ``kind`` is one of ``gaussian``, ``product_t``, ``product_rademacher``,
    ``lognormal_product``, ``point_mass``.  Coordinates are scaled to unit
    variance before the transform, except for ``point_mass`` whose
    "covariance" is the second moment ``v v^T``.  Either a transform ``A``
    or a PSD ``target_cov`` (mapped to its square root) may be given.
    """

    kind: str
    dim: int
    nu: float | None = None
    point: tuple | None = None
    sigma_ln: float = 0.5
    transform: np.ndarray | None = field(default=None, compare=False)
    target_cov: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown distribution kind {self.kind!r}")
        if self.dim < 1:
            raise SpecError("dim must be positive")
        if self.kind == "product_t":
            if self.nu is None or not self.nu > 8:
                raise SpecError(f"product_t needs nu > 8 for eight finite moments, got {self.nu}")
        if self.kind == "point_mass":
            v = self.point if self.point is not None else (0.0,) * self.dim
            if len(v) != self.dim:
                raise SpecError("point_mass vector has the wrong length")
            object.__setattr__(self, "point", tuple(float(x) for x in v))
        if self.sigma_ln <= 0:
            raise SpecError("sigma_ln must be positive")
        if self.transform is not None and self.target_cov is not None:
            raise SpecError("give either transform or target_cov, not both")
        if self.target_cov is not None:
            T = np.asarray(self.target_cov, dtype=float)
            if T.shape != (self.dim, self.dim) or not np.allclose(T, T.T):
                raise SpecError("target_cov must be a symmetric dim x dim matrix")
            w, V = np.linalg.eigh(T)
            if w[0] < -1e-10 * max(1.0, abs(w[-1])):
                raise SpecError("target_cov is not positive semidefinite")
            object.__setattr__(self, "transform", (V * np.sqrt(np.clip(w, 0, None))) @ V.T)
            object.__setattr__(self, "target_cov", None)
        if self.transform is not None:
            A = np.asarray(self.transform, dtype=float)
            if A.shape != (self.dim, self.dim) or not np.all(np.isfinite(A)):
                raise SpecError("transform must be a finite dim x dim matrix")
            object.__setattr__(self, "transform", A)

    @property
    def A(self) -> np.ndarray:
        return np.eye(self.dim) if self.transform is None else self.transform

    def base_cov(self) -> np.ndarray:
        if self.kind == "point_mass":
            v = np.array(self.point)
            return np.outer(v, v)
        return np.eye(self.dim)

    def sigma(self) -> np.ndarray:
        """Population covariance A Cov0 A^T."""
        S = self.A @ self.base_cov() @ self.A.T
        return 0.5 * (S + S.T)

    def kurtosis(self) -> tuple[float, float]:
        """Normalized 4th and 8th moments of one coordinate."""
        if self.kind == "gaussian":
            return GAUSSIAN_KURT4, GAUSSIAN_KURT8
        if self.kind == "product_t":
            m2 = t_moment(self.nu, 2)
            return t_moment(self.nu, 4) / m2**2, t_moment(self.nu, 8) / m2**4
        if self.kind == "product_rademacher":
            return 1.0, 1.0
        if self.kind == "lognormal_product":
            m2 = lognormal_diff_moment(self.sigma_ln, 2)
            s = self.sigma_ln
            return lognormal_diff_moment(s, 4) / m2**2, lognormal_diff_moment(s, 8) / m2**4
        return 1.0, 1.0

    def hypercontractivity_L(self) -> float:
        """Constant L for the built-in family.

        For independent coordinates the worst direction is an axis when
        the coordinate moment ratios dominate the Gaussian ones, and the
        Gaussian limit otherwise, so L^2 = max(kappa_8, 105) and
        L >= max(kappa_4, 3).  A point mass is exactly 1.
        """
        if self.kind == "point_mass":
            return 1.0
        k4, k8 = self.kurtosis()
        return max(math.sqrt(max(k8, GAUSSIAN_KURT8)), max(k4, GAUSSIAN_KURT4))


@dataclass
class Dataset:
    samples: np.ndarray
    seed: int | None = None
    spec: DistSpec | None = None

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.size == 0:
            raise ValueError("dataset must have n >= 1 and d >= 1")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("dataset contains non-finite entries")

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


@dataclass
class BucketSummary:
    Z: np.ndarray  # (k, d, d)
    m: int
    alpha: float

    @property
    def k(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    def replace(self, i: int, Zi: np.ndarray) -> "BucketSummary":
        Z = self.Z.copy()
        Z[i] = Zi
        return BucketSummary(Z, self.m, self.alpha)


def _base_draw(spec: DistSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim
    if spec.kind == "gaussian":
        return rng.standard_normal((n, d))
    if spec.kind == "product_t":
        return rng.standard_t(spec.nu, size=(n, d)) / math.sqrt(t_moment(spec.nu, 2))
    if spec.kind == "product_rademacher":
        return rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    if spec.kind == "lognormal_product":
        s = spec.sigma_ln
        a = np.exp(s * rng.standard_normal((n, d)))
        b = np.exp(s * rng.standard_normal((n, d)))
        # (X - X')/sqrt(2) is symmetric; rescale to unit variance
        return (a - b) / math.sqrt(lognormal_diff_moment(s, 2))
    return np.tile(np.array(spec.point), (n, 1))


def sample_dist(spec: DistSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. rows from ``spec``; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = _base_draw(spec, n, rng)
    if spec.transform is not None:
        X = X @ spec.A.T
    return Dataset(X, seed=seed, spec=spec)


def truncate_samples(data: Dataset, alpha: float) -> Dataset:
    """Zero every row whose Euclidean norm exceeds ``alpha``."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if math.isinf(alpha):
        return Dataset(data.samples.copy(), data.seed, data.spec)
    X = data.samples
    keep = np.linalg.norm(X, axis=1) <= alpha
    return Dataset(X * keep[:, None], data.seed, data.spec)


def make_buckets(data: Dataset, k: int, alpha: float = math.inf) -> BucketSummary:
    """Per-bucket second moments of the truncated samples.

    Buckets are consecutive blocks of ``n // k`` rows; the remainder is
    dropped from the tail.
    """
    if k < 1:
        raise ValueError("k must be positive")
    if k > data.n:
        raise ValueError(f"too many buckets: k={k} > n={data.n}")
    m = data.n // k
    V = truncate_samples(data, alpha).samples[: m * k].reshape(k, m, data.d)
    Z = np.einsum("kmi,kmj->kij", V, V) / m
    return BucketSummary(0.5 * (Z + Z.transpose(0, 2, 1)), m, alpha)


def compute_truncation_alpha(trSigma: float, opNorm: float, L: float, n: int, k: int) -> float:
    """(L opNorm n / (trSigma sqrt(k)))^(1/4) sqrt(trSigma)."""
    for name, v in (("trSigma", trSigma), ("opNorm", opNorm), ("L", L), ("n", n), ("k", k)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return (L * opNorm * n / (trSigma * math.sqrt(k))) ** 0.25 * math.sqrt(trSigma)
