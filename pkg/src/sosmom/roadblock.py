"""Single-spike block mixtures: generator, two tests and Hermite moments.

Samples come in d blocks of m rows.  Under the planted case a hidden
x in {+-1/sqrt(d)}^d and signs s in {+-1}^d give block i the covariance
I + s_i lambda x x^T; under the null every row is standard Gaussian.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .sos import build_basis, compile_program

MAX_SUBSET_DIM = 16
MAX_INDEX_SPACE = 10**7
MAX_DP_WORK = 10**8


@dataclass
class BlockMixtureInstance:
    Y: np.ndarray  # (m d, d)
    label: str
    lam: float
    d: int
    m: int
    seed: int | None = None
    x: np.ndarray | None = None
    s: np.ndarray | None = None

    def block_moments(self) -> np.ndarray:
        """Empirical second moment of each block, shape (d, d, d)."""
        B = self.Y.reshape(self.d, self.m, self.d)
        return np.einsum("bji,bjk->bik", B, B) / self.m


def gen_block_mixture(d: int, m: int, lam: float, case: str, seed: int) -> BlockMixtureInstance:
    if d < 1 or m < 1:
        raise ValueError("d and m must be positive")
    if case not in ("null", "planted"):
        raise ValueError("case must be 'null' or 'planted'")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((d, m, d))
    if case == "null":
        return BlockMixtureInstance(G.reshape(m * d, d), "null", lam, d, m, seed)
    if not 0 <= lam < 1:
        raise ValueError(f"planted case needs 0 <= lambda < 1 (covariance I + s lambda x x^T), got {lam}")
    x = rng.choice(np.array([-1.0, 1.0]), size=d) / math.sqrt(d)
    s = rng.choice(np.array([-1.0, 1.0]), size=d)
    # (I + c x x^T)^{1/2} = I + (sqrt(1 + c) - 1) x x^T for unit x
    Y = np.empty_like(G)
    for i in range(d):
        root = np.eye(d) + (math.sqrt(1 + s[i] * lam) - 1) * np.outer(x, x)
        Y[i] = G[i] @ root
    return BlockMixtureInstance(Y.reshape(m * d, d), "planted", lam, d, m, seed, x, s)


def subset_spectral_test(inst: BlockMixtureInstance, lam: float, chunk: int = 4096) -> str:
    """Planted iff some S with |S| >= d/4 has lambda_max(sum_{i in S} (Sigma_i - I)) > lambda |S| / 2."""
    d = inst.d
    if d > MAX_SUBSET_DIM:
        raise ValueError(f"d={d} exceeds the subset guard of {MAX_SUBSET_DIM}")
    D = inst.block_moments() - np.eye(d)[None]
    masks = np.array([s for s in range(1, 2**d) if 4 * bin(s).count("1") >= d], dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(d)[None]) & 1).astype(float)
    for lo in range(0, len(masks), chunk):
        sel = bits[lo : lo + chunk]
        top = np.linalg.eigvalsh(np.einsum("si,ijk->sjk", sel, D))[:, -1]
        if np.any(top > lam * sel.sum(axis=1) / 2):
            return "planted"
    return "null"


def sos_spike_value(inst: BlockMixtureInstance, basis_mode: str = "partial", localize: bool = True):
    """max pE sum_i b_i <Sigma_i - I, u u^T>  s.t.  b_i^2 = b_i, |u|^2 = 1."""
    d = inst.d
    D = inst.block_moments() - np.eye(d)[None]
    B = build_basis(d, d, basis_mode)
    bs = [B.b(i) for i in range(d)]
    obj = sum((b * B.quad_form(Di) for b, Di in zip(bs[1:], D[1:])), bs[0] * B.quad_form(D[0]))
    prog = compile_program(obj, [B.sphere()] + B.idempotence(), [], B, bs if localize else ())
    pe = prog.solve()
    return pe.value, pe


def sos_spike_test(inst: BlockMixtureInstance, lam: float, **opts) -> str:
    """Planted iff the relaxation value reaches lambda d / 4."""
    value, pe = sos_spike_value(inst, **opts)
    if pe.status != "optimal":
        raise RuntimeError(f"spike program ended with status {pe.status}")
    return "planted" if value >= lam * inst.d / 4 else "null"


TESTS = {"subset": subset_spectral_test, "sos": sos_spike_test}


def accuracy(test: str, d: int, m: int, lam: float, case: str, trials: int, seed: int = 0) -> float:
    """Fraction of seeded trials labelled correctly."""
    fn = TESTS[test]
    ss = np.random.SeedSequence(seed)
    hits = 0
    for child in ss.spawn(trials):
        inst = gen_block_mixture(d, m, lam, case, int(child.generate_state(1)[0]))
        hits += fn(inst, lam) == case
    return hits / trials


# Hermite moments


@lru_cache(maxsize=None)
def double_factorial(n: int) -> int:
    """n!! with (-1)!! = 0!! = 1."""
    return 1 if n <= 0 else n * double_factorial(n - 2)


@dataclass(frozen=True)
class HermiteIndex:
    """Sparse multi-index: coordinate -> positive power."""

    alpha: tuple[tuple[int, int], ...]

    def __post_init__(self):
        for i, a in self.alpha:
            if a < 1:
                raise ValueError("stored powers must be >= 1")

    @classmethod
    def of(cls, alpha) -> "HermiteIndex":
        if isinstance(alpha, HermiteIndex):
            return alpha
        items = alpha.items() if isinstance(alpha, dict) else enumerate(alpha)
        return cls(tuple(sorted((int(i), int(a)) for i, a in items if a)))

    @property
    def degree(self) -> int:
        return sum(a for _, a in self.alpha)


def hermite_single_moment(alpha, lam: float, x) -> float:
    """E H_alpha(y) for y ~ N(0, I + lam x x^T)."""
    x = np.asarray(x, dtype=float)
    if abs(lam) * float(x @ x) > 1 + 1e-12:
        raise ValueError("need |lambda| |x|^2 <= 1")
    a = HermiteIndex.of(alpha)
    t = a.degree
    if t % 2:
        return 0.0
    mono = math.prod(x[i] ** p for i, p in a.alpha)
    return double_factorial(t - 1) * lam ** (t // 2) * mono


def _as_matrix(alpha, d: int, m: int) -> np.ndarray:
    A = np.asarray(alpha, dtype=np.int64)
    if A.shape != (m * d, d):
        raise ValueError(f"alpha must have shape ({m * d}, {d})")
    if np.any(A < 0):
        raise ValueError("alpha entries must be nonnegative")
    return A


def is_super_even(alpha, d: int, m: int) -> bool:
    A = _as_matrix(alpha, d, m)
    per_sample = A.sum(axis=1)
    per_block = per_sample.reshape(d, m).sum(axis=1)
    per_coord = A.sum(axis=0)
    return bool(np.all(per_block % 4 == 0) and np.all(per_sample % 2 == 0) and np.all(per_coord % 2 == 0))


def hermite_planted_moment(alpha, lam: float, d: int, m: int) -> float:
    """E_{x,s,y} H_alpha(y) for alpha an (m d) x d array of powers (sample, coordinate)."""
    A = _as_matrix(alpha, d, m)
    if not is_super_even(A, d, m):
        return 0.0
    t = int(A.sum())
    w = math.prod(double_factorial(int(a) - 1) for a in A.sum(axis=1))
    return (lam / d) ** (t // 2) * w


def _compositions(total: int, parts: int):
    """Nonnegative integer vectors of length ``parts`` summing to ``total``."""
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars + (total + parts - 1,):
            out.append(b - prev - 1)
            prev = b
        yield out


def _index_space(t: int, nvars: int) -> int:
    return math.comb(nvars + t, t)


def low_degree_norm_enumerate(t: int, lam: float, d: int, m: int) -> float:
    """Sum of (E H_alpha)^2 over |alpha| <= t by listing every index."""
    nvars = m * d * d
    if _index_space(t, nvars) > MAX_INDEX_SPACE:
        raise ValueError("index space exceeds 1e7; use smaller t, d or m")
    total = 0.0
    for deg in range(0, t + 1, 2):
        for comp in _compositions(deg, nvars):
            v = hermite_planted_moment(np.reshape(comp, (m * d, d)), lam, d, m)
            total += v * v
    return total


def low_degree_norm(t: int, lam: float, d: int, m: int) -> float:
    """Sum of (E H_alpha(y))^2 over |alpha| <= t under the planted law.

    Only super-even alpha contribute and the value of each depends on the
    per-sample degrees alone, so samples are processed one at a time
    with state (total degree, coordinate parity mask, block degree mod 4).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    nmask = 1 << d
    work = m * d * (t + 1) * nmask * 4 * (t // 2 + 1) * nmask
    if work > MAX_DP_WORK:
        raise ValueError("state space too large; use smaller t, d or m")
    # per-sample vectors grouped by (even degree, parity mask); weight ((deg-1)!!)^2 (lam/d)^deg
    cnt = np.zeros((t + 1, nmask))
    for deg in range(0, t + 1, 2):
        for comp in _compositions(deg, d):
            mask = sum(1 << i for i, c in enumerate(comp) if c % 2)
            cnt[deg, mask] += 1
    q = lam / d
    wt = np.array([double_factorial(g - 1) ** 2 * q**g if g % 2 == 0 else 0.0 for g in range(t + 1)])
    trans = cnt * wt[:, None]
    # state[deg, mask, block_mod4]
    state = np.zeros((t + 1, nmask, 4))
    state[0, 0, 0] = 1.0
    masks = np.arange(nmask)
    for block in range(d):
        for _ in range(m):
            new = np.zeros_like(state)
            for g in range(0, t + 1, 2):
                for mk in np.nonzero(trans[g])[0]:
                    w = trans[g, mk]
                    shifted = state[: t + 1 - g][:, masks ^ mk]
                    new[g:, :, :] += w * np.roll(shifted, g // 2 * 2, axis=2) if g % 4 else w * shifted
            state = new
        # close the block: keep only degree divisible by 4
        state[:, :, 1:] = 0.0
    return float(state[:, 0, 0].sum())
