"""Degree-4 pseudoexpectation programs over variables (u_1..u_d, b_1..b_k).

A pseudoexpectation is represented by its moment matrix M indexed by a
monomial basis, with M[p, q] = pE[p q].  Programs of the form

    maximize pE[objective]
    s.t.     pE[g q] = 0      for each equality g and basis monomial q
             pE[h]  >= 0      for each inequality h
             pE[1]  = 1,  M PSD

are compiled into block SDPs for :mod:`sosmom.sdp`.  An equality that is
itself a combination of basis monomials (the sphere ``|u|^2 - 1`` is the
common case) forces its coefficient vector into the kernel of M; the
compiler writes M = T M' T^T over the orthogonal complement so the
reduced program keeps a strictly feasible interior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .sdp import SDPProblem, SDPSolution, solve_sdp

Monomial = tuple[int, ...]


class CompileError(ValueError):
    pass


class MissingMomentError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.monomial = name

    def __str__(self):
        return f"moment {self.monomial} is not available in this pseudoexpectation"


def _add(e1: Monomial, e2: Monomial) -> Monomial:
    return tuple(a + b for a, b in zip(e1, e2))


class Polynomial:
    """Sparse polynomial: a dict from exponent tuples to coefficients."""

    __slots__ = ("nvars", "terms")

    def __init__(self, terms: dict | None = None, nvars: int | None = None):
        terms = dict(terms or {})
        if nvars is None:
            if not terms:
                raise ValueError("nvars required for an empty polynomial")
            nvars = len(next(iter(terms)))
        self.nvars = nvars
        self.terms = {tuple(e): float(c) for e, c in terms.items() if c != 0.0}
        for e in self.terms:
            if len(e) != nvars:
                raise ValueError(f"exponent {e} does not have {nvars} entries")

    @classmethod
    def constant(cls, c: float, nvars: int) -> "Polynomial":
        return cls({(0,) * nvars: c}, nvars)

    @classmethod
    def var(cls, i: int, nvars: int) -> "Polynomial":
        e = [0] * nvars
        e[i] = 1
        return cls({tuple(e): 1.0}, nvars)

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError("polynomials over different variable sets")
            return other
        return Polynomial.constant(float(other), self.nvars)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return Polynomial(out, self.nvars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({e: -c for e, c in self.terms.items()}, self.nvars)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, Polynomial):
            c = float(other)
            return Polynomial({e: c * v for e, v in self.terms.items()}, self.nvars)
        other = self._coerce(other)
        out: dict = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = _add(e1, e2)
                out[e] = out.get(e, 0.0) + c1 * c2
        return Polynomial(out, self.nvars)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = Polynomial.constant(1.0, self.nvars)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __repr__(self):
        return f"Polynomial({self.terms!r})"

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def key(self) -> tuple:
        return (self.nvars, tuple(sorted(self.terms.items())))


@dataclass(frozen=True)
class MonomialBasis:
    """Ordered monomial basis over ``d`` continuous and ``k`` boolean variables."""

    d: int
    k: int
    mode: str
    entries: tuple[Monomial, ...]
    names: tuple[str, ...]
    index: dict = field(compare=False, hash=False, repr=False)

    @property
    def nvars(self) -> int:
        return self.d + self.k

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def u(self, i: int) -> Polynomial:
        return Polynomial.var(i, self.nvars)

    def b(self, j: int) -> Polynomial:
        return Polynomial.var(self.d + j, self.nvars)

    def one(self) -> Polynomial:
        return Polynomial.constant(1.0, self.nvars)

    def name(self, e: Monomial) -> str:
        parts = []
        for v, p in zip(self.names, e):
            if p == 1:
                parts.append(v)
            elif p > 1:
                parts.append(f"{v}^{p}")
        return "*".join(parts) or "1"

    def quad_form(self, A: np.ndarray) -> Polynomial:
        """The polynomial u^T A u."""
        A = np.asarray(A, dtype=float)
        terms: dict = {}
        for a in range(self.d):
            for c in range(a, self.d):
                coef = A[a, a] if a == c else A[a, c] + A[c, a]
                if coef != 0.0:
                    e = [0] * self.nvars
                    e[a] += 1
                    e[c] += 1
                    terms[tuple(e)] = coef
        return Polynomial(terms, self.nvars)

    def linear_form(self, w) -> Polynomial:
        """The polynomial <w, u>."""
        terms = {}
        for a, c in enumerate(np.asarray(w, dtype=float)):
            if c != 0.0:
                e = [0] * self.nvars
                e[a] = 1
                terms[tuple(e)] = c
        return Polynomial(terms, self.nvars)

    def sphere(self) -> Polynomial:
        """|u|^2 - 1."""
        return self.quad_form(np.eye(self.d)) - 1.0

    def idempotence(self) -> list[Polynomial]:
        """b_j^2 - b_j for every boolean variable."""
        return [self.b(j) * self.b(j) - self.b(j) for j in range(self.k)]


def build_basis(d: int, k: int = 0, mode: str = "partial", prefix: str = "u") -> MonomialBasis:
    """Monomial basis of degree at most 2.

    ``partial`` keeps ``1, u_i, b_j, u_i u_l``; ``full`` keeps every
    monomial of degree at most 2 in ``(u, b)``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if mode not in ("partial", "full"):
        raise ValueError(f"unknown basis mode {mode!r}")
    nv = d + k

    def unit(*idx):
        e = [0] * nv
        for i in idx:
            e[i] += 1
        return tuple(e)

    entries = [unit()]
    entries += [unit(i) for i in range(nv)]
    if mode == "partial":
        entries += [unit(i, l) for i in range(d) for l in range(i, d)]
    else:
        entries += [unit(i, l) for i in range(nv) for l in range(i, nv)]
    names = tuple(f"{prefix}{i + 1}" for i in range(d)) + tuple(f"b{j + 1}" for j in range(k))
    return MonomialBasis(d, k, mode, tuple(entries), names, {e: i for i, e in enumerate(entries)})


@dataclass(frozen=True)
class PseudoExpectation:
    """Solved degree-4 pseudoexpectation."""

    basis: MonomialBasis
    moments: dict
    M: np.ndarray
    status: str
    gap: float
    value: float
    residual: float

    def __call__(self, p: Polynomial) -> float:
        return pe_eval(self, p)

    def first_moment(self) -> np.ndarray:
        """(pE[u_1], ..., pE[u_d])."""
        return self.M[0, 1 : 1 + self.basis.d].copy()

    def min_eig(self) -> float:
        return float(np.linalg.eigvalsh(self.M)[0])


def pe_eval(pe: PseudoExpectation, p: Polynomial) -> float:
    """Evaluate pE[p] from the stored moments."""
    total = 0.0
    for e, c in p.terms.items():
        try:
            total += c * pe.moments[e]
        except KeyError:
            raise MissingMomentError(pe.basis.name(e)) from None
    return float(total)


def pe_extract_uu(pe: PseudoExpectation) -> np.ndarray:
    """d x d matrix of pE[u_i u_j]."""
    d = pe.basis.d
    G = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            e = [0] * pe.basis.nvars
            e[i] += 1
            e[j] += 1
            key = tuple(e)
            if key not in pe.moments:
                raise MissingMomentError(pe.basis.name(key))
            G[i, j] = G[j, i] = pe.moments[key]
    return G


# ---------------------------------------------------------------------------
# compilation


class _Skeleton:
    """Constraint rows that depend only on the basis and the equalities."""

    def __init__(self, basis: MonomialBasis, equalities: list[Polynomial]):
        self.basis = basis
        N = len(basis)
        positions: dict = {}
        for p in range(N):
            for q in range(p, N):
                positions.setdefault(_add(basis[p], basis[q]), []).append((p, q))
        self.positions = positions
        self.canonical = {mono: pos[0] for mono, pos in positions.items()}

        kernel = []
        rows: list[list] = []
        rhs: list[float] = []
        for g in equalities:
            self.check(g, "equality")
            if all(e in basis.index for e in g.terms):
                v = np.zeros(N)
                for e, c in g.terms.items():
                    v[basis.index[e]] = c
                kernel.append(v)
                continue
            for q in basis.entries:
                shifted = {_add(e, q): c for e, c in g.terms.items()}
                if all(e in positions for e in shifted):
                    rows.append(self.positions_of(shifted))
                    rhs.append(0.0)
        if kernel:
            self.T = scipy.linalg.null_space(np.array(kernel))
        else:
            self.T = np.eye(N)
        for mono, pos in positions.items():
            p0, q0 = pos[0]
            for p, q in pos[1:]:
                rows.append([(p, q, 1.0), (p0, q0, -1.0)])
                rhs.append(0.0)
        rows.append([(0, 0, 1.0)])
        rhs.append(1.0)
        self.A = self.transform(rows)
        self.a = np.array(rhs)

    def check(self, poly: Polynomial, what: str) -> None:
        if poly.nvars != self.basis.nvars:
            raise CompileError(f"{what} has {poly.nvars} variables, basis has {self.basis.nvars}")
        for e in poly.terms:
            if e not in self.positions:
                raise CompileError(
                    f"{what} term {self.basis.name(e)} is not representable by {self.basis.mode} basis products"
                )

    def positions_of(self, terms: dict) -> list:
        return [(*self.canonical[e], c) for e, c in terms.items()]

    def transform(self, rows: list) -> np.ndarray:
        N = len(self.basis)
        F = np.zeros((len(rows), N, N))
        for r, row in enumerate(rows):
            for p, q, c in row:
                if p == q:
                    F[r, p, p] += c
                else:
                    F[r, p, q] += 0.5 * c
                    F[r, q, p] += 0.5 * c
        T = self.T
        return np.einsum("ia,rij,jb->rab", T, F, T, optimize=True)


_SKELETONS: dict = {}


def _skeleton(basis: MonomialBasis, equalities: list[Polynomial]) -> _Skeleton:
    key = (basis.d, basis.k, basis.mode, tuple(g.key() for g in equalities))
    sk = _SKELETONS.get(key)
    if sk is None:
        if len(_SKELETONS) > 64:
            _SKELETONS.clear()
        sk = _SKELETONS[key] = _Skeleton(basis, equalities)
    return sk


@dataclass
class CompiledProgram:
    """An SDP together with the map back to the moment matrix."""

    problem: SDPProblem
    basis: MonomialBasis
    T: np.ndarray
    positions: dict = field(repr=False)

    def moment_matrix(self, sol: SDPSolution) -> np.ndarray:
        M = self.T @ sol.X[0] @ self.T.T
        return 0.5 * (M + M.T)

    def solve(self, **opts) -> PseudoExpectation:
        sol = solve_sdp(self.problem, **opts)
        M = self.moment_matrix(sol)
        moments = {mono: float(np.mean([M[p, q] for p, q in pos])) for mono, pos in self.positions.items()}
        return PseudoExpectation(
            basis=self.basis,
            moments=moments,
            M=M,
            status=sol.status,
            gap=sol.gap,
            value=sol.objective,
            residual=sol.primal_residual,
        )


def compile_program(
    objective: Polynomial,
    equalities: list[Polynomial],
    inequalities: list[Polynomial],
    basis: MonomialBasis,
    localizers: list[Polynomial] = (),
) -> CompiledProgram:
    """Compile ``max pE[objective]`` under the given constraints.

    Each inequality ``h >= 0`` is imposed as ``pE[h] - s = 0`` with its own
    nonnegative scalar slack ``s``.  Each localizer ``l`` adds a PSD block
    ``[pE[l p q]]`` over ``p, q`` in ``{1, u_1, .., u_d}``; for an idempotent
    ``l = b_j`` this is the statement ``pE[b_j^2 q^2] >= 0``, which the
    partial basis cannot express on its own.
    """
    sk = _skeleton(basis, list(equalities))
    sk.check(objective, "objective")
    for h in inequalities:
        sk.check(h, "inequality")
    sub = [basis.one()] + [basis.u(i) for i in range(basis.d)]
    pairs = [(p, q) for p in range(len(sub)) for q in range(p, len(sub))]
    loc_rows = []
    for ell in localizers:
        for p, q in pairs:
            poly = ell * sub[p] * sub[q]
            sk.check(poly, "localizer")
            loc_rows.append([(pp, qq, -c) for pp, qq, c in sk.positions_of(poly.terms)])

    Np = sk.T.shape[1]
    C = sk.transform([sk.positions_of(objective.terms)])[0]
    rows = [sk.A]
    if inequalities:
        rows.append(sk.transform([sk.positions_of(h.terms) for h in inequalities]))
    if loc_rows:
        rows.append(sk.transform(loc_rows))
    A0 = np.concatenate(rows, axis=0)
    m = A0.shape[0]
    m0 = sk.A.shape[0]
    nI = len(inequalities)
    blocks = [Np]
    A = [A0]
    Cs = [C]
    for j in range(nI):
        s = np.zeros((m, 1, 1))
        s[m0 + j, 0, 0] = -1.0
        blocks.append(1)
        A.append(s)
        Cs.append(np.zeros((1, 1)))
    ns = len(sub)
    for li in range(len(localizers)):
        L = np.zeros((m, ns, ns))
        for t, (p, q) in enumerate(pairs):
            r = m0 + nI + li * len(pairs) + t
            if p == q:
                L[r, p, p] = 1.0
            else:
                L[r, p, q] = L[r, q, p] = 0.5
        blocks.append(ns)
        A.append(L)
        Cs.append(np.zeros((ns, ns)))
    a = np.concatenate([sk.a, np.zeros(m - m0)])
    problem = SDPProblem(blocks, Cs, A, a, "maximize")
    return CompiledProgram(problem, basis, sk.T, sk.positions)


def sos_bernstein_bound(R: float, sigma: float, k: int, d: int, r: int = 1) -> float:
    """Right-hand side of the degree-r SoS matrix Bernstein bound."""
    L = math.log(2.0) + r * math.log(d)
    return (2.0 * L / 3.0) * R + 2.0 * math.sqrt(2.0 * k * L) * sigma


def max_pe_quadform(mats, basis: MonomialBasis | None = None, **opts) -> tuple[float, PseudoExpectation]:
    """Maximize pE sum_i <u, M_i u> over pseudoexpectations on the sphere."""
    mats = [np.asarray(M, dtype=float) for M in mats]
    if not mats:
        raise ValueError("at least one matrix is required")
    d = mats[0].shape[0]
    if basis is None:
        basis = build_basis(d, 0, "partial")
    if basis.d != d:
        raise ValueError(f"matrices are {d}x{d} but the basis has d={basis.d}")
    total = np.sum(mats, axis=0)
    prog = compile_program(basis.quad_form(total), [basis.sphere()], [], basis)
    pe = prog.solve(**opts)
    if pe.status != "optimal":
        raise SolverFailure(pe.status, pe)
    return pe.value, pe


class SolverFailure(RuntimeError):
    def __init__(self, status: str, pe: PseudoExpectation | None = None):
        super().__init__(f"SDP solver finished with status {status}")
        self.status = status
        self.pe = pe

