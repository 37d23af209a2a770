"""Dense primal-dual interior-point solver for block-diagonal SDPs.

Problems are stored in the form

    maximize    sum_j <C_j, X_j>
    subject to  sum_j <A_ij, X_j> = a_i,   i = 1..m
                X_j PSD

where blocks of size 1 are nonnegative scalars.  Internally all size-1
blocks are gathered into a single diagonal (LP) part, the problem is
turned into a minimization, and solved with an infeasible-start
path-following method using the HKM search direction and a Mehrotra
predictor-corrector step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

log = logging.getLogger(__name__)

STATUSES = ("optimal", "max_iter", "infeasible_suspected", "numerical_failure")


class SDPStructureError(ValueError):
    """Raised when block dimensions or constraint shapes are inconsistent."""


@dataclass
class SDPProblem:
    """Block-diagonal SDP in equality standard form.

    Attributes
    ----------
    blocks : list of int
        Block sizes.
    C : list of ndarray
        Objective matrix per block, each ``(n_j, n_j)``.
    A : list of ndarray
        Constraint matrices per block, each ``(m, n_j, n_j)``; ``A[j][i]``
        is the block-``j`` part of constraint ``i``.
    a : ndarray
        Right-hand side, shape ``(m,)``.
    sense : str
        ``"maximize"`` or ``"minimize"``.
    """

    blocks: list[int]
    C: list[np.ndarray]
    A: list[np.ndarray]
    a: np.ndarray
    sense: str = "maximize"

    def __post_init__(self):
        self.blocks = [int(b) for b in self.blocks]
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        self.C = [np.asarray(c, dtype=float) for c in self.C]
        self.A = [np.asarray(x, dtype=float) for x in self.A]
        self.validate()

    @property
    def m(self) -> int:
        return self.a.shape[0]

    def validate(self) -> None:
        if self.sense not in ("maximize", "minimize"):
            raise SDPStructureError(f"unknown sense {self.sense!r}")
        nb = len(self.blocks)
        if len(self.C) != nb or len(self.A) != nb:
            raise SDPStructureError(
                f"{nb} blocks but {len(self.C)} objective and {len(self.A)} constraint blocks"
            )
        for j, n in enumerate(self.blocks):
            if n < 1:
                raise SDPStructureError(f"block {j} has size {n}")
            if self.C[j].shape != (n, n):
                raise SDPStructureError(f"objective block {j} has shape {self.C[j].shape}, expected {(n, n)}")
            if self.A[j].shape != (self.m, n, n):
                raise SDPStructureError(
                    f"constraint block {j} has shape {self.A[j].shape}, expected {(self.m, n, n)}"
                )
            if n > 1 and np.max(np.abs(self.C[j] - self.C[j].T)) > 1e-12:
                raise SDPStructureError(f"objective block {j} is not symmetric")
            if n > 1 and self.m and np.max(np.abs(self.A[j] - self.A[j].transpose(0, 2, 1))) > 1e-12:
                raise SDPStructureError(f"constraint block {j} is not symmetric")

    def primal_value(self, X: list[np.ndarray]) -> float:
        return float(sum(np.vdot(c, x) for c, x in zip(self.C, X)))

    def apply(self, X: list[np.ndarray]) -> np.ndarray:
        """Evaluate the constraint map A(X)."""
        out = np.zeros(self.m)
        for Aj, Xj in zip(self.A, X):
            out += Aj.reshape(self.m, Aj.shape[1] * Aj.shape[2]) @ Xj.ravel()
        return out

    def permuted(self, perm) -> "SDPProblem":
        """Same problem with the constraints reordered."""
        perm = np.asarray(perm)
        return SDPProblem(self.blocks, self.C, [Aj[perm] for Aj in self.A], self.a[perm], self.sense)


@dataclass
class SDPSolution:
    """Primal/dual solution.

    ``objective`` is the primal value in the problem's own sense and
    ``dual_objective`` the matching bound from the dual iterate.
    """

    X: list[np.ndarray]
    y: np.ndarray
    S: list[np.ndarray]
    objective: float
    dual_objective: float
    status: str
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    history: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# internal representation


def _sym(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


class _Internal:
    """Minimization form with equal-size blocks stacked into groups.

    Size-1 blocks form one group, so the LP part of a problem is handled
    by the same batched code as the dense blocks.
    """

    def __init__(self, prob: SDPProblem, rows: np.ndarray, scale: np.ndarray):
        sgn = -1.0 if prob.sense == "maximize" else 1.0
        self.m = m = len(rows)
        self.groups: list[list[int]] = []
        for n in sorted(set(prob.blocks), reverse=True):
            self.groups.append([j for j, b in enumerate(prob.blocks) if b == n])
        self.sizes = [prob.blocks[g[0]] for g in self.groups]
        self.C = [sgn * np.stack([prob.C[j] for j in g]) for g in self.groups]
        self.A = [
            np.stack([prob.A[j][rows] for j in g], axis=1) * scale[:, None, None, None]
            for g in self.groups
        ]
        self.Af = [Ag.reshape(m, -1) for Ag in self.A]
        self.b = prob.a[rows] * scale
        self.ntot = sum(prob.blocks)

    def eye(self, tau):
        return [tau * np.broadcast_to(np.eye(n), (len(g), n, n)).copy() for g, n in zip(self.groups, self.sizes)]

    def apply(self, X):
        out = np.zeros(self.m)
        for Af, Xg in zip(self.Af, X):
            out += Af @ Xg.ravel()
        return out

    def adjoint(self, y):
        return [(y @ Af).reshape(C.shape) for Af, C in zip(self.Af, self.C)]

    def schur(self, X, Sinv):
        m = self.m
        M = np.zeros((m, m))
        for Ag, Af, Xg, Si in zip(self.A, self.Af, X, Sinv):
            B = Xg[None] @ Ag @ Si[None]
            M += Af @ np.swapaxes(B, -1, -2).reshape(m, -1).T
        return _sym(M)


def _inner(X, S):
    return float(sum(np.vdot(x, s) for x, s in zip(X, S)))


def _select_rows(prob: SDPProblem, tol: float = 1e-10):
    """Normalize constraint rows and drop numerically dependent ones.

    Returns the kept row indices, their scale factors, and whether the
    dropped rows are consistent with the kept ones.
    """
    m = prob.m
    if m == 0:
        return np.arange(0), np.ones(0), True
    cols = []
    for Aj in prob.A:
        n = Aj.shape[1]
        iu = np.triu_indices(n)
        w = np.where(iu[0] == iu[1], 1.0, np.sqrt(2.0))
        cols.append(Aj[:, iu[0], iu[1]] * w)
    F = np.concatenate(cols, axis=1)
    norms = np.linalg.norm(F, axis=1)
    zero = norms <= tol
    if np.any(zero & (np.abs(prob.a) > 1e-9)):
        return np.arange(0), np.ones(0), False
    nz = np.flatnonzero(~zero)
    if len(nz) == 0:
        return nz, np.ones(0), True
    Fn = F[nz] / norms[nz, None]
    _, R, piv = scipy.linalg.qr(Fn.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag[0], 1.0)))
    keep = np.sort(nz[piv[:rank]])
    consistent = True
    if rank < len(nz):
        dropped = np.setdiff1d(nz, keep)
        coef, *_ = np.linalg.lstsq(F[keep].T, F[dropped].T, rcond=None)
        pred = coef.T @ prob.a[keep]
        if np.max(np.abs(pred - prob.a[dropped])) > 1e-7 * (1 + np.max(np.abs(prob.a))):
            consistent = False
    return keep, 1.0 / norms[keep], consistent


def _factor(M):
    """Cholesky of the Schur matrix, regularized if it is barely singular."""
    try:
        return scipy.linalg.cho_factor(M, lower=True)
    except np.linalg.LinAlgError:
        pass
    scale = max(float(np.max(np.abs(np.diag(M)))), 1e-300)
    for eps in (1e-14, 1e-12, 1e-10):
        try:
            return scipy.linalg.cho_factor(M + eps * scale * np.eye(len(M)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("Schur complement is not positive definite")


def _max_step(X, dX):
    """Largest alpha with X + alpha dX PSD in every block."""
    amax = np.inf
    for Xg, dg in zip(X, dX):
        if Xg.shape[-1] == 1:
            x, dx = Xg[:, 0, 0], dg[:, 0, 0]
            neg = dx < 0
            if np.any(neg):
                amax = min(amax, float(np.min(-x[neg] / dx[neg])))
            continue
        try:
            Li = np.linalg.inv(np.linalg.cholesky(Xg))
            lam = float(np.min(np.linalg.eigvalsh(_sym(Li @ dg @ np.swapaxes(Li, -1, -2)))[:, 0]))
        except np.linalg.LinAlgError:
            w, V = np.linalg.eigh(Xg)
            w = np.maximum(w, 1e-16 * np.max(np.abs(w), axis=-1, keepdims=True) + 1e-300)
            Wi = V / np.sqrt(w)[:, None, :]
            lam = float(np.min(np.linalg.eigvalsh(_sym(np.swapaxes(Wi, -1, -2) @ dg @ Wi))[:, 0]))
        if lam < 0:
            amax = min(amax, -1.0 / lam)
    return amax


def _unconstrained(problem: SDPProblem) -> SDPSolution:
    """No constraints: X = 0 is optimal iff every objective block points away from the cone."""
    sgn = 1.0 if problem.sense == "maximize" else -1.0
    bounded = all(np.linalg.eigvalsh(sgn * c)[-1] <= 0 for c in problem.C)
    X = [np.zeros((n, n)) for n in problem.blocks]
    S = [-sgn * c for c in problem.C]
    return SDPSolution(
        X=X, y=np.zeros(0), S=S, objective=0.0, dual_objective=0.0,
        status="optimal" if bounded else "infeasible_suspected",
        gap=0.0, primal_residual=0.0, dual_residual=0.0, iterations=0,
    )


def solve_sdp(
    problem: SDPProblem,
    gap_tol: float = 1e-8,
    feas_tol: float = 1e-9,
    max_iter: int = 200,
    verbose: bool = False,
    record_history: bool = False,
) -> SDPSolution:
    """Solve ``problem`` with a Mehrotra predictor-corrector HKM method.

    Parameters
    ----------
    problem : SDPProblem
    gap_tol : float
        Target relative duality gap.
    feas_tol : float
        Target relative primal and dual residuals.
    max_iter : int
    verbose : bool
        Log one line per iteration at INFO level.
    record_history : bool
        Keep per-iteration objectives and residuals in ``history``.

    Returns
    -------
    SDPSolution
    """
    problem.validate()
    if problem.m == 0:
        return _unconstrained(problem)
    keep, scale, consistent = _select_rows(problem)
    P = _Internal(problem, keep, scale)
    m = P.m

    anorm = np.max(np.abs(problem.a)) if problem.m else 0.0
    cnorm = max([np.linalg.norm(c) for c in problem.C] + [0.0])
    tau = 1.0 + anorm + cnorm
    X = P.eye(tau)
    S = P.eye(tau)
    y = np.zeros(m)
    eyes = P.eye(1.0)
    gram = scipy.linalg.cho_factor(sum(Af @ Af.T for Af in P.Af) + 1e-14 * np.eye(m), lower=True)

    bnorm = 1.0 + (np.max(np.abs(P.b)) if m else 0.0)
    cn = 1.0 + max(np.max(np.abs(c)) for c in P.C)

    history: list[dict] = []
    status = "max_iter"
    worse_streak = 0
    prev_gap = np.inf
    pinf = dinf = rel_gap = np.inf
    it = 0
    fallback = None
    cgaps: list[float] = []

    def objectives():
        return _inner(P.C, X), float(P.b @ y)

    if not consistent:
        status = "infeasible_suspected"

    while consistent:
        ATy = P.adjoint(y)
        Rd = [c - s - t for c, s, t in zip(P.C, S, ATy)]
        rp = P.b - P.apply(X)
        mu = _inner(X, S) / P.ntot
        pobj, dobj = objectives()
        pinf = (np.max(np.abs(rp)) if m else 0.0) / bnorm
        dinf = max(np.max(np.abs(r)) for r in Rd) / cn
        denom = 1.0 + abs(pobj) + abs(dobj)
        rel_gap = abs(pobj - dobj) / denom
        cgap = mu * P.ntot / denom
        loose = max(rel_gap, pinf, dinf) <= 1e-6 and cgap <= 1e-4
        if loose and (fallback is None or cgap < fallback[0]):
            fallback = (cgap, [x.copy() for x in X], [x.copy() for x in S], y.copy(), rel_gap, pinf, dinf, it)
        if record_history:
            history.append(dict(iteration=it, primal=pobj, dual=dobj, pinf=pinf, dinf=dinf, mu=mu))
        if verbose:
            log.info("it %3d  p %.9e  d %.9e  pinf %.2e  dinf %.2e  mu %.2e", it, pobj, dobj, pinf, dinf, mu)
        if max(rel_gap, cgap) <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            status = "optimal"
            break
        if it >= max_iter:
            break
        cgaps.append(cgap)
        if fallback is not None and len(cgaps) > 10 and cgaps[-1] > 0.5 * cgaps[-11]:
            # stagnating after the loose tolerances were met; stop early
            break
        measure = max(rel_gap, cgap, pinf, dinf)
        worse_streak = worse_streak + 1 if measure > prev_gap else 0
        prev_gap = measure
        if worse_streak >= 30:
            status = "infeasible_suspected"
            break

        try:
            Sinv = [_sym(np.linalg.inv(s)) for s in S]
            cho = _factor(P.schur(X, Sinv))
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("schur factorization failed: %s", exc)
            status = "numerical_failure"
            break
        XRdSi = P.apply([_sym(x @ r @ si) for x, r, si in zip(X, Rd, Sinv)])

        def direction(Rc):
            rhs = rp - P.apply([_sym(rc @ si) for rc, si in zip(Rc, Sinv)]) + XRdSi
            dy = scipy.linalg.cho_solve(cho, rhs)
            dS = [_sym(r - t) for r, t in zip(Rd, P.adjoint(dy))]
            dX = [_sym((rc - x @ ds) @ si) for rc, x, ds, si in zip(Rc, X, dS, Sinv)]
            # the Schur system loses accuracy near degenerate optima; put the
            # primal step back on A(dX) = rp with a least-norm correction
            fix = P.adjoint(scipy.linalg.cho_solve(gram, rp - P.apply(dX)))
            dX = [d + f for d, f in zip(dX, fix)]
            return dX, dy, dS

        try:
            # predictor
            XS = [x @ s for x, s in zip(X, S)]
            dXa, _, dSa = direction([-t for t in XS])
            ap = min(1.0, _max_step(X, dXa))
            ad = min(1.0, _max_step(S, dSa))
            mu_aff = _inner([x + ap * d for x, d in zip(X, dXa)], [s + ad * d for s, d in zip(S, dSa)]) / P.ntot
            sigma = min(1.0, (max(mu_aff, 0.0) / mu) ** 3) if mu > 0 else 0.0

            # corrector
            Rc = [sigma * mu * e - t - dx @ ds for e, t, dx, ds in zip(eyes, XS, dXa, dSa)]
            dX, dy, dS = direction(Rc)
            ap = min(1.0, 0.98 * _max_step(X, dX))
            ad = min(1.0, 0.98 * _max_step(S, dS))
            if min(ap, ad) < 0.05:
                # corrector stalled: try a plain recentering step instead
                cX, cy, cS = direction([0.8 * mu * e - t for e, t in zip(eyes, XS)])
                cp = min(1.0, 0.98 * _max_step(X, cX))
                cd = min(1.0, 0.98 * _max_step(S, cS))
                if min(cp, cd) > min(ap, ad):
                    dX, dy, dS, ap, ad = cX, cy, cS, cp, cd
        except (np.linalg.LinAlgError, ValueError) as exc:
            log.debug("step computation failed: %s", exc)
            status = "numerical_failure"
            break
        if not (np.isfinite(ap) and np.isfinite(ad)) or max(ap, ad) < 1e-12:
            log.debug("step length collapsed: %g %g", ap, ad)
            status = "numerical_failure"
            break
        X = [_sym(x + ap * d) for x, d in zip(X, dX)]
        S = [_sym(s + ad * d) for s, d in zip(S, dS)]
        y = y + ad * dy
        it += 1

    if status != "optimal" and fallback is not None:
        # the last iterates degraded (typically on programs without a strictly
        # feasible point); report the best iterate that met the tolerances
        _, X, S, y, rel_gap, pinf, dinf, _ = fallback
        status = "optimal"
    pobj, dobj = objectives()

    sgn = -1.0 if problem.sense == "maximize" else 1.0
    Xout: list = [None] * len(problem.blocks)
    Sout: list = [None] * len(problem.blocks)
    for g, Xg, Sg in zip(P.groups, X, S):
        for pos, j in enumerate(g):
            Xout[j] = Xg[pos].copy()
            Sout[j] = Sg[pos].copy()
    yfull = np.zeros(problem.m)
    yfull[keep] = y * scale * sgn
    raw_res = problem.apply(Xout) - problem.a
    return SDPSolution(
        X=Xout,
        y=yfull,
        S=Sout,
        objective=sgn * pobj,
        dual_objective=sgn * dobj,
        status=status,
        gap=float(rel_gap),
        primal_residual=float(np.max(np.abs(raw_res))) if problem.m else 0.0,
        dual_residual=float(dinf),
        iterations=it,
        history=history,
    )


# ---------------------------------------------------------------------------
# file formats


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_problem(problem: SDPProblem, path) -> None:
    """Write ``problem`` as sparse triplets.

    Layout: a comment line with the sense, then ``nblocks``, the block
    sizes, ``nconstraints``, the right-hand-side constants, and finally
    one ``constraint block row col value`` line per upper-triangular
    nonzero (1-based indices; constraint 0 is the objective).
    """
    lines = [f"# sdp {problem.sense}", str(len(problem.blocks)), " ".join(map(str, problem.blocks)), str(problem.m)]
    lines.append(" ".join(_fmt(v) for v in problem.a))
    for j, n in enumerate(problem.blocks):
        mats = [problem.C[j]] + list(problem.A[j])
        for c, M in enumerate(mats):
            r, s = np.nonzero(np.triu(M))
            for a, b in zip(r, s):
                lines.append(f"{c} {j + 1} {a + 1} {b + 1} {_fmt(M[a, b])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_problem(path) -> SDPProblem:
    """Inverse of :func:`write_problem`."""
    sense = "maximize"
    body = []
    for raw in Path(path).read_text().splitlines():
        s = raw.strip()
        if not s:
            continue
        if s.startswith("#"):
            toks = s[1:].split()
            if len(toks) >= 2 and toks[0] == "sdp":
                sense = toks[1]
            continue
        body.append(s)
    if len(body) < 3:
        raise SDPStructureError("truncated problem header")
    nb = int(body[0])
    blocks = [int(t) for t in body[1].split()]
    if len(blocks) != nb:
        raise SDPStructureError(f"header declares {nb} blocks but lists {len(blocks)} sizes")
    m = int(body[2])
    rest = body[3:]
    if m > 0:
        a = np.array([float(t) for t in rest[0].split()])
        rest = rest[1:]
    else:
        a = np.zeros(0)
        if rest and len(rest[0].split()) == 0:
            rest = rest[1:]
    if a.shape[0] != m:
        raise SDPStructureError(f"expected {m} constants, found {a.shape[0]}")
    C = [np.zeros((n, n)) for n in blocks]
    A = [np.zeros((m, n, n)) for n in blocks]
    for line in rest:
        toks = line.split()
        if len(toks) != 5:
            raise SDPStructureError(f"bad triplet line: {line!r}")
        c, j, r, s = (int(t) for t in toks[:4])
        v = float(toks[4])
        if not (0 <= c <= m and 1 <= j <= nb and 1 <= r <= blocks[j - 1] and 1 <= s <= blocks[j - 1]):
            raise SDPStructureError(f"index out of range: {line!r}")
        M = C[j - 1] if c == 0 else A[j - 1][c - 1]
        M[r - 1, s - 1] = v
        M[s - 1, r - 1] = v
    return SDPProblem(blocks, C, A, a, sense)


def write_solution(sol: SDPSolution, path) -> None:
    """Write a solution as labelled text blocks."""
    lines = [
        f"status {sol.status}",
        f"objective {_fmt(sol.objective)}",
        f"dual_objective {_fmt(sol.dual_objective)}",
        f"gap {_fmt(sol.gap)}",
        f"iterations {sol.iterations}",
        f"y {len(sol.y)}",
        " ".join(_fmt(v) for v in sol.y),
    ]
    for name, mats in (("X", sol.X), ("S", sol.S)):
        for j, M in enumerate(mats):
            lines.append(f"{name} {j + 1} {M.shape[0]}")
            lines.extend(" ".join(_fmt(v) for v in row) for row in M)
    Path(path).write_text("\n".join(lines) + "\n")


def read_solution(path) -> SDPSolution:
    lines = Path(path).read_text().splitlines()
    it = iter(lines)
    head = {}
    for _ in range(5):
        key, val = next(it).split(maxsplit=1)
        head[key] = val
    _, ny = next(it).split()
    yline = next(it)
    y = np.array([float(t) for t in yline.split()]) if int(ny) else np.zeros(0)
    X, S = [], []
    for line in it:
        if not line.strip():
            continue
        name, _, n = line.split()
        n = int(n)
        M = np.array([[float(t) for t in next(it).split()] for _ in range(n)])
        (X if name == "X" else S).append(M)
    return SDPSolution(
        X=X, y=y, S=S,
        objective=float(head["objective"]),
        dual_objective=float(head["dual_objective"]),
        status=head["status"],
        gap=float(head["gap"]),
        primal_residual=float("nan"),
        dual_residual=float("nan"),
        iterations=int(head["iterations"]),
    )
