import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sosmom.sos import (
    CompileError,
    MissingMomentError,
    Polynomial,
    SolverFailure,
    build_basis,
    compile_program,
    max_pe_quadform,
    pe_eval,
    pe_extract_uu,
    sos_bernstein_bound,
)


def sphere_program(B, objective, inequalities=(), localize=False):
    bs = [B.b(j) for j in range(B.k)]
    prog = compile_program(objective, [B.sphere()] + B.idempotence(), list(inequalities), B, bs if localize else ())
    return prog.solve()


def test_full_basis_single_variable():
    B = build_basis(1, 0, "full")
    assert len(B) == 3
    assert [B.name(e) for e in B.entries] == ["1", "u1", "u1^2"]


@pytest.mark.parametrize("d,k", [(1, 0), (2, 1), (3, 4), (4, 6)])
def test_basis_sizes_and_order(d, k):
    P = build_basis(d, k, "partial")
    F = build_basis(d, k, "full")
    assert len(P) == 1 + d + k + d * (d + 1) // 2
    assert len(F) == 1 + (d + k) + (d + k) * (d + k + 1) // 2
    for B in (P, F):
        assert sum(B[0]) == 0
        assert len(set(B.entries)) == len(B)


def test_partial_example_size():
    assert len(build_basis(2, 1, "partial")) == 7


def test_polynomial_arithmetic():
    x = Polynomial.var(0, 2)
    y = Polynomial.var(1, 2)
    p = (x + y) ** 2 - 2 * x * y
    assert p == x * x + y * y
    assert (p - p).terms == {}
    assert p.degree == 2
    assert (3 - x).terms == {(0, 0): 3.0, (1, 0): -1.0}


def test_sphere_forces_value():
    B = build_basis(1, 0, "partial")
    pe = sphere_program(B, B.u(0) * B.u(0))
    assert pe.value == pytest.approx(1.0, abs=1e-6)


def test_boolean_attains_one():
    B = build_basis(1, 1, "partial")
    prog = compile_program(B.b(0), B.idempotence(), [], B)
    assert prog.solve().value == pytest.approx(1.0, abs=1e-6)


def test_cross_term_on_sphere():
    B = build_basis(2, 0, "partial")
    pe = sphere_program(B, B.u(0) * B.u(1))
    t = np.linspace(0, 2 * np.pi, 100001)
    assert pe.value == pytest.approx(np.max(np.cos(t) * np.sin(t)), abs=1e-6)
    assert pe.value == pytest.approx(0.5, abs=1e-6)


def test_pe_eval_paths_agree():
    B = build_basis(2, 0, "partial")
    C = np.array([[1.0, 0.3], [0.3, -0.5]])
    pe = sphere_program(B, B.quad_form(C))
    u1, u2 = B.u(0), B.u(1)
    assert pe_eval(pe, B.one()) == pytest.approx(1.0, abs=1e-6)
    assert pe_eval(pe, u1 * u1 + u2 * u2) == pytest.approx(1.0, abs=1e-6)
    # entries 3, 4, 5 of the partial basis are u1^2, u1 u2, u2^2
    M = pe.M
    direct = M[0, 3] + 2 * M[0, 4] + M[0, 5]
    assert pe((u1 + u2) ** 2) == pytest.approx(direct, abs=1e-9)


def test_missing_moment_names_monomial():
    B = build_basis(2, 2, "partial")
    pe = sphere_program(B, B.b(0) + B.b(1))
    with pytest.raises(MissingMomentError) as err:
        pe_eval(pe, B.b(0) * B.b(1) * B.u(0))
    assert err.value.monomial == "u1*b1*b2"


def test_degree_too_high_is_a_compile_error():
    B = build_basis(1, 0, "partial")
    with pytest.raises(CompileError, match="u1\\^5"):
        compile_program(B.u(0) ** 5, [B.sphere()], [], B)


def test_extract_uu_top_direction():
    B = build_basis(2, 0, "partial")
    pe = sphere_program(B, B.u(0) * B.u(0))
    G = pe_extract_uu(pe)
    assert np.allclose(G, np.diag([1.0, 0.0]), atol=1e-4)
    assert np.trace(G) == pytest.approx(1.0, abs=1e-6)
    assert np.array_equal(G, G.T)


def test_bernstein_examples():
    assert sos_bernstein_bound(0, 0, 3, 4) == 0
    assert sos_bernstein_bound(3, 0, 1, math.e, 1) == pytest.approx(2 * (math.log(2) + 1))


@given(
    st.floats(0, 10), st.floats(0, 10), st.integers(1, 50), st.integers(1, 20),
    st.floats(0, 1), st.floats(0, 1), st.integers(0, 5),
)
def test_bernstein_monotone(R, s, k, d, dR, ds, dk):
    base = sos_bernstein_bound(R, s, k, d)
    assert sos_bernstein_bound(R + dR, s, k, d) >= base
    assert sos_bernstein_bound(R, s + ds, k, d) >= base
    assert sos_bernstein_bound(R, s, k + dk, d) >= base


def test_quadform_examples():
    assert max_pe_quadform([np.diag([2.0, 1.0])])[0] == pytest.approx(2.0, abs=1e-6)
    assert max_pe_quadform([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])[0] == pytest.approx(1.0, abs=1e-6)


@given(st.integers(0, 10**6), st.integers(2, 4), st.integers(1, 3))
def test_quadform_matches_eigensolver(seed, d, count):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(count):
        A = rng.standard_normal((d, d))
        mats.append(A + A.T)
    value, _ = max_pe_quadform(mats)
    assert value == pytest.approx(np.linalg.eigvalsh(sum(mats))[-1], abs=1e-6)


def test_quadform_full_basis():
    A = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 1.0]])
    v, _ = max_pe_quadform([A], build_basis(3, 0, "full"))
    assert v == pytest.approx(np.linalg.eigvalsh(A)[-1], abs=1e-6)


def test_quadform_reports_solver_failure():
    with pytest.raises(SolverFailure):
        max_pe_quadform([np.eye(2)], max_iter=0)


def random_bucket_program(rng, d, k, localize):
    B = build_basis(d, k, "partial")
    bs = [B.b(j) for j in range(k)]
    ineqs = []
    for b in bs:
        A = rng.standard_normal((d, d))
        ineqs.append(b * (B.quad_form(A + A.T) - rng.uniform(0, 0.5)))
    return B, bs, ineqs


@pytest.mark.parametrize("seed", range(6))
def test_pseudo_cauchy_schwarz_and_validity(seed):
    rng = np.random.default_rng(seed)
    d, k = 3, 3
    B, bs, ineqs = random_bucket_program(rng, d, k, True)
    pe = sphere_program(B, sum(bs[1:], bs[0]), ineqs, localize=True)
    assert pe.status == "optimal"
    assert pe(B.one()) == pytest.approx(1.0, abs=1e-6)
    assert pe.min_eig() >= -1e-6
    for j, b in enumerate(bs):
        assert abs(pe(b * b) - pe(b)) <= 1e-6
        assert abs(pe(b * B.sphere())) <= 1e-6
    for _ in range(20):
        f = B.linear_form(rng.standard_normal(d))
        g = B.linear_form(rng.standard_normal(d))
        assert pe(f * g) ** 2 <= pe(f * f) * pe(g * g) + 1e-8


@pytest.mark.parametrize("seed", range(4))
def test_adding_inequality_never_increases_value(seed):
    rng = np.random.default_rng(100 + seed)
    B, bs, ineqs = random_bucket_program(rng, 2, 3, True)
    obj = sum(bs[1:], bs[0])
    values = [sphere_program(B, obj, ineqs[:j], localize=True).value for j in range(len(ineqs) + 1)]
    assert all(b <= a + 1e-6 for a, b in zip(values, values[1:]))


def test_compile_is_deterministic(rng):
    B, bs, ineqs = random_bucket_program(rng, 2, 2, True)
    p1 = compile_program(bs[0] + bs[1], [B.sphere()] + B.idempotence(), ineqs, B, bs)
    p2 = compile_program(bs[0] + bs[1], [B.sphere()] + B.idempotence(), ineqs, B, bs)
    assert all(np.array_equal(a, b) for a, b in zip(p1.problem.A, p2.problem.A))
    assert all(np.array_equal(a, b) for a, b in zip(p1.problem.C, p2.problem.C))
    assert np.array_equal(p1.problem.a, p2.problem.a)


def test_localizers_remove_spurious_mass():
    # b_i <-e1 e1^T, u u^T> >= 0.25 b_i has only the integral solution b = 0
    B = build_basis(2, 3, "partial")
    bs = [B.b(j) for j in range(3)]
    E = -np.diag([1.0, 0.0])
    ineqs = [b * (B.quad_form(E) - 0.25) for b in bs]
    tight = sphere_program(B, sum(bs[1:], bs[0]), ineqs, localize=True)
    loose = sphere_program(B, sum(bs[1:], bs[0]), ineqs, localize=False)
    assert tight.value == pytest.approx(0.0, abs=1e-6)
    assert loose.value > 1.0


def test_localizer_needs_representable_products():
    B = build_basis(2, 1, "partial")
    with pytest.raises(CompileError):
        compile_program(B.b(0), B.idempotence(), [], B, [B.b(0) * B.u(0) * B.u(1)])
