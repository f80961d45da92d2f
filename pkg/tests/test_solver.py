import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darcy_bayes.fields import Field, GridSpec, h1_norm, l2_norm, sup_norm
from darcy_bayes.prior import PriorSpec, sample_prior
from darcy_bayes.problems import manufactured
from darcy_bayes.solver import (
    ProblemData,
    SolverConfig,
    SolverError,
    apply_operator,
    assemble_rhs,
    coefficient_bounds,
    continuity_ratio,
    energy_bound_ratios,
    solve,
    solve_batch,
)
from oracles import periodic_flux_solve_1d


def rand(grid, seed, scale=1.0):
    return Field(grid, scale * np.random.default_rng(seed).standard_normal(grid.shape))


def smooth_u(grid, seed, N=4):
    return sample_prior(PriorSpec(2.0, N, seed=seed, d=grid.d), grid)[1]


def grad_sq(p):
    g = p.grid
    return sum(np.sum((np.roll(p.values, -1, axis=a) - p.values) ** 2) for a in range(g.d)) / g.h**2 * g.h**g.d


def test_config_validation():
    for kw in ({"rel_tol": 0.0}, {"rel_tol": 1.0}, {"max_iter": 0}, {"preconditioner": "jacobi"}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
    assert SolverConfig().iteration_cap(GridSpec(2, 8)) == 640


def test_constant_in_kernel():
    g = GridSpec(2, 16)
    out = apply_operator(rand(g, 1), Field.constant(g, 3.0))
    assert np.abs(out.values).max() < 1e-12


def test_discrete_symbol_of_cosine():
    g = GridSpec(1, 32)
    out = apply_operator(Field.constant(g, 0.0), Field.from_function(g, np.cos))
    lam = (2 - 2 * math.cos(g.h)) / g.h**2
    assert np.allclose(out.values, lam * np.cos(g.coordinates()[0]), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2, 3]))
def test_operator_symmetric_and_mean_free(seed, d):
    g = GridSpec(d, 8)
    u, p, q = rand(g, seed), rand(g, seed + 1), rand(g, seed + 2)
    Ap = apply_operator(u, p)
    Aq = apply_operator(u, q)
    assert abs(Ap.mean()) < 1e-12 * max(1.0, np.abs(Ap.values).max())
    lhs, rhs = np.sum(Ap.values * q.values), np.sum(p.values * Aq.values)
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_coercivity_bounds(seed):
    g = GridSpec(2, 16)
    u, p = rand(g, seed, 0.5), rand(g, seed + 1)
    lam, Lam = coefficient_bounds(u)
    energy = np.sum(apply_operator(u, p).values * p.values) * g.h**g.d
    gs = grad_sq(p)
    assert lam * gs * (1 - 1e-12) <= energy <= Lam * gs * (1 + 1e-12)


def test_coefficient_bounds_examples():
    g = GridSpec(1, 64)
    assert coefficient_bounds(Field.constant(g, 0.0)) == (1.0, 1.0)
    lam, Lam = coefficient_bounds(Field.from_function(g, np.sin))
    assert lam == pytest.approx(math.exp(-1), rel=1e-3) and Lam == pytest.approx(math.e, rel=1e-3)


def test_rhs_examples():
    g = GridSpec(1, 64)
    f = Field.from_function(g, np.cos)
    assert np.allclose(assemble_rhs(ProblemData(f)).values, f.values, atol=1e-15)
    one = Field.constant(g, 1.0)
    assert sup_norm(assemble_rhs(ProblemData(one))) < 1e-15
    errs = []
    for n in (32, 64, 128):
        gn = GridSpec(1, n)
        b = assemble_rhs(ProblemData(Field.constant(gn, 0.0), (Field.from_function(gn, np.cos),)))
        errs.append(np.abs(b.values + np.sin(gn.coordinates()[0])).max())
    assert 3.6 < errs[0] / errs[1] < 4.4 and 3.6 < errs[1] / errs[2] < 4.4


def test_rhs_is_linear():
    g = GridSpec(2, 16)
    f1, f2, a1, a2, b1, b2 = (rand(g, i) for i in range(6))
    lhs = assemble_rhs(ProblemData(f1 * 2.0 + f2, (a1 * 2.0 + b1, a2 * 2.0 + b2)))
    rhs = assemble_rhs(ProblemData(f1, (a1, a2))) * 2.0 + assemble_rhs(ProblemData(f2, (b1, b2)))
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)


def test_laplace_cosine():
    g = GridSpec(2, 64)
    p, rep = solve(Field.constant(g, 0.0), ProblemData(Field.from_function(g, lambda x, y: np.cos(x))))
    assert rep.converged and rep.final_relative_residual <= 1e-10
    assert sup_norm(p - Field.from_function(g, lambda x, y: np.cos(x))) < 2 * g.h**2


def test_constant_coefficient_scaling():
    g = GridSpec(2, 64)
    c = 0.7
    p, _ = solve(Field.constant(g, c), ProblemData(Field.from_function(g, lambda x, y: np.cos(x))))
    assert sup_norm(p - Field.from_function(g, lambda x, y: math.exp(-c) * np.cos(x))) < 2 * g.h**2


@pytest.mark.parametrize("d", [1, 2, 3])
def test_manufactured_second_order(d):
    ns = (16, 32, 64) if d < 3 else (8, 16, 32)
    sup_e, h1_e = [], []
    for n in ns:
        m = manufactured("sinexp", GridSpec(d, n))
        p, _ = solve(m.u, m.data)
        sup_e.append(sup_norm(p - m.p_exact))
        h1_e.append(h1_norm(p - m.p_exact))
    for e in (sup_e, h1_e):
        orders = np.log2(np.array(e[:-1]) / np.array(e[1:]))
        assert np.all(np.abs(orders - 2.0) < 0.2), orders


def test_solution_is_mean_free_with_small_residual():
    g = GridSpec(2, 32)
    u = smooth_u(g, 1)
    data = ProblemData(rand(g, 2))
    p, rep = solve(u, data, SolverConfig(rel_tol=1e-9))
    assert abs(p.mean()) < 1e-13
    b = assemble_rhs(data)
    res = apply_operator(u, p) - b
    assert l2_norm(res) / l2_norm(b) <= 1e-9


@pytest.mark.parametrize("pc", ["scaled", "laplacian"])
def test_matches_direct_1d_solver(pc):
    g = GridSpec(1, 64)
    u = smooth_u(g, 7)
    f = rand(g, 3)
    p, _ = solve(u, ProblemData(f), SolverConfig(rel_tol=1e-12, preconditioner=pc))
    assert np.abs(p.values - periodic_flux_solve_1d(u.values, f.values)).max() < 1e-10


def test_batch_members_independent_of_batch():
    g = GridSpec(2, 32)
    us = np.stack([smooth_u(g, s).values * a for s, a in ((1, 0.5), (2, 2.0), (3, 1.0))])
    rhs = assemble_rhs(ProblemData(rand(g, 9))).values
    cfg = SolverConfig(rel_tol=1e-8)
    together, reps = solve_batch(us, rhs, g, cfg)
    for i in range(3):
        alone, rep = solve_batch(us[i:i + 1], rhs, g, cfg)
        assert np.array_equal(alone[0], together[i])
        assert rep[0] == reps[i]


def test_warm_start_converges_to_same_tolerance():
    g = GridSpec(2, 32)
    u = smooth_u(g, 4)
    rhs = assemble_rhs(ProblemData(rand(g, 5))).values
    cold, rc = solve_batch(u.values[None], rhs, g, SolverConfig(rel_tol=1e-10))
    warm, rw = solve_batch(u.values[None], rhs, g, SolverConfig(rel_tol=1e-10), x0=cold * 0.99)
    assert rw[0].iterations < rc[0].iterations
    assert np.abs(warm - cold).max() < 1e-8


def test_zero_rhs_gives_zero():
    g = GridSpec(2, 16)
    p, rep = solve(rand(g, 1), ProblemData(Field.constant(g, 2.0)))
    assert sup_norm(p) == 0.0 and rep.converged


def test_nonconvergence_reports():
    g = GridSpec(2, 32)
    with pytest.raises(SolverError) as info:
        solve(smooth_u(g, 1), ProblemData(rand(g, 2)), SolverConfig(rel_tol=1e-12, max_iter=2))
    assert not info.value.report.converged
    assert info.value.report.iterations == 2


def test_nan_detected():
    g = GridSpec(1, 16)
    u = np.zeros((1, 16))
    u[0, 3] = 800.0  # exp overflows to inf
    rhs = assemble_rhs(ProblemData(Field.from_function(g, np.cos))).values
    with pytest.raises(SolverError):
        solve_batch(u, rhs, g)


def test_energy_bound_sweep():
    g = GridSpec(2, 32)
    v = smooth_u(g, 12)
    v = v * (1.0 / sup_norm(v))
    m = manufactured("sinexp", g)
    r = energy_bound_ratios(v, m.data, [0, 1, 2, 3, 4])
    assert np.all(r <= 10 * r[0])


def test_continuity_random_pairs():
    g = GridSpec(2, 32)
    m = manufactured("sinexp", g)
    rng = np.random.default_rng(0)
    ratios = []
    for i in range(8):
        u1 = smooth_u(g, 100 + i)
        u1 = u1 * (rng.uniform(0.2, 1.0) / sup_norm(u1))
        du = smooth_u(g, 200 + i)
        u2 = u1 + du * (rng.uniform(0.01, 0.3) / sup_norm(du))
        u2 = u2 * min(1.0, 1.0 / sup_norm(u2))
        ratios.append(continuity_ratio(u1, u2, m.data))
    # the continuum estimate gives ratio <= sqrt(2) ||f||_{H^-1}
    assert max(ratios) <= 10 * m.data.data_norm()
