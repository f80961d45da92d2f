import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darcy_bayes.fields import Field, GridSpec, h1_norm, h1_norm_array
from darcy_bayes.observation import ForwardModel, NoiseModel, ObservationSetup, generate_data
from darcy_bayes.posterior import (
    ChainState,
    PcnConfig,
    UnreliableEstimateWarning,
    WeakErrorRow,
    WeakErrorTable,
    WeightedMoments,
    bank_moments,
    bank_observations,
    chain_mean_with_error,
    hellinger_estimate,
    initial_state,
    pcn_step,
    probe_coefficients,
    run_chain,
    snis_expectation,
    tree_reduce,
    weak_error_study,
)
from darcy_bayes.prior import KLSynthesizer, PriorBank, PriorSpec, sample_prior, truncate
from darcy_bayes.solver import ProblemData, SolverConfig, SolverError, solve

G1 = GridSpec(1, 32)


def model_1d(sigma=0.1, points=(1.0, 3.0, 5.0)):
    x = G1.coordinates()[0]
    f = Field(G1, np.cos(x) + 0.5 * np.sin(2 * x))
    setup = ObservationSetup.points(G1, [[p] for p in points])
    return ForwardModel(ProblemData(f), setup, SolverConfig(rel_tol=1e-10)), NoiseModel.isotropic(len(points), sigma)


def zero_target(c):
    return 0.0


@pytest.mark.parametrize("kw", [dict(beta=0.0), dict(beta=1.5), dict(beta=0.5, burn_in=10, n_steps=10),
                                dict(beta=0.5, thin=0), dict(beta=0.5, n_steps=0)])
def test_pcn_config_validation(kw):
    args = dict(beta=0.5, n_steps=100)
    args.update(kw)
    with pytest.raises(ValueError):
        PcnConfig(**args)


def smooth_target(c):
    return 0.5 * float(np.sum((c - 0.3) ** 2)) * 4.0


def test_tiny_beta_accepts_almost_always():
    rng = np.random.default_rng(0)
    state = initial_state(smooth_target, rng.standard_normal((4, 2)))
    for _ in range(500):
        state = pcn_step(state, smooth_target, 1e-8, rng)
    assert state.acceptance_rate > 0.99


def test_independence_sampler_accepts_everything_without_data():
    rng = np.random.default_rng(1)
    state = initial_state(zero_target, rng.standard_normal((3, 2)))
    for _ in range(200):
        state = pcn_step(state, zero_target, 1.0, rng)
    assert state.accepted == state.proposed == 200


def test_prior_invariance_short():
    rng = np.random.default_rng(5)
    state = initial_state(zero_target, rng.standard_normal((2, 2)))
    trace = []
    for _ in range(20_000):
        state = pcn_step(state, zero_target, 0.5, rng)
        trace.append(state.coeffs[:, 0] ** 2)
    trace = np.array(trace)
    m, se = chain_mean_with_error(trace)
    assert np.all(np.abs(m - 1.0) < 3 * se)


def test_constant_shift_of_potential_leaves_trajectory_identical():
    def shifted(c):
        return smooth_target(c) + 123.456

    traj = []
    for target in (smooth_target, shifted):
        rng = np.random.default_rng(9)
        state = initial_state(target, np.zeros((3, 2)))
        coeffs = []
        for _ in range(300):
            state = pcn_step(state, target, 0.4, rng)
            coeffs.append(state.coeffs.copy())
        traj.append(np.array(coeffs))
    assert traj[0].tobytes() == traj[1].tobytes()


def test_solver_failure_rejects_and_chain_continues():
    calls = {"n": 0}

    def flaky(c):
        calls["n"] += 1
        if calls["n"] % 3 == 0:
            raise SolverError("boom", None)
        return smooth_target(c)

    rng = np.random.default_rng(2)
    state = initial_state(flaky, np.zeros((2, 2)))
    for _ in range(30):
        before = state.coeffs
        state = pcn_step(state, flaky, 0.3, rng)
    assert state.failed == 10
    assert state.proposed == 30
    assert 0 <= state.acceptance_rate <= 1
    assert isinstance(state, ChainState) and before.shape == (2, 2)


def test_failures_do_not_shift_random_stream():
    def fails(c):
        raise SolverError("always", None)

    rng_a, rng_b = np.random.default_rng(4), np.random.default_rng(4)
    a = initial_state(smooth_target, np.zeros((2, 2)))
    b = ChainState(np.zeros((2, 2)), a.phi_current)
    for _ in range(5):
        b = pcn_step(b, fails, 0.3, rng_b)
        pcn_step(a, smooth_target, 0.3, rng_a)
    assert rng_a.random() == rng_b.random()


def test_run_chain_without_data_matches_prior_predictive():
    model, _ = model_1d()
    probe = ObservationSetup.points(G1, [[2.0]])
    prior = PriorSpec(1.0, 2, d=1)
    res = run_chain(PcnConfig(0.9, 4000, 0, 1, seed=3), prior, model, None, None, probe_level=4, qoi=probe)
    assert res.diagnostics["acceptance_rate"] == 1.0
    mean, se = chain_mean_with_error(res.qoi_trace)
    g, q = bank_observations(PriorBank(PriorSpec(1.0, 2, seed=77, d=1), 4000), model, extra=probe)
    mc = q[:, 0].mean()
    mc_se = q[:, 0].std(ddof=1) / math.sqrt(len(q))
    assert abs(mean[0] - mc) < 3 * math.hypot(se[0], mc_se)


def test_posterior_contracts_towards_truth():
    # six points pin down the four amplitudes
    model, _ = model_1d(points=(0.5, 1.5, 2.5, 3.5, 4.5, 5.5))
    noise = NoiseModel.isotropic(6, 0.01)
    prior = PriorSpec(1.0, 2, d=1)
    _, u_true = sample_prior(PriorSpec(1.0, 2, seed=21, d=1), G1)
    y = generate_data(u_true, model.data, model.setup, noise, np.random.default_rng(0), model.cfg)
    p_true, _ = solve(u_true, model.data, model.cfg)
    post = run_chain(PcnConfig(0.03, 3000, 500, 1, seed=1), prior, model, noise, y, probe_level=4)
    pri = run_chain(PcnConfig(0.9, 3000, 0, 1, seed=1), prior, model, None, None, probe_level=4)
    d_post = h1_norm(post.summary.mean_pressure - p_true)
    d_prior = h1_norm(pri.summary.mean_pressure - p_true)
    assert d_post < 0.1 * d_prior


def test_low_acceptance_is_a_warning_not_failure():
    model, _ = model_1d()
    noise = NoiseModel.isotropic(3, 1e-4)
    y = np.array([5.0, -5.0, 5.0])
    res = run_chain(PcnConfig(1.0, 2000, 0, 1, seed=0), PriorSpec(1.0, 2, d=1), model, noise, y, probe_level=2)
    assert res.diagnostics["acceptance_rate"] < 0.01
    assert "1%" in res.diagnostics["warning"]


def test_chain_summary_fields():
    model, noise = model_1d()
    y = np.array([0.5, -0.8, 0.5])
    res = run_chain(PcnConfig(0.5, 300, 100, 4, seed=2), PriorSpec(1.0, 2, d=1), model, noise, y, probe_level=4,
                    keep_samples=True)
    s = res.summary
    assert s.sample_count == 50 == len(res.phi_trace) == len(res.samples)
    assert s.probe_covariance.shape == (8, 8)
    assert np.allclose(s.probe_covariance, s.probe_covariance.T)
    assert np.linalg.eigvalsh(s.probe_covariance).min() > -1e-8
    assert s.ess_estimate == res.diagnostics["ess_phi"] > 0


def test_probe_coefficients_of_cosine():
    g = GridSpec(2, 16)
    p = Field.from_function(g, lambda x, y: np.cos(x))
    c = probe_coefficients(p.values[None], g, 2)[0]
    modes = PriorSpec(2.0, 2, d=2).modes
    m = [i for i, k in enumerate(modes) if tuple(k) == (1, 0)][0]
    # (cos x, c0 cos x) with c0 = sqrt(2 / (2 pi)^2), times sqrt(1 + 1)
    expected = math.sqrt(2.0) * math.sqrt(2.0) / (2 * math.pi) * 2 * math.pi**2
    assert c[2 * m] == pytest.approx(expected, rel=1e-12)
    assert abs(np.delete(c, 2 * m)).max() < 1e-12


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2]))
def test_probe_vector_norm_is_h1_norm_of_projection(seed, d):
    g = GridSpec(d, 16)
    f = Field(g, np.random.default_rng(seed).standard_normal(g.shape))
    proj = truncate(f, 3)
    proj = proj - Field.constant(g, proj.mean())
    c = probe_coefficients(f.values[None], g, 3)[0]
    assert np.linalg.norm(c) == pytest.approx(h1_norm(proj), rel=1e-12)


def test_probe_level_must_be_resolved():
    with pytest.raises(ValueError):
        probe_coefficients(np.zeros((1, 16)), GridSpec(1, 16), 8)


def moments(seed, n=50, dim=4, shape=(8,), scale=30.0):
    rng = np.random.default_rng(seed)
    return rng.normal(0, scale, n), rng.standard_normal((n,) + shape), rng.standard_normal((n, dim))


def test_weighted_moments_merge_equals_single_pass():
    lw, p, c = moments(0)
    whole = WeightedMoments((8,), 4)
    whole.add(lw, p, c)
    parts = []
    for sl in (slice(0, 7), slice(7, 30), slice(30, 50)):
        acc = WeightedMoments((8,), 4)
        acc.add(lw[sl], p[sl], c[sl])
        parts.append(acc)
    merged = tree_reduce(parts, WeightedMoments.merge)
    assert np.allclose(merged.mean_field(), whole.mean_field(), rtol=1e-12, atol=1e-14)
    assert np.allclose(merged.covariance(), whole.covariance(), rtol=1e-10, atol=1e-12)
    assert merged.ess == pytest.approx(whole.ess, rel=1e-12)
    assert merged.count == 50


def test_weighted_moments_match_direct_formula_and_are_psd():
    lw, p, c = moments(1, scale=2.0)
    acc = WeightedMoments((8,), 4)
    acc.add(lw, p, c)
    w = np.exp(lw - lw.max())
    w /= w.sum()
    m = w @ c
    cov = (c - m).T @ ((c - m) * w[:, None])
    assert np.allclose(acc.mean_field(), w @ p, atol=1e-13)
    assert np.allclose(acc.covariance(), cov, atol=1e-12)
    assert np.linalg.eigvalsh(acc.covariance()).min() > -1e-8


def test_moments_invariant_under_reordering():
    lw, p, c = moments(2, scale=1.0)
    perm = np.random.default_rng(0).permutation(50)
    a, b = WeightedMoments((8,), 4), WeightedMoments((8,), 4)
    a.add(lw, p, c)
    b.add(lw[perm], p[perm], c[perm])
    assert np.allclose(a.mean_field(), b.mean_field(), atol=1e-13)
    assert np.allclose(a.covariance(), b.covariance(), atol=1e-13)


def test_tree_reduce_fixed_pairing():
    assert tree_reduce(list("abcde"), lambda x, y: f"({x}{y})") == "(((ab)(cd))e)"
    with pytest.raises(ValueError):
        tree_reduce([], max)


def test_snis_uniform_weights_is_plain_mean():
    q = np.random.default_rng(0).standard_normal((500, 3))
    est = snis_expectation(np.zeros(500), q)
    assert np.allclose(est.estimate, q.mean(axis=0), atol=1e-14)
    assert est.ess == pytest.approx(500.0)
    assert est.reliable
    assert est.log_normalizer == pytest.approx(0.0, abs=1e-14)


def test_snis_far_data_flagged():
    model, noise = model_1d(sigma=0.05)
    bank = PriorBank(PriorSpec(1.0, 2, d=1), 2000)
    g, _ = bank_observations(bank, model)
    y_far = np.array([30.0, -30.0, 30.0])
    phi = 0.5 * np.sum((y_far - g) ** 2, axis=1) / 0.05**2
    est = snis_expectation(-phi, g[:, 0])
    assert not est.reliable and est.ess < 50
    assert est.log_normalizer < -1000


def small_study_inputs(n=16):
    g = GridSpec(2, n)
    x, y = g.coordinates()
    f = Field(g, np.cos(x) + np.sin(2 * y))
    setup = ObservationSetup.points(g, [[1.0, 1.0], [4.0, 2.0], [2.5, 5.0]])
    model = ForwardModel(ProblemData(f), setup, SolverConfig(rel_tol=1e-8))
    noise = NoiseModel.isotropic(3, 0.3)
    _, ut = sample_prior(PriorSpec(2.0, 6, seed=50, d=2), g)
    data = generate_data(ut, model.data, setup, noise, np.random.default_rng(1), model.cfg)
    return model, noise, data


def test_weak_error_reference_row_is_zero_and_csv(tmp_path):
    model, noise, y = small_study_inputs()
    table = weak_error_study(PriorSpec(2.0, 4, seed=3, d=2), model, noise, y, [1, 2, 4], 400, probe_level=3,
                             chunk_size=50)
    last = table.rows[-1]
    assert last.N == 4 and last.e_mean_h1 == 0.0 and last.e_cov_opnorm == 0.0 and last.mc_std_error == 0.0
    assert all(r.mc_std_error > 0 for r in table.rows[:-1])
    path = tmp_path / "we.csv"
    table.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "N,e_mean_h1,e_cov_opnorm,mc_std_error,ess,reliable"
    assert len(lines) == 4


def test_weak_error_rejects_reference_below_levels():
    model, noise, y = small_study_inputs()
    with pytest.raises(ValueError):
        weak_error_study(PriorSpec(2.0, 2, d=2), model, noise, y, [1, 4], 100)


def test_weak_error_flags_unreliable_rows():
    model, noise, y = small_study_inputs()
    noise = NoiseModel.isotropic(3, 1e-3)
    table = weak_error_study(PriorSpec(2.0, 4, seed=3, d=2), model, noise, y + 3.0, [2], 200, probe_level=3,
                             chunk_size=50)
    assert not table.rows[0].reliable


def test_table_requires_increasing_levels():
    row = WeakErrorRow(4, 0.1, 0.1, 0.01, 100.0)
    with pytest.raises(ValueError):
        WeakErrorTable([row, row], 8)


def test_bank_moments_independent_of_thread_count_and_chunking_order():
    model, noise, y = small_study_inputs()
    bank = PriorBank(PriorSpec(2.0, 4, seed=3, d=2), 300)
    a = bank_moments(bank, model, noise, y, [2, 4], 3, chunk_size=40, n_groups=5, threads=1)
    b = bank_moments(bank, model, noise, y, [2, 4], 3, chunk_size=40, n_groups=5, threads=3)
    for N in (2, 4):
        ta, tb = a.total(N), b.total(N)
        assert ta.mean_field().tobytes() == tb.mean_field().tobytes()
        assert ta.covariance().tobytes() == tb.covariance().tobytes()


def test_bank_level_moments_match_direct_truncated_solves():
    model, noise, y = small_study_inputs()
    spec = PriorSpec(2.0, 4, seed=3, d=2)
    bank = PriorBank(spec, 60)
    bm = bank_moments(bank, model, noise, y, [2, 4], 3, chunk_size=20, n_groups=3)
    # direct: realize the full draw, project with P^2, solve, weight
    synth = KLSynthesizer(spec, model.grid)
    ps, lws = [], []
    for i in range(60):
        u = Field(model.grid, synth(bank.draw(i)))
        p, _ = solve(truncate(u, 2), model.data, model.cfg)
        g = model.setup.matrix @ p.values.ravel()
        lws.append(-0.5 * np.sum((y - g) ** 2) / 0.3**2)
        ps.append(p.values)
    w = np.exp(np.array(lws) - max(lws))
    direct = np.tensordot(w / w.sum(), np.array(ps), axes=1)
    assert h1_norm_array(bm.total(2).mean_field() - direct, model.grid) < 1e-6


def test_weak_error_pcn_method_runs():
    model, noise, y = small_study_inputs()
    table = weak_error_study(PriorSpec(2.0, 3, seed=3, d=2), model, noise, y, [1, 2], 0, method="pcn",
                             probe_level=2, pcn=PcnConfig(0.5, 300, 50, 1, seed=4))
    assert [r.N for r in table.rows] == [1, 2]
    assert table.method == "pcn"
    assert all(r.e_mean_h1 > 0 and r.mc_std_error > 0 for r in table.rows)
    with pytest.raises(ValueError):
        weak_error_study(PriorSpec(2.0, 3, d=2), model, noise, y, [1], 10, method="pcn")
    with pytest.raises(ValueError):
        weak_error_study(PriorSpec(2.0, 3, d=2), model, noise, y, [1], 10, method="mala")


@pytest.fixture(scope="module")
def hell_inputs():
    model, noise = model_1d(sigma=0.2)
    g, _ = bank_observations(PriorBank(PriorSpec(1.0, 2, seed=0, d=1), 2000), model)
    return g, noise, np.array([0.4, -0.7, 0.5])


def test_hellinger_zero_at_equal_data(hell_inputs):
    g, noise, y = hell_inputs
    assert hellinger_estimate(y, y.copy(), g, noise) == 0.0


def test_hellinger_symmetric_bitwise_and_bounded(hell_inputs):
    g, noise, y = hell_inputs
    y2 = y + np.array([0.1, 0.0, -0.2])
    a = hellinger_estimate(y, y2, g, noise)
    b = hellinger_estimate(y2, y, g, noise)
    assert a == b
    assert 0.0 < a <= 1.0
    with pytest.warns(UnreliableEstimateWarning):
        far = hellinger_estimate(y, y + 100.0, g, noise)
    assert far <= 1.0


def test_hellinger_requires_samples_and_warns(hell_inputs):
    g, noise, y = hell_inputs
    with pytest.raises(ValueError):
        hellinger_estimate(y, y + 0.1, g[:999], noise)
    tight = NoiseModel.isotropic(3, 1e-3)
    with pytest.warns(UnreliableEstimateWarning):
        hellinger_estimate(y, y + 0.01, g, tight)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hellinger_estimate(y, y + 0.01, g, noise)
