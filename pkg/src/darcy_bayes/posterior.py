"""Sampling the truncated posterior and measuring truncation (weak) errors.

Two estimators of posterior expectations are provided:

* pCN MCMC on the standardized KL amplitudes of the truncated prior. The
  proposal ``v = sqrt(1 - beta^2) u + beta w`` leaves the prior invariant, so
  acceptance depends on the potential difference only.
* Self-normalized importance sampling with the prior as proposal. A
  ``PriorBank`` drawn once at the reference level is truncated to every
  level of a study, giving common random numbers across levels.

Pressure moments are summarized by the mean field and by the covariance of
H1-weighted real Fourier coefficients of p on a probe cube
``0 < max_i |k_i| <= M`` (see ``probe_coefficients``). The Euclidean norm of
the weighted coefficient vector equals the H1 norm of the probe projection,
so the spectral norm of the probe covariance approximates the
L(H1, H1) operator norm.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from os import PathLike
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .diagnostics import integrated_autocorr_time, mean_standard_error
from .fields import Field, GridSpec, h1_norm_array
from .observation import ForwardModel, NoiseModel, ObservationSetup, misfit, observe_array
from .prior import KLSynthesizer, PriorBank, PriorSpec, kl_modes, level_mask
from .solver import SolverError
from .truncation import RateFit, fit_rate

MIN_ESS = 50.0
HELLINGER_MIN_SAMPLES = 1000
THREADS_ENV = "DARCY_BAYES_THREADS"


class UnreliableEstimateWarning(UserWarning):
    """Importance weights degenerated below the effective-sample-size floor."""


def thread_count() -> int:
    """Worker cap from ``DARCY_BAYES_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# --------------------------------------------------------------------------
# probe subspace


@lru_cache(maxsize=None)
def _probe_layout(grid: GridSpec, M: int):
    modes = kl_modes(grid.d, M)
    n = grid.n
    rshape = grid.shape[:-1] + (n // 2 + 1,)
    # take k itself when its last component is >= 0, else conj of -k
    flip = modes[:, -1] < 0
    k = np.where(flip[:, None], -modes, modes)
    flat = np.ravel_multi_index(tuple(np.mod(k, n).T), rshape)
    ksq = np.sum(modes.astype(float) ** 2, axis=1)
    weight = np.sqrt(2.0 * (2.0 * math.pi) ** grid.d * (1.0 + ksq)) / grid.size
    return flat, np.where(flip, -1.0, 1.0), weight


def probe_coefficients(p: np.ndarray, grid: GridSpec, M: int) -> np.ndarray:
    """H1-weighted cosine/sine coefficients of ``p`` on the probe cube, shape ``(..., 2 m)``.

    Coefficients are ordered mode by mode (lexicographic) as ``(cos, sin)``
    pairs of the L2-orthonormal real basis, each times ``sqrt(1 + |k|^2)``.
    """
    if not M < grid.n // 2:
        raise ValueError(f"probe level {M} needs M < n/2 = {grid.n // 2}")
    flat, sign, weight = _probe_layout(grid, M)
    batch = np.shape(p)[: np.ndim(p) - grid.d]
    spec = np.fft.rfftn(p, axes=grid.axes).reshape(batch + (-1,))[..., flat]
    out = np.empty(batch + (flat.size, 2))
    out[..., 0] = weight * spec.real
    out[..., 1] = -sign * weight * spec.imag
    return out.reshape(batch + (2 * flat.size,))


# --------------------------------------------------------------------------
# weighted moment accumulation


class WeightedMoments:
    """Streaming self-normalized sums of pressure fields and probe coefficients.

    Sums are kept relative to a running log-scale so weights ``exp(logw)``
    never overflow. ``merge`` combines two accumulators exactly.
    """

    def __init__(self, field_shape: tuple[int, ...], dim: int):
        self.log_scale = -np.inf
        self.count = 0
        self.s0 = 0.0
        self.s00 = 0.0
        self.sp = np.zeros(field_shape)
        self.sc = np.zeros(dim)
        self.scc = np.zeros((dim, dim))

    def _rescale(self, new_scale: float):
        if self.count and new_scale != self.log_scale:
            f = math.exp(self.log_scale - new_scale)
            self.s0 *= f
            self.s00 *= f * f
            self.sp *= f
            self.sc *= f
            self.scc *= f
        self.log_scale = new_scale

    def add(self, logw: np.ndarray, p: np.ndarray, c: np.ndarray) -> None:
        logw = np.asarray(logw, dtype=np.float64)
        if logw.size == 0:
            return
        top = max(self.log_scale, float(logw.max()))
        self._rescale(top)
        w = np.exp(logw - top)
        self.count += logw.size
        self.s0 += float(w.sum())
        self.s00 += float(np.dot(w, w))
        self.sp += np.tensordot(w, p, axes=1)
        self.sc += w @ c
        self.scc += (c * w[:, None]).T @ c

    def merge(self, other: "WeightedMoments") -> "WeightedMoments":
        out = WeightedMoments(self.sp.shape, self.sc.size)
        out.count = self.count + other.count
        out.log_scale = max(self.log_scale, other.log_scale)
        for part in (self, other):
            if not part.count:
                continue
            f = math.exp(part.log_scale - out.log_scale)
            out.s0 += part.s0 * f
            out.s00 += part.s00 * f * f
            out.sp += part.sp * f
            out.sc += part.sc * f
            out.scc += part.scc * f
        return out

    @property
    def ess(self) -> float:
        return self.s0**2 / self.s00 if self.s00 > 0 else 0.0

    @property
    def log_normalizer(self) -> float:
        """``log sum w`` (unnormalized; divide by ``count`` for a mean)."""
        return self.log_scale + math.log(self.s0) if self.s0 > 0 else -np.inf

    def mean_field(self) -> np.ndarray:
        return self.sp / self.s0

    def covariance(self) -> np.ndarray:
        m = self.sc / self.s0
        cov = self.scc / self.s0 - np.outer(m, m)
        return 0.5 * (cov + cov.T)


def tree_reduce(items: Sequence, combine: Callable):
    """Pairwise reduction in a fixed order, independent of how items were produced."""
    items = list(items)
    if not items:
        raise ValueError("nothing to reduce")
    while len(items) > 1:
        nxt = [combine(items[i], items[i + 1]) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


@dataclass(frozen=True, eq=False)
class MomentSummary:
    """Posterior pressure mean and probe covariance (dimension ``2 m`` for ``m`` probe modes)."""

    mean_pressure: Field
    probe_covariance: np.ndarray
    sample_count: int
    ess_estimate: float
    probe_level: int = 8

    @classmethod
    def from_moments(cls, acc: WeightedMoments, grid: GridSpec, probe_level: int, ess: float | None = None):
        return cls(
            Field(grid, acc.mean_field()),
            acc.covariance(),
            acc.count,
            acc.ess if ess is None else ess,
            probe_level,
        )


# --------------------------------------------------------------------------
# pCN


@dataclass(frozen=True)
class PcnConfig:
    beta: float
    n_steps: int
    burn_in: int = 0
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"pCN step beta must lie in (0, 1], got {self.beta}")
        if self.n_steps < 1 or self.thin < 1:
            raise ValueError("n_steps and thin must be >= 1")
        if not 0 <= self.burn_in < self.n_steps:
            raise ValueError(f"burn_in must lie in [0, n_steps), got {self.burn_in}")


@dataclass(frozen=True, eq=False)
class ChainState:
    coeffs: np.ndarray
    phi_current: float
    accepted: int = 0
    proposed: int = 0
    failed: int = 0
    aux: object = None

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0


def _evaluate(target, coeffs):
    out = target(coeffs)
    if isinstance(out, tuple):
        return float(out[0]), out[1]
    return float(out), None


def initial_state(target, coeffs: np.ndarray) -> ChainState:
    phi, aux = _evaluate(target, coeffs)
    return ChainState(np.asarray(coeffs, dtype=np.float64), phi, aux=aux)


def pcn_step(state: ChainState, target, beta: float, rng: np.random.Generator) -> ChainState:
    """One pCN transition.

    ``target(coeffs)`` returns the potential, or ``(potential, aux)`` where
    ``aux`` is cached on the state (e.g. the pressure of the current point).
    Each step consumes one prior draw and one uniform, whatever happens, so
    the random stream is independent of solver failures. A failing target
    evaluation rejects the proposal and is counted in ``failed``.
    """
    w = rng.standard_normal(state.coeffs.shape)
    v = math.sqrt(1.0 - beta * beta) * state.coeffs + beta * w
    log_u = math.log(rng.random())
    try:
        phi_v, aux_v = _evaluate(target, v)
    except SolverError:
        return replace(state, proposed=state.proposed + 1, failed=state.failed + 1)
    if log_u < state.phi_current - phi_v:
        return replace(state, coeffs=v, phi_current=phi_v, aux=aux_v,
                       accepted=state.accepted + 1, proposed=state.proposed + 1)
    return replace(state, proposed=state.proposed + 1)


@dataclass(frozen=True, eq=False)
class ChainResult:
    summary: MomentSummary
    diagnostics: dict
    phi_trace: np.ndarray
    qoi_trace: np.ndarray | None = None
    samples: np.ndarray | None = None


def pressure_target(model: ForwardModel, synth: KLSynthesizer, noise: NoiseModel | None, y: np.ndarray | None):
    """Potential closure on KL amplitudes returning ``(phi, pressure)``.

    With ``y`` None the potential is identically zero (no data).
    """

    def target(coeffs):
        p = model.pressure(synth(coeffs)[None])[0]
        if y is None:
            return 0.0, p
        g = observe_array(p, model.setup)
        return float(misfit(g, y, noise)), p

    return target


def run_chain(
    cfg: PcnConfig,
    prior: PriorSpec,
    model: ForwardModel,
    noise: NoiseModel | None,
    y: np.ndarray | None,
    probe_level: int = 8,
    qoi: ObservationSetup | None = None,
    keep_samples: bool = False,
) -> ChainResult:
    """pCN chain targeting the truncated posterior; moments of ``p^N`` over kept samples.

    Samples after ``burn_in`` are kept every ``thin`` steps. ``qoi`` adds a
    trace of extra linear functionals of p (e.g. a probe point). The chain
    starts from the prior draw of ``cfg.seed``.
    """
    grid = model.grid
    synth = KLSynthesizer(prior, grid)
    target = pressure_target(model, synth, noise, y)
    rng = np.random.default_rng(cfg.seed)
    state = initial_state(target, rng.standard_normal((len(prior.modes), 2)))
    acc = WeightedMoments(grid.shape, 2 * len(kl_modes(grid.d, probe_level)))
    phis, qois, kept = [], [], []
    for step in range(cfg.n_steps):
        state = pcn_step(state, target, cfg.beta, rng)
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            p = state.aux
            acc.add(np.zeros(1), p[None], probe_coefficients(p[None], grid, probe_level))
            phis.append(state.phi_current)
            if qoi is not None:
                qois.append(observe_array(p, qoi))
            if keep_samples:
                kept.append(state.coeffs)
    phi_trace = np.array(phis)
    tau = integrated_autocorr_time(phi_trace) if phi_trace.size > 1 else 1.0
    ess = phi_trace.size / tau
    diagnostics = {
        "acceptance_rate": state.acceptance_rate,
        "proposed": state.proposed,
        "failed": state.failed,
        "kept": int(phi_trace.size),
        "tau_phi": tau,
        "ess_phi": ess,
        "warning": "acceptance rate below 1%" if state.acceptance_rate < 0.01 else "",
    }
    return ChainResult(
        MomentSummary.from_moments(acc, grid, probe_level, ess=ess),
        diagnostics,
        phi_trace,
        np.array(qois) if qoi is not None else None,
        np.array(kept) if keep_samples else None,
    )


def chain_mean_with_error(trace: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and autocorrelation-adjusted standard error of a trace."""
    trace = np.asarray(trace, dtype=np.float64).reshape(len(trace), -1)
    means = trace.mean(axis=0)
    errors = np.array([mean_standard_error(trace[:, j]) for j in range(trace.shape[1])])
    return means, errors


# --------------------------------------------------------------------------
# self-normalized importance sampling


@dataclass(frozen=True)
class SnisEstimate:
    estimate: np.ndarray | float
    ess: float
    reliable: bool
    std_error: np.ndarray | float
    log_normalizer: float


def snis_expectation(log_weights: np.ndarray, values: np.ndarray, min_ess: float = MIN_ESS) -> SnisEstimate:
    """Self-normalized estimate ``sum w q / sum w`` with delta-method standard error.

    ``log_normalizer`` is ``log`` of the mean weight, i.e. the estimate of
    ``log Z`` when ``log_weights = -Phi`` and samples come from the prior.
    """
    lw = np.asarray(log_weights, dtype=np.float64)
    q = np.asarray(values, dtype=np.float64)
    top = lw.max()
    w = np.exp(lw - top)
    s0 = w.sum()
    est = np.tensordot(w, q, axes=1) / s0
    dev = q - est
    var = np.tensordot(w**2, dev**2, axes=1) / s0**2
    ess = float(s0**2 / np.dot(w, w))
    log_z = float(top + math.log(s0) - math.log(lw.size))
    return SnisEstimate(est, ess, ess >= min_ess, np.sqrt(var), log_z)


@lru_cache(maxsize=32)
def _synthesizer(prior: PriorSpec, grid: GridSpec) -> KLSynthesizer:
    return KLSynthesizer(prior, grid)


def _chunk_levels(bank, model, noise, y, levels, probe_level, start, stop, batch):
    """Moments of one bank chunk at every level, finest level first (warm starts)."""
    grid = model.grid
    coeffs = bank.chunk(start, stop)
    dim = 2 * len(kl_modes(grid.d, probe_level))
    out = {N: WeightedMoments(grid.shape, dim) for N in levels}
    order = sorted(levels, reverse=True)
    for b0 in range(0, coeffs.shape[0], batch):
        cb = coeffs[b0:b0 + batch]
        x0 = None
        for N in order:
            sub = bank.spec.with_level(N)
            u = _synthesizer(sub, grid)(cb[:, level_mask(grid.d, bank.spec.N, N)])
            p = model.pressure(u, x0=x0)
            x0 = p
            logw = np.zeros(len(cb)) if y is None else -misfit(observe_array(p, model.setup), y, noise)
            out[N].add(logw, p, probe_coefficients(p, grid, probe_level))
    return out


@dataclass
class BankMoments:
    """Per-level moment accumulators of a prior bank, split into jackknife groups."""

    levels: tuple[int, ...]
    groups: list[dict[int, WeightedMoments]]
    probe_level: int
    grid: GridSpec

    def total(self, N: int) -> WeightedMoments:
        return tree_reduce([g[N] for g in self.groups], WeightedMoments.merge)

    def leave_out(self, N: int, j: int) -> WeightedMoments:
        return tree_reduce([g[N] for i, g in enumerate(self.groups) if i != j], WeightedMoments.merge)

    def summary(self, N: int) -> MomentSummary:
        return MomentSummary.from_moments(self.total(N), self.grid, self.probe_level)


def bank_moments(
    bank: PriorBank,
    model: ForwardModel,
    noise: NoiseModel | None,
    y: np.ndarray | None,
    levels: Sequence[int],
    probe_level: int = 8,
    chunk_size: int = 256,
    n_groups: int = 20,
    batch: int = 16,
    threads: int | None = None,
) -> BankMoments:
    """SNIS pressure moments at several truncation levels from one shared prior bank.

    The bank is split into fixed chunks; chunk ``i`` belongs to jackknife group
    ``i * n_groups // n_chunks``. Chunks may be evaluated concurrently but are
    reduced in index order, so results do not depend on the thread count.
    """
    levels = tuple(sorted(set(int(N) for N in levels)))
    if max(levels) > bank.spec.N:
        raise ValueError(f"level {max(levels)} exceeds bank level {bank.spec.N}")
    if model.grid.d != bank.spec.d:
        raise ValueError("bank and model dimensions differ")
    spans = list(bank.chunks(chunk_size))
    n_groups = max(1, min(n_groups, len(spans)))
    dim = 2 * len(kl_modes(model.grid.d, probe_level))
    groups = [{N: WeightedMoments(model.grid.shape, dim) for N in levels} for _ in range(n_groups)]
    threads = thread_count() if threads is None else threads

    def work(span):
        return _chunk_levels(bank, model, noise, y, levels, probe_level, span[0], span[1], batch)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for wave in range(0, len(spans), threads):
            part = spans[wave:wave + threads]
            for offset, result in enumerate(pool.map(work, part)):
                g = (wave + offset) * n_groups // len(spans)
                for N in levels:
                    groups[g][N] = groups[g][N].merge(result[N])
    return BankMoments(levels, groups, probe_level, model.grid)


def bank_observations(
    bank: PriorBank,
    model: ForwardModel,
    N: int | None = None,
    extra: ObservationSetup | None = None,
    batch: int = 16,
    threads: int | None = None,
    chunk_size: int = 256,
) -> tuple[np.ndarray, np.ndarray | None]:
    """``G(P^N u_i)`` for every bank draw (and optional extra functionals of p)."""
    grid = model.grid
    N = bank.spec.N if N is None else N
    sub = bank.spec.with_level(N)
    mask = level_mask(grid.d, bank.spec.N, N)
    synth = _synthesizer(sub, grid)
    threads = thread_count() if threads is None else threads

    def work(span):
        coeffs = bank.chunk(*span)[:, mask]
        gs, es = [], []
        for b0 in range(0, coeffs.shape[0], batch):
            p = model.pressure(synth(coeffs[b0:b0 + batch]))
            gs.append(observe_array(p, model.setup))
            if extra is not None:
                es.append(observe_array(p, extra))
        return np.concatenate(gs), (np.concatenate(es) if extra is not None else None)

    spans = list(bank.chunks(chunk_size))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(work, spans))
    g = np.concatenate([r[0] for r in results])
    e = np.concatenate([r[1] for r in results]) if extra is not None else None
    return g, e


# --------------------------------------------------------------------------
# weak-error study


@dataclass(frozen=True)
class WeakErrorRow:
    N: int
    e_mean_h1: float
    e_cov_opnorm: float
    mc_std_error: float
    ess: float
    cov_std_error: float = 0.0
    reliable: bool = True


@dataclass
class WeakErrorTable:
    rows: list[WeakErrorRow]
    N_ref: int
    method: str = "snis"

    def __post_init__(self):
        Ns = [r.N for r in self.rows]
        if any(b <= a for a, b in zip(Ns, Ns[1:])):
            raise ValueError("weak-error rows must have strictly increasing N")

    @property
    def N(self) -> np.ndarray:
        return np.array([r.N for r in self.rows])

    @property
    def e_mean(self) -> np.ndarray:
        return np.array([r.e_mean_h1 for r in self.rows])

    @property
    def e_cov(self) -> np.ndarray:
        return np.array([r.e_cov_opnorm for r in self.rows])

    def mean_rate(self) -> RateFit:
        return fit_rate(self.N, self.e_mean)

    def to_csv(self, path: str | PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N", "e_mean_h1", "e_cov_opnorm", "mc_std_error", "ess", "reliable"])
            for r in self.rows:
                w.writerow([r.N, repr(r.e_mean_h1), repr(r.e_cov_opnorm), repr(r.mc_std_error), repr(r.ess), int(r.reliable)])


def _errors(a: WeightedMoments, b: WeightedMoments, grid: GridSpec) -> tuple[float, float]:
    e_mean = float(h1_norm_array(a.mean_field() - b.mean_field(), grid))
    e_cov = float(np.linalg.norm(a.covariance() - b.covariance(), 2))
    return e_mean, e_cov


def _jackknife(values: np.ndarray) -> float:
    g = values.size
    return float(math.sqrt((g - 1) / g * np.sum((values - values.mean()) ** 2)))


def weak_error_study(
    prior: PriorSpec,
    model: ForwardModel,
    noise: NoiseModel,
    y: np.ndarray,
    N_list: Sequence[int],
    n_samples: int,
    method: str = "snis",
    probe_level: int = 8,
    pcn: PcnConfig | None = None,
    **bank_kwargs,
) -> WeakErrorTable:
    """Weak errors of posterior pressure mean and covariance against level ``prior.N``.

    ``prior.N`` is the reference level and ``prior.seed`` the shared seed.
    With ``method="snis"`` every level reweights the same prior bank and the
    Monte Carlo error is a delete-one-group jackknife over the bank. With
    ``method="pcn"`` each level runs its own chain from the same seed and the
    error is ``sqrt(tr C_N / ESS_N + tr C_ref / ESS_ref)`` on the probe subspace.
    """
    N_ref = prior.N
    N_list = sorted(int(N) for N in N_list)
    if N_list and N_list[-1] > N_ref:
        raise ValueError(f"reference level {N_ref} must be >= every study level")
    levels = tuple(sorted(set(N_list) | {N_ref}))
    grid = model.grid
    rows = []
    if method == "snis":
        bank = PriorBank(prior, n_samples)
        bm = bank_moments(bank, model, noise, y, levels, probe_level, **bank_kwargs)
        ref = bm.total(N_ref)
        G = len(bm.groups)
        ref_loo = [bm.leave_out(N_ref, j) for j in range(G)]
        for N in N_list:
            tot = bm.total(N)
            e_mean, e_cov = _errors(tot, ref, grid)
            if G > 1 and N != N_ref:
                loo = np.array([_errors(bm.leave_out(N, j), ref_loo[j], grid) for j in range(G)])
                se_mean, se_cov = _jackknife(loo[:, 0]), _jackknife(loo[:, 1])
            else:
                se_mean = se_cov = 0.0
            ess = min(tot.ess, ref.ess)
            rows.append(WeakErrorRow(N, e_mean, e_cov, se_mean, ess, se_cov, ess >= MIN_ESS))
    elif method == "pcn":
        if pcn is None:
            raise ValueError("method 'pcn' needs a PcnConfig")
        results = {N: run_chain(pcn, prior.with_level(N), model, noise, y, probe_level) for N in levels}
        ref = results[N_ref].summary
        for N in N_list:
            s = results[N].summary
            e_mean = float(h1_norm_array(s.mean_pressure.values - ref.mean_pressure.values, grid))
            e_cov = float(np.linalg.norm(s.probe_covariance - ref.probe_covariance, 2))
            if N == N_ref:
                se = 0.0
            else:
                se = math.sqrt(np.trace(s.probe_covariance) / s.ess_estimate + np.trace(ref.probe_covariance) / ref.ess_estimate)
            ess = min(s.ess_estimate, ref.ess_estimate)
            rows.append(WeakErrorRow(N, e_mean, e_cov, se, ess, float("nan"), ess >= MIN_ESS))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WeakErrorTable(rows, N_ref, method)


# --------------------------------------------------------------------------
# Hellinger distance between posteriors for two data vectors


def hellinger_estimate(y: np.ndarray, y_prime: np.ndarray, g_values: np.ndarray, noise: NoiseModel, min_ess: float = MIN_ESS) -> float:
    """Hellinger distance between the posteriors for ``y`` and ``y'`` from shared prior draws.

    ``g_values`` holds ``G(u_i)`` for prior draws ``u_i``. Uses
    ``d^2 = 1 - mean(exp(-(Phi + Phi')/2)) / sqrt(Z Z')``, which is the exact
    Hellinger distance between the two reweighted empirical measures, so the
    result lies in [0, 1] and is symmetric.
    """
    g_values = np.asarray(g_values)
    if g_values.shape[0] < HELLINGER_MIN_SAMPLES:
        raise ValueError(f"need at least {HELLINGER_MIN_SAMPLES} prior samples, got {g_values.shape[0]}")
    y = np.asarray(y, dtype=np.float64)
    y_prime = np.asarray(y_prime, dtype=np.float64)
    if np.array_equal(y, y_prime):
        return 0.0
    phi = misfit(g_values, y, noise)
    phi_p = misfit(g_values, y_prime, noise)
    lz = logsumexp(-phi)
    lz_p = logsumexp(-phi_p)
    lcross = logsumexp(-0.5 * (phi + phi_p))
    d2 = 1.0 - math.exp(lcross - 0.5 * (lz + lz_p))
    ess = min(_ess_from_log(-phi), _ess_from_log(-phi_p))
    if ess < min_ess:
        warnings.warn(f"Hellinger estimate unreliable: weight ESS {ess:.1f} < {min_ess}", UnreliableEstimateWarning, stacklevel=2)
    return math.sqrt(min(1.0, max(0.0, d2)))


def _ess_from_log(lw: np.ndarray) -> float:
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / np.dot(w, w))


def hellinger_sweep(
    y: np.ndarray, direction: np.ndarray, deltas: Sequence[float], g_values: np.ndarray, noise: NoiseModel
) -> tuple[np.ndarray, RateFit]:
    """Distances ``d(y, y + delta * direction)`` and their log-log fit against delta."""
    direction = np.asarray(direction, dtype=np.float64)
    dists = np.array([hellinger_estimate(y, y + dl * direction, g_values, noise) for dl in deltas])
    return dists, fit_rate(np.asarray(deltas, dtype=np.float64), dists)
