"""``darcy-bayes <subcommand> --config <path> [--out <dir>] [--seed <u64>]``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
Failures print one line to stderr of the form
``darcy-bayes: error=<config|input|numerical> key=<key> msg=<text>``.
Every artifact is listed in ``manifest.csv`` in the output directory, with
the seed that produced it (empty for deterministic outputs).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .fieldio import FieldDecodeError, field_read, field_write
from .fields import Field, GridSpec, l2_norm_array, sup_norm
from .observation import (
    ForwardModel,
    NoiseModel,
    ObservationSetup,
    PointEval,
    WeightedAverage,
    generate_data,
    read_matrix_csv,
    read_setup,
    read_vector_csv,
    write_matrix_csv,
    write_vector_csv,
)
from .posterior import (
    HELLINGER_MIN_SAMPLES,
    PcnConfig,
    PriorBank,
    bank_observations,
    hellinger_estimate,
    run_chain,
    weak_error_study,
)
from .prior import KLSample, PriorSpec, expected_l2_energy, kl_variance, sample_prior, write_kl_sample
from .problems import manufactured
from .solver import ProblemData, SolverConfig, SolverError, solve
from .truncation import (
    dirichlet_integral,
    dn_l1_norm,
    fit_rate,
    truncation_sup_error,
    weierstrass_field,
    weierstrass_levels,
    weierstrass_tail,
    write_rate_csv,
)

MANUFACTURED = "manufactured:"


class InputError(Exception):
    def __init__(self, key: str, message: str):
        super().__init__(message)
        self.key = key


class Outputs:
    """Output directory plus the manifest of everything written to it."""

    def __init__(self, root: Path):
        self.root = root
        self.entries: list[tuple[str, str, str]] = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str, kind: str, seed: int | None = None) -> Path:
        self.entries.append((name, kind, "" if seed is None else str(seed)))
        return self.root / name

    def close(self) -> None:
        with open(self.root / "manifest.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["artifact", "kind", "seed"])
            w.writerows(self.entries)


# --------------------------------------------------------------------------
# building blocks from the config


def _grid(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec(cfg["grid.d"], cfg["grid.n"])


def _read_field(cfg: ExperimentConfig, key: str, value: str, grid: GridSpec) -> Field:
    p = Path(value)
    p = p if p.is_absolute() else cfg.base / p
    try:
        f = field_read(p)
    except FileNotFoundError:
        raise InputError(key, f"field file not found: {p}") from None
    except FieldDecodeError as exc:
        raise InputError(key, f"{p}: {exc}") from None
    if f.grid != grid:
        raise InputError(key, f"{p} holds a d={f.grid.d}, n={f.grid.n} field, config grid is d={grid.d}, n={grid.n}")
    return f


def _problem(cfg: ExperimentConfig, grid: GridSpec) -> ProblemData:
    f = cfg["problem.f"]
    if f.startswith(MANUFACTURED):
        try:
            data = manufactured(f[len(MANUFACTURED):], grid).data
        except ValueError as exc:
            raise ConfigError("problem.f", str(exc)) from None
    else:
        data = ProblemData(_read_field(cfg, "problem.f", f, grid))
    if cfg["problem.g"] is not None:
        g = tuple(_read_field(cfg, "problem.g", p, grid) for p in cfg["problem.g"])
        data = ProblemData(data.f, g)
    return data


def _solver(cfg: ExperimentConfig) -> SolverConfig:
    return SolverConfig(rel_tol=cfg["solver.rel_tol"], preconditioner=cfg["solver.preconditioner"])


def _truth(cfg: ExperimentConfig, grid: GridSpec) -> tuple[Field, KLSample | None]:
    spec = cfg["truth.u"]
    if spec == "prior":
        N = cfg["truth.N"] if cfg["truth.N"] is not None else cfg.N_ref
        prior = PriorSpec(cfg["prior.s"], N, seed=cfg["truth.seed"], d=grid.d)
        sample, u = sample_prior(prior, grid)
        return u, sample
    if spec.startswith(MANUFACTURED):
        try:
            return manufactured(spec[len(MANUFACTURED):], grid).u, None
        except ValueError as exc:
            raise ConfigError("truth.u", str(exc)) from None
    return _read_field(cfg, "truth.u", spec, grid), None


def _setup(cfg: ExperimentConfig, grid: GridSpec) -> ObservationSetup:
    if cfg["observation.file"] is not None:
        p = cfg.path("observation.file")
        try:
            return read_setup(p, grid)
        except FileNotFoundError as exc:
            raise InputError("observation.file", f"file not found: {exc.filename}") from None
        except (ValueError, FieldDecodeError) as exc:
            raise InputError("observation.file", f"{p}: {exc}") from None
    functionals = [PointEval(tuple(x)) for x in cfg["observation.points"] or []]
    functionals += [WeightedAverage(_read_field(cfg, "observation.weights", w, grid)) for w in cfg["observation.weights"] or []]
    if not functionals:
        raise ConfigError("observation.points", "no observation functionals configured")
    return ObservationSetup(grid, tuple(functionals))


def _noise(cfg: ExperimentConfig, K: int) -> NoiseModel:
    if cfg["observation.gamma"] is None:
        return NoiseModel.isotropic(K, cfg["observation.sigma"])
    p = cfg.path("observation.gamma")
    try:
        gamma = read_matrix_csv(p)
    except FileNotFoundError:
        raise InputError("observation.gamma", f"file not found: {p}") from None
    if gamma.shape != (K, K):
        raise ConfigError("observation.gamma", f"{p} is {gamma.shape}, need {(K, K)}")
    try:
        return NoiseModel(gamma)
    except ValueError as exc:
        raise ConfigError("observation.gamma", str(exc)) from None


def _data(cfg: ExperimentConfig, grid: GridSpec, problem: ProblemData, setup: ObservationSetup, noise: NoiseModel):
    if cfg["observation.y"] is not None:
        p = cfg.path("observation.y")
        try:
            y = read_vector_csv(p)
        except FileNotFoundError:
            raise InputError("observation.y", f"file not found: {p}") from None
        if y.shape != (setup.K,):
            raise ConfigError("observation.y", f"{p} has {y.size} values, need K={setup.K}")
        return y, None
    u, _ = _truth(cfg, grid)
    y = generate_data(u, problem, setup, noise, np.random.default_rng(cfg["observation.noise_seed"]), _solver(cfg))
    return y, u


# --------------------------------------------------------------------------
# subcommands


def cmd_sample_prior(cfg: ExperimentConfig, out: Outputs) -> None:
    grid = _grid(cfg)
    spec = PriorSpec(cfg["prior.s"], cfg.N_ref, seed=cfg["seed"], d=grid.d)
    bank = PriorBank(spec, cfg["sample.count"])
    coeffs = bank.chunk(0, bank.size)
    energies = []
    for i in range(bank.size):
        sample = KLSample(spec, grid, coeffs[i])
        u = sample.to_field()
        energies.append(float(l2_norm_array(u.values, grid)) ** 2)
        field_write(u, out.path(f"prior_{i:03d}.elfd", "field", spec.seed + i))
        write_kl_sample(sample, out.path(f"prior_{i:03d}_kl.csv", "kl_sample", spec.seed + i))
    sigma2 = kl_variance(spec.modes, spec.s)
    empirical = np.mean((coeffs**2).mean(axis=0), axis=1) * sigma2
    with open(out.path("variance_report.csv", "variance_report", spec.seed), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"k_{i + 1}" for i in range(grid.d)] + ["expected", "empirical"])
        for k, e, m in zip(spec.modes, np.atleast_1d(sigma2), empirical):
            w.writerow([int(c) for c in k] + [repr(float(e)), repr(float(m))])
    energies = np.array(energies)
    se = float(energies.std(ddof=1) / math.sqrt(energies.size)) if energies.size > 1 else float("nan")
    with open(out.path("energy.csv", "energy_report", spec.seed), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["expected_l2_energy", "empirical_l2_energy", "std_error"])
        w.writerow([repr(expected_l2_energy(spec)), repr(float(energies.mean())), repr(se)])


def cmd_solve(cfg: ExperimentConfig, out: Outputs) -> None:
    grid = _grid(cfg)
    problem = _problem(cfg, grid)
    u, _ = _truth(cfg, grid)
    p, report = solve(u, problem, _solver(cfg))
    field_write(p, out.path("pressure.elfd", "field"))
    field_write(u, out.path("u.elfd", "field", cfg["truth.seed"] if cfg["truth.u"] == "prior" else None))
    header = ["iterations", "final_relative_residual", "converged"]
    row = [report.iterations, repr(report.final_relative_residual), int(report.converged)]
    f, t = cfg["problem.f"], cfg["truth.u"]
    if f.startswith(MANUFACTURED) and f == t and cfg["problem.g"] is None:
        err = sup_norm(p - manufactured(f[len(MANUFACTURED):], grid).p_exact)
        header.append("sup_error")
        row.append(repr(err))
        print(f"sup_error={err!r}")
    with open(out.path("solve_report.csv", "solve_report"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerow(row)


def cmd_generate_data(cfg: ExperimentConfig, out: Outputs) -> None:
    grid = _grid(cfg)
    problem = _problem(cfg, grid)
    setup = _setup(cfg, grid)
    noise = _noise(cfg, setup.K)
    u, sample = _truth(cfg, grid)
    y = generate_data(u, problem, setup, noise, np.random.default_rng(cfg["observation.noise_seed"]), _solver(cfg))
    write_vector_csv(y, out.path("y.csv", "data", cfg["observation.noise_seed"]))
    truth_seed = cfg["truth.seed"] if sample is not None else None
    field_write(u, out.path("u_true.elfd", "field", truth_seed))
    if sample is not None:
        write_kl_sample(sample, out.path("u_true_kl.csv", "kl_sample", truth_seed))


def _posterior_inputs(cfg: ExperimentConfig):
    grid = _grid(cfg)
    problem = _problem(cfg, grid)
    setup = _setup(cfg, grid)
    noise = _noise(cfg, setup.K)
    y, _ = _data(cfg, grid, problem, setup, noise)
    return grid, ForwardModel(problem, setup, _solver(cfg)), noise, y


def cmd_run_mcmc(cfg: ExperimentConfig, out: Outputs) -> None:
    grid, model, noise, y = _posterior_inputs(cfg)
    prior = PriorSpec(cfg["prior.s"], cfg.N_list[-1], seed=cfg["seed"], d=grid.d)
    pcn = PcnConfig(cfg["mcmc.beta"], cfg["mcmc.steps"], cfg["mcmc.burn_in"], cfg["mcmc.thin"], cfg["seed"])
    result = run_chain(pcn, prior, model, noise, y, cfg["study.probe_level"], keep_samples=cfg["mcmc.save_samples"])
    seed = cfg["seed"]
    field_write(result.summary.mean_pressure, out.path("mean_pressure.elfd", "field", seed))
    write_matrix_csv(result.summary.probe_covariance, out.path("probe_covariance.csv", "probe_covariance", seed))
    diag = result.diagnostics
    with open(out.path("diagnostics.csv", "diagnostics", seed), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["acceptance_rate", "proposed", "failed", "kept", "tau_phi", "ess_phi", "warning"])
        w.writerow([repr(diag["acceptance_rate"]), diag["proposed"], diag["failed"], diag["kept"],
                    repr(diag["tau_phi"]), repr(diag["ess_phi"]), diag["warning"]])
    if diag["warning"]:
        print(f"warning: {diag['warning']}", file=sys.stderr)
    if result.samples is not None:
        for i, c in enumerate(result.samples):
            write_kl_sample(KLSample(prior, grid, c), out.path(f"chain_{i:05d}_kl.csv", "kl_sample", seed))


def cmd_weak_error(cfg: ExperimentConfig, out: Outputs) -> None:
    grid, model, noise, y = _posterior_inputs(cfg)
    prior = PriorSpec(cfg["prior.s"], cfg.N_ref, seed=cfg["seed"], d=grid.d)
    method = cfg["study.method"]
    kwargs = {}
    pcn = None
    if method == "snis":
        kwargs["chunk_size"] = cfg["snis.chunk_size"]
    else:
        pcn = PcnConfig(cfg["mcmc.beta"], cfg["mcmc.steps"], cfg["mcmc.burn_in"], cfg["mcmc.thin"], cfg["seed"])
    table = weak_error_study(prior, model, noise, y, cfg.N_list, cfg["snis.n_samples"], method,
                             cfg["study.probe_level"], pcn, **kwargs)
    path = out.path("weak_error.csv", "weak_error_table", cfg["seed"])
    table.to_csv(path)
    N = [r.N for r in table.rows if r.N != table.N_ref]
    e = [r.e_mean_h1 for r in table.rows if r.N != table.N_ref]
    if len(N) >= 3 and all(x > 0 for x in e):
        fit = fit_rate(N, e)
        with open(path, "a") as fh:
            fh.write(f"# slope={fit.slope!r} intercept={fit.intercept!r} residual={fit.residual!r}\n")


def cmd_hellinger(cfg: ExperimentConfig, out: Outputs) -> None:
    grid, model, noise, y = _posterior_inputs(cfg)
    if cfg["snis.n_samples"] < HELLINGER_MIN_SAMPLES:
        raise ConfigError("snis.n_samples", f"Hellinger estimates need at least {HELLINGER_MIN_SAMPLES} samples")
    prior = PriorSpec(cfg["prior.s"], cfg.N_ref, seed=cfg["seed"], d=grid.d)
    g, _ = bank_observations(PriorBank(prior, cfg["snis.n_samples"]), model, chunk_size=cfg["snis.chunk_size"])
    if cfg["hellinger.direction"] is None:
        direction = np.full(len(y), 1.0 / math.sqrt(len(y)))
    else:
        direction = np.asarray(cfg["hellinger.direction"])
        if direction.shape != y.shape:
            raise ConfigError("hellinger.direction", f"need {len(y)} components")
    deltas = cfg["hellinger.deltas"]
    dists = [hellinger_estimate(y, y + dl * direction, g, noise) for dl in deltas]
    fit = fit_rate(deltas, dists) if len(deltas) >= 3 and min(dists) > 0 else None
    write_rate_csv(out.path("hellinger.csv", "hellinger_sweep", cfg["seed"]), "d_hell", deltas, dists, fit, x_name="delta")


def cmd_kernel_checks(cfg: ExperimentConfig, out: Outputs) -> None:
    with open(out.path("kernel_integral.csv", "kernel_report"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "integral", "error"])
        for N in cfg["kernel.N_list"]:
            v = dirichlet_integral(N)
            w.writerow([N, repr(v), repr(v - math.pi)])
    Ns = cfg["kernel.l1_N_list"]
    norms = [dn_l1_norm(N) for N in Ns]
    with open(out.path("kernel_l1.csv", "kernel_report"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "l1_norm", "l1_over_log_N"])
        for N, v in zip(Ns, norms):
            w.writerow([N, repr(v), repr(v / math.log(N))])
    t = cfg["kernel.t"]
    grid = GridSpec(1, cfg["kernel.n"])
    J = weierstrass_levels(grid)
    W = weierstrass_field(grid, t, J)
    TN = cfg["kernel.trunc_N_list"]
    errs = [truncation_sup_error(W, N) for N in TN]
    fit = fit_rate(TN, errs) if len(TN) >= 3 else None
    write_rate_csv(out.path("truncation.csv", "truncation_study"), "sup_error", TN, errs, fit)
    with open(out.path("truncation_oracle.csv", "truncation_study"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "sup_error", "tail_sum"])
        for N, e in zip(TN, errs):
            w.writerow([N, repr(e), repr(weierstrass_tail(t, N, J))])


COMMANDS = {
    "sample-prior": cmd_sample_prior,
    "solve": cmd_solve,
    "generate-data": cmd_generate_data,
    "run-mcmc": cmd_run_mcmc,
    "weak-error": cmd_weak_error,
    "hellinger": cmd_hellinger,
    "kernel-checks": cmd_kernel_checks,
}


def _fail(kind: str, key: str, msg: str, code: int) -> int:
    msg = " ".join(str(msg).split())
    print(f"darcy-bayes: error={kind} key={key} msg={msg}", file=sys.stderr)
    return code


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="darcy-bayes", description="Bayesian inversion for periodic Darcy flow.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="flat 'section.key = value' file")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--seed", type=_u64, help="master seed (overrides seed)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    overrides = {} if args.seed is None else {"seed": args.seed}
    try:
        cfg = cfgmod.load(args.config, overrides)
        root = Path(args.out) if args.out else cfg.path("output.dir")
        out = Outputs(root)
        COMMANDS[args.command](cfg, out)
        out.close()
    except ConfigError as exc:
        return _fail("config", exc.key, exc.message, 2)
    except InputError as exc:
        return _fail("input", exc.key, str(exc), 2)
    except SolverError as exc:
        return _fail("numerical", "solver", str(exc), 3)
    except FloatingPointError as exc:
        return _fail("numerical", "-", str(exc), 3)
    return 0


if __name__ == "__main__":
    sys.exit(main())
