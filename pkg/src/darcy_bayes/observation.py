"""Observation operator, Gaussian misfit potential and synthetic data."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from os import PathLike
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.linalg import solve_triangular

from .fieldio import field_read
from .fields import Field, GridSpec
from .solver import ProblemData, SolverConfig, assemble_rhs, solve_batch


@dataclass(frozen=True)
class PointEval:
    """Pointwise evaluation of p at ``x``, by multilinear interpolation."""

    x: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class WeightedAverage:
    """``h^d * sum_j w_j p_j``, the grid quadrature of ``w p``."""

    w: Field


Functional = Union[PointEval, WeightedAverage]


def _interpolation_row(x: Sequence[float], grid: GridSpec) -> np.ndarray:
    row = np.zeros(grid.shape)
    lo, frac = [], []
    for xi in x:
        s = xi / grid.h
        i0 = math.floor(s)
        lo.append(i0 % grid.n)
        frac.append(s - i0)
    for corner in np.ndindex(*([2] * grid.d)):
        weight = 1.0
        idx = []
        for axis, c in enumerate(corner):
            weight *= frac[axis] if c else 1.0 - frac[axis]
            idx.append((lo[axis] + c) % grid.n)
        row[tuple(idx)] += weight
    return row.ravel()


@dataclass(frozen=True, eq=False)
class ObservationSetup:
    """Ordered linear functionals ``l_1, ..., l_K`` of the pressure on ``grid``."""

    grid: GridSpec
    functionals: tuple[Functional, ...]
    matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        functionals = tuple(self.functionals)
        if not functionals:
            raise ValueError("an observation setup needs at least one functional")
        rows = []
        for j, fn in enumerate(functionals):
            if isinstance(fn, PointEval):
                x = tuple(float(c) for c in fn.x)
                if len(x) != self.grid.d:
                    raise ValueError(f"functional {j}: point has {len(x)} coordinates, grid is {self.grid.d}-dimensional")
                if not all(0.0 <= c < 2.0 * math.pi for c in x):
                    raise ValueError(f"functional {j}: point {x} lies outside [0, 2pi)^{self.grid.d}")
                rows.append(_interpolation_row(x, self.grid))
            elif isinstance(fn, WeightedAverage):
                if fn.w.grid != self.grid:
                    raise ValueError(f"functional {j}: weight field lives on a different grid")
                rows.append(self.grid.h**self.grid.d * fn.w.values.ravel())
            else:
                raise TypeError(f"functional {j}: unsupported type {type(fn).__name__}")
        object.__setattr__(self, "functionals", functionals)
        matrix = np.array(rows)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def points(cls, grid: GridSpec, xs) -> "ObservationSetup":
        return cls(grid, tuple(PointEval(tuple(np.atleast_1d(x))) for x in xs))

    @property
    def K(self) -> int:
        return len(self.functionals)


def observe_array(p: np.ndarray, setup: ObservationSetup) -> np.ndarray:
    """Batched observation: ``p`` shaped ``(..., *grid.shape)`` gives ``(..., K)``."""
    grid = setup.grid
    batch = np.shape(p)[: np.ndim(p) - grid.d]
    return (np.reshape(p, batch + (grid.size,)) @ setup.matrix.T).reshape(batch + (setup.K,))


def observe(p: Field, setup: ObservationSetup) -> np.ndarray:
    if p.grid != setup.grid:
        raise ValueError("pressure and observation setup live on different grids")
    return observe_array(p.values, setup)


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """Centred Gaussian noise with SPD covariance ``gamma = L L^T`` (L lower triangular)."""

    gamma: np.ndarray
    factor: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gamma = np.atleast_2d(np.asarray(self.gamma, dtype=np.float64))
        if gamma.shape[0] != gamma.shape[1]:
            raise ValueError(f"noise covariance must be square, got {gamma.shape}")
        scale = max(1.0, float(np.max(np.abs(gamma))))
        if np.max(np.abs(gamma - gamma.T)) > 1e-12 * scale:
            raise ValueError("noise covariance is not symmetric")
        try:
            L = np.linalg.cholesky(gamma)
        except np.linalg.LinAlgError:
            raise ValueError("noise covariance is not positive definite") from None
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "factor", L)

    @classmethod
    def isotropic(cls, K: int, sigma: float) -> "NoiseModel":
        return cls(sigma**2 * np.eye(K))

    @property
    def K(self) -> int:
        return self.gamma.shape[0]

    def whiten(self, r: np.ndarray) -> np.ndarray:
        """``L^-1 r`` along the last axis, so ``|whiten(r)|^2 = r^T gamma^-1 r``."""
        r = np.asarray(r, dtype=np.float64)
        flat = r.reshape(-1, self.K).T
        return solve_triangular(self.factor, flat, lower=True).T.reshape(r.shape)


@dataclass(frozen=True)
class PotentialValue:
    phi: float
    residual: np.ndarray


def misfit(g: np.ndarray, y: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """``0.5 |gamma^-1/2 (y - g)|^2``, batched over leading axes of ``g``."""
    w = noise.whiten(np.asarray(y) - np.asarray(g))
    return 0.5 * np.sum(w**2, axis=-1)


class ForwardModel:
    """Source data, observation setup and solver settings bundled into ``u -> G(u)``."""

    def __init__(self, data: ProblemData, setup: ObservationSetup, cfg: SolverConfig = SolverConfig()):
        if data.grid != setup.grid:
            raise ValueError("problem data and observation setup live on different grids")
        self.data = data
        self.setup = setup
        self.cfg = cfg
        self.grid = data.grid
        self.rhs = assemble_rhs(data).values

    def pressure(self, u: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        """Batched pressures for log-permeabilities ``u`` shaped ``(B, *grid.shape)``."""
        p, _ = solve_batch(u, self.rhs, self.grid, self.cfg, x0=x0)
        return p

    def __call__(self, u: Field) -> np.ndarray:
        return observe_array(self.pressure(u.values[None])[0], self.setup)


def forward_map(u: Field, data: ProblemData, setup: ObservationSetup, cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """``G(u) = (l_1(p), ..., l_K(p))`` with ``p`` the discrete Darcy pressure."""
    return ForwardModel(data, setup, cfg)(u)


def potential(
    u: Field,
    data: ProblemData,
    setup: ObservationSetup,
    noise: NoiseModel,
    y: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
) -> PotentialValue:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (setup.K,) or noise.K != setup.K:
        raise ValueError(f"data length {y.shape}, noise size {noise.K} and K={setup.K} disagree")
    residual = y - forward_map(u, data, setup, cfg)
    return PotentialValue(float(misfit(0.0, residual, noise)), residual)


def generate_data(
    u_true: Field,
    data: ProblemData,
    setup: ObservationSetup,
    noise: NoiseModel,
    rng: np.random.Generator,
    cfg: SolverConfig = SolverConfig(),
) -> np.ndarray:
    """Synthetic data ``y = G(u_true) + L xi`` with ``xi`` standard normal."""
    g = forward_map(u_true, data, setup, cfg)
    return g + noise.factor @ rng.standard_normal(setup.K)


def potential_data_lipschitz_ratio(g_u: np.ndarray, y1: np.ndarray, y2: np.ndarray, noise: NoiseModel) -> float:
    """``|Phi(u; y1) - Phi(u; y2)| / |y1 - y2|`` given ``G(u)``."""
    y1 = np.asarray(y1, dtype=np.float64)
    y2 = np.asarray(y2, dtype=np.float64)
    dist = float(np.linalg.norm(y1 - y2))
    if dist == 0.0:
        raise ValueError("ratio undefined for identical data vectors")
    return abs(float(misfit(g_u, y1, noise)) - float(misfit(g_u, y2, noise))) / dist


def potential_data_lipschitz_check(model: ForwardModel, noise: NoiseModel, u: Field, y1, y2) -> float:
    return potential_data_lipschitz_ratio(model(u), y1, y2, noise)


def observation_bound_ratios(model: ForwardModel, v: Field, alphas: Sequence[float]) -> np.ndarray:
    """``|G(alpha v)| / exp(2 ||alpha v||_inf)`` over an amplitude sweep."""
    us = np.stack([a * v.values for a in alphas])
    g = observe_array(model.pressure(us), model.setup)
    sups = np.max(np.abs(us.reshape(len(alphas), -1)), axis=1)
    return np.linalg.norm(g, axis=1) / np.exp(2.0 * sups)


def observation_lipschitz_ratio(model: ForwardModel, u1: Field, u2: Field) -> float:
    """``|G(u1) - G(u2)| / (exp(4 max ||u_i||_inf) ||u1 - u2||_inf)``."""
    g = observe_array(model.pressure(np.stack([u1.values, u2.values])), model.setup)
    m = max(np.abs(u1.values).max(), np.abs(u2.values).max())
    du = np.abs(u1.values - u2.values).max()
    return float(np.linalg.norm(g[0] - g[1]) / (math.exp(4.0 * m) * du))


def read_setup(path: str | PathLike, grid: GridSpec) -> ObservationSetup:
    """Parse ``point,x1[,x2[,x3]]`` / ``weight,<field file>`` lines.

    Weight paths are resolved relative to the setup file.
    """
    path = Path(path)
    functionals: list[Functional] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            kind = row[0].strip()
            if kind == "point":
                functionals.append(PointEval(tuple(float(c) for c in row[1:])))
            elif kind == "weight":
                wpath = Path(row[1].strip())
                if not wpath.is_absolute():
                    wpath = path.parent / wpath
                functionals.append(WeightedAverage(field_read(wpath)))
            else:
                raise ValueError(f"{path}:{lineno}: unknown functional kind {kind!r}")
    return ObservationSetup(grid, tuple(functionals))


def write_setup(setup: ObservationSetup, path: str | PathLike, weight_paths: Sequence[str] = ()) -> None:
    """Write a setup file; ``weight_paths`` name the already-written weight fields in order."""
    weights = iter(weight_paths)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for fn in setup.functionals:
            if isinstance(fn, PointEval):
                w.writerow(["point"] + [repr(float(c)) for c in fn.x])
            else:
                w.writerow(["weight", next(weights)])


def read_matrix_csv(path: str | PathLike) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = [[float(c) for c in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=np.float64)


def write_matrix_csv(a: np.ndarray, path: str | PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(a):
            w.writerow([repr(float(c)) for c in row])


def read_vector_csv(path: str | PathLike) -> np.ndarray:
    return read_matrix_csv(path).reshape(-1)


def write_vector_csv(y: np.ndarray, path: str | PathLike) -> None:
    write_matrix_csv(np.asarray(y).reshape(-1, 1), path)
