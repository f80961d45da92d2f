"""Matrix-free solver for -div(exp(u) grad p) = f + div g on the periodic grid.

Discretization is conservative second-order finite differences in flux form.
Along axis i the face coefficient between nodes j and j+e_i is the geometric
mean ``exp((u_j + u_{j+e_i})/2)``, the flux is ``a (p_{j+e_i} - p_j)/h`` and the
operator is minus the backward difference of the flux. The pressure is fixed
by a zero-mean gauge (the torus has no boundary), so the right-hand side is
projected onto mean-free fields before solving.

The linear system is solved by preconditioned conjugate gradients on the
mean-free subspace. The default preconditioner is the spectral pseudo-inverse
``L^+`` of the constant-coefficient discrete Laplacian, symmetrically scaled by
``exp(-u/2)`` (``"scaled"``); ``"laplacian"`` uses ``L^+`` alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.fft as sfft

from . import _kernels
from .fields import Field, GridSpec, h1_norm_array, hminus1_norm, l2_norm

PRECONDITIONERS = ("scaled", "laplacian")


@dataclass(frozen=True, eq=False)
class ProblemData:
    """Source ``f`` and flux source components ``g`` (empty means g = 0)."""

    f: Field
    g: tuple[Field, ...] = ()

    def __post_init__(self):
        g = tuple(self.g)
        if g and len(g) != self.f.grid.d:
            raise ValueError(f"flux source needs {self.f.grid.d} components, got {len(g)}")
        for gi in g:
            if gi.grid != self.f.grid:
                raise ValueError("source and flux source live on different grids")
        object.__setattr__(self, "g", g)

    @property
    def grid(self) -> GridSpec:
        return self.f.grid

    def data_norm(self) -> float:
        """``||f||_{H^-1} + sum_i ||g_i||_{L2}``, the data dependence of the energy estimate."""
        return hminus1_norm(self.f) + sum(l2_norm(gi) for gi in self.g)


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    max_iter: int | None = None
    preconditioner: str = "scaled"

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.preconditioner not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.preconditioner!r}")

    def iteration_cap(self, grid: GridSpec) -> int:
        return self.max_iter if self.max_iter is not None else 10 * grid.size


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_relative_residual: float
    converged: bool


class SolverError(RuntimeError):
    """CG failed to converge or produced non-finite values; ``report`` has the details."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


@lru_cache(maxsize=None)
def _inverse_symbol(grid: GridSpec) -> np.ndarray:
    """Pseudo-inverse of the discrete Laplacian symbol on the rfft layout."""
    h = grid.h
    ks = [np.fft.fftfreq(grid.n, 1.0 / grid.n)] * (grid.d - 1) + [np.fft.rfftfreq(grid.n, 1.0 / grid.n)]
    lam = 0.0
    for axis, k in enumerate(ks):
        shape = [1] * grid.d
        shape[axis] = k.size
        lam = lam + ((2.0 - 2.0 * np.cos(k * h)) / h**2).reshape(shape)
    return np.divide(1.0, lam, out=np.zeros_like(lam), where=lam > 1e-12)


def _as_batch(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(values, dtype=np.float64).reshape((-1,) + grid.shape))


def face_coefficients(u: np.ndarray, grid: GridSpec) -> np.ndarray:
    return _kernels.face_coefficients(_as_batch(u, grid))


def apply_operator_array(u: np.ndarray, p: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Batched ``-div(exp(u) grad p)``; leading axes of ``u`` and ``p`` must agree."""
    batch = np.broadcast_shapes(np.shape(u)[: np.ndim(u) - grid.d], np.shape(p)[: np.ndim(p) - grid.d])
    u = np.broadcast_to(u, batch + grid.shape)
    p = np.broadcast_to(p, batch + grid.shape)
    coef = face_coefficients(u, grid)
    pb = _as_batch(p, grid)
    out = np.empty_like(pb)
    _kernels.flux_apply(coef, pb, out, 1.0 / grid.h**2, np.empty(pb.shape[0]))
    return out.reshape(batch + grid.shape)


def apply_operator(u: Field, p: Field) -> Field:
    """Discrete ``-div(exp(u) grad p)``; mean-free, symmetric, kernel = constants."""
    if u.grid != p.grid:
        raise ValueError("u and p live on different grids")
    return Field(u.grid, apply_operator_array(u.values, p.values, u.grid))


def divergence_array(g: Sequence[np.ndarray], grid: GridSpec) -> np.ndarray:
    """Discrete div g from face averages (g_j + g_{j+e})/2, matching the flux stencil."""
    out = 0.0
    for axis, gi in enumerate(g):
        ax = np.ndim(gi) - grid.d + axis
        out = out + (np.roll(gi, -1, axis=ax) - np.roll(gi, 1, axis=ax)) / (2.0 * grid.h)
    return out


def assemble_rhs(data: ProblemData) -> Field:
    """Discrete ``f + div g`` projected onto mean-free fields."""
    grid = data.grid
    b = data.f.values.copy()
    if data.g:
        b = b + divergence_array([gi.values for gi in data.g], grid)
    return Field(grid, b - b.mean())


# below this many grid points the pseudo-inverse is applied as a dense matrix,
# which beats FFT call overhead
DENSE_PRECONDITIONER_MAX = 512


@lru_cache(maxsize=None)
def _dense_inverse(grid: GridSpec) -> np.ndarray:
    eye = np.eye(grid.size).reshape((grid.size,) + grid.shape)
    spec = np.fft.rfftn(eye, axes=grid.axes) * _inverse_symbol(grid)
    dense = np.fft.irfftn(spec, s=grid.shape, axes=grid.axes).reshape(grid.size, grid.size)
    dense = 0.5 * (dense + dense.T)
    dense.setflags(write=False)
    return dense


class _Preconditioner:
    def __init__(self, grid: GridSpec, kind: str, u: np.ndarray):
        self.grid = grid
        self.inv = _inverse_symbol(grid)
        self.dense = _dense_inverse(grid) if grid.size <= DENSE_PRECONDITIONER_MAX else None
        self.scale = np.exp(-0.5 * u) if kind == "scaled" else None

    def __call__(self, r: np.ndarray) -> np.ndarray:
        """Apply to shaped batch ``r``; returns a fresh contiguous array."""
        axes = self.grid.axes
        if self.scale is not None:
            r = r * self.scale
        if self.dense is not None:
            z = (r.reshape(r.shape[0], -1) @ self.dense).reshape(r.shape)
        else:
            spec = sfft.rfftn(r, axes=axes, overwrite_x=self.scale is not None)
            spec *= self.inv
            z = sfft.irfftn(spec, s=self.grid.shape, axes=axes, overwrite_x=True)
        if self.scale is not None:
            z *= self.scale
        return z


def solve_batch(
    u: np.ndarray,
    rhs: np.ndarray,
    grid: GridSpec,
    cfg: SolverConfig = SolverConfig(),
    x0: np.ndarray | None = None,
    raise_on_failure: bool = True,
) -> tuple[np.ndarray, list[SolveReport]]:
    """Solve a batch of systems ``A_{u_b} p_b = rhs_b`` by PCG.

    ``u`` has shape ``(B, *grid.shape)``; ``rhs`` is either one mean-free field
    shared by the batch or a batch of them; ``x0`` optionally warm-starts.
    Each member stops independently once both its plain and preconditioned
    relative residuals are below ``cfg.rel_tol``, so a member's result does
    not depend on the rest of the batch.
    """
    ub = _as_batch(u, grid)
    B = ub.shape[0]
    shape = (B,) + grid.shape
    b = np.ascontiguousarray(np.broadcast_to(np.asarray(rhs, dtype=np.float64).reshape((-1,) + grid.shape), shape))
    inv_h2 = 1.0 / grid.h**2
    coef = _kernels.face_coefficients(ub)
    prec = _Preconditioner(grid, cfg.preconditioner, ub)

    Ap = np.empty(shape)
    pAp = np.empty(B)
    if x0 is None:
        x = np.zeros(shape)
        r = b.copy()
    else:
        x = np.array(np.broadcast_to(np.asarray(x0, dtype=np.float64).reshape((-1,) + grid.shape), shape))
        _kernels.flux_apply(coef, x, Ap, inv_h2, pAp)
        r = b - Ap

    def dot(v, w):
        return np.einsum("ij,ij->i", v.reshape(B, -1), w.reshape(B, -1))

    bb = dot(b, b)
    zb = prec(b)
    zbb = dot(zb, zb)
    z = prec(r)
    rz = dot(r, z)
    rr = dot(r, r)
    zz = dot(z, z)
    p = z
    tol2 = cfg.rel_tol**2

    zero_rhs = bb == 0.0
    x[zero_rhs] = 0.0
    active = ~zero_rhs & ~((rr <= tol2 * bb) & (zz <= tol2 * zbb))
    iterations = np.zeros(B, dtype=np.int64)
    alpha = np.zeros(B)
    flat = (B, -1)
    cap = cfg.iteration_cap(grid)
    it = 0
    while active.any() and it < cap:
        it += 1
        _kernels.flux_apply(coef, p, Ap, inv_h2, pAp)
        alpha[:] = 0.0
        np.divide(rz, pAp, out=alpha, where=active)
        _kernels.cg_update(x.reshape(flat), r.reshape(flat), p.reshape(flat), Ap.reshape(flat), alpha, active, rr)
        z = prec(r)
        rz_new = rz.copy()
        _kernels.cg_direction(p.reshape(flat), z.reshape(flat), r.reshape(flat), rz, active, rz_new, zz)
        rz = rz_new
        iterations[active] = it
        finite = np.isfinite(rr) & np.isfinite(zz)
        if not finite[active].all():
            bad = int(np.nonzero(active & ~finite)[0][0])
            report = SolveReport(int(iterations[bad]), float("nan"), False)
            raise SolverError(f"non-finite CG residual in batch member {bad} at iteration {it}", report)
        active &= ~((rr <= tol2 * bb) & (zz <= tol2 * zbb))

    with np.errstate(invalid="ignore", divide="ignore"):
        rel = np.where(zero_rhs, 0.0, np.maximum(np.sqrt(rr / bb), np.sqrt(zz / zbb)))
    reports = [SolveReport(int(iterations[i]), float(rel[i]), not bool(active[i])) for i in range(B)]
    if raise_on_failure and active.any():
        bad = int(np.nonzero(active)[0][0])
        raise SolverError(
            f"CG did not converge in {cap} iterations (relative residual {rel[bad]:.3e})", reports[bad]
        )
    x -= x.reshape(flat).mean(axis=1).reshape((B,) + (1,) * grid.d)
    return x, reports


def solve(u: Field, data: ProblemData, cfg: SolverConfig = SolverConfig()) -> tuple[Field, SolveReport]:
    """Mean-free pressure solving the discrete Darcy equation for log-permeability ``u``."""
    if u.grid != data.grid:
        raise ValueError("u and problem data live on different grids")
    rhs = assemble_rhs(data)
    p, reports = solve_batch(u.values[None], rhs.values, u.grid, cfg)
    return Field(u.grid, p[0]), reports[0]


def coefficient_bounds(u: Field) -> tuple[float, float]:
    """Grid version of ``(ess inf exp(u), ess sup exp(u))``."""
    return math.exp(float(u.values.min())), math.exp(float(u.values.max()))


def energy_bound_ratios(v: Field, data: ProblemData, alphas: Sequence[float], cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """``||p(alpha v)||_H1 / exp(2 ||alpha v||_inf)`` over an amplitude sweep."""
    rhs = assemble_rhs(data).values
    us = np.stack([a * v.values for a in alphas])
    p, _ = solve_batch(us, rhs, v.grid, cfg)
    norms = h1_norm_array(p, v.grid)
    sups = np.max(np.abs(us.reshape(len(alphas), -1)), axis=1)
    return norms / np.exp(2.0 * sups)


def continuity_ratio(u1: Field, u2: Field, data: ProblemData, cfg: SolverConfig = SolverConfig()) -> float:
    """``||p1 - p2||_H1 / (exp(4 max ||u_i||_inf) ||u1 - u2||_inf)``."""
    rhs = assemble_rhs(data).values
    p, _ = solve_batch(np.stack([u1.values, u2.values]), rhs, u1.grid, cfg)
    diff = h1_norm_array(p[0] - p[1], u1.grid)
    m = max(np.abs(u1.values).max(), np.abs(u2.values).max())
    du = np.abs(u1.values - u2.values).max()
    return float(diff / (math.exp(4.0 * m) * du))
