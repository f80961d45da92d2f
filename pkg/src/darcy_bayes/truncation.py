"""Fourier truncation on the torus: Dirichlet kernel identities and sup-norm rates."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike
from typing import Sequence

import numpy as np
from scipy.integrate import quad

from .fields import Field, GridSpec, sup_norm
from .prior import truncate

SERIES_SWITCH = 1e-8


def dirichlet_kernel(N: int, x):
    """``D_N(x) = sin((N + 1/2) x) / (2 sin(x/2))``, the kernel of degree-N truncation.

    Where ``|sin(x/2)| < 1e-8`` the removable singularity is evaluated via the
    series ``1/2 sum_{|n| <= N} cos(n x)``.
    """
    if N < 0:
        raise ValueError(f"kernel degree must be >= 0, got {N}")
    x = np.asarray(x, dtype=np.float64)
    half = np.sin(0.5 * x)
    near = np.abs(half) < SERIES_SWITCH
    safe = np.where(near, 1.0, half)
    out = np.sin((N + 0.5) * x) / (2.0 * safe)
    if np.any(near):
        n = np.arange(1, N + 1)
        series = 0.5 + np.cos(np.multiply.outer(x[near], n)).sum(axis=-1)
        out = np.where(near, 0.0, out)
        out[near] = series
    return out[()] if out.ndim == 0 else out


def _lobes(N: int) -> np.ndarray:
    """Sign-change points of ``D_N`` in [0, pi], with both endpoints."""
    zeros = np.arange(1, N + 1) * math.pi / (N + 0.5)
    return np.concatenate([[0.0], zeros, [math.pi]])


def dirichlet_integral(N: int) -> float:
    """``int_{-pi}^{pi} D_N``, by adaptive quadrature lobe by lobe (exact value pi)."""
    edges = _lobes(N)
    total = math.fsum(
        quad(lambda x: float(dirichlet_kernel(N, x)), a, b, epsabs=1e-14, epsrel=1e-13)[0]
        for a, b in zip(edges[:-1], edges[1:])
    )
    return 2.0 * total


def dn_l1_norm(N: int) -> float:
    """``||D_N||_{L1(-pi, pi)}``, integrating ``|D_N|`` between consecutive zeros."""
    if N < 2:
        raise ValueError(f"L1 norm study needs N >= 2, got {N}")
    edges = _lobes(N)
    total = math.fsum(
        abs(quad(lambda x: float(dirichlet_kernel(N, x)), a, b, epsabs=0.0, epsrel=1e-9)[0])
        for a, b in zip(edges[:-1], edges[1:])
    )
    return 2.0 * total


def truncation_sup_error(u: Field, N: int) -> float:
    """``||u - P^N u||_inf`` on the grid."""
    if not N < u.grid.n // 2:
        raise ValueError(f"truncation level {N} needs N < n/2 = {u.grid.n // 2}")
    return sup_norm(u - truncate(u, N))


def weierstrass_levels(grid: GridSpec) -> int:
    """Largest ``J`` with ``2^J < n/2``."""
    return int(math.log2(grid.n // 2)) - 1


def weierstrass_field(grid: GridSpec, t: float, J: int | None = None) -> Field:
    """Lacunary series ``sum_{j=0}^{J} 2^(-j t) cos(2^j x_1)``, of Hoelder exponent ``t``."""
    J = weierstrass_levels(grid) if J is None else J
    if 2**J >= grid.n // 2:
        raise ValueError(f"level 2^{J} not resolved on n={grid.n}")
    x = grid.coordinates()[0]
    values = sum(2.0 ** (-j * t) * np.cos(2.0**j * x) for j in range(J + 1))
    return Field(grid, values)


def weierstrass_tail(t: float, N: int, J: int) -> float:
    """``sum_{N < 2^j <= 2^J} 2^(-j t)``, the exact sup error of truncating the lacunary series."""
    return math.fsum(2.0 ** (-j * t) for j in range(J + 1) if 2**j > N)


@dataclass(frozen=True)
class RateFit:
    log_abscissae: np.ndarray
    log_errors: np.ndarray
    slope: float
    intercept: float
    residual: float


def fit_rate(Ns: Sequence[float], errors: Sequence[float]) -> RateFit:
    """Least-squares line through ``(log N, log e)``; ``residual`` is the RMS misfit."""
    x = np.asarray(Ns, dtype=np.float64)
    e = np.asarray(errors, dtype=np.float64)
    if x.shape != e.shape or x.size < 3:
        raise ValueError("rate fit needs at least 3 matched points")
    if np.any(e <= 0.0) or np.any(x <= 0.0) or not np.all(np.isfinite(e)):
        raise ValueError("rate fit needs positive finite abscissae and errors")
    lx, le = np.log(x), np.log(e)
    slope, intercept = np.polyfit(lx, le, 1)
    residual = float(np.sqrt(np.mean((le - (slope * lx + intercept)) ** 2)))
    return RateFit(lx, le, float(slope), float(intercept), residual)


def write_rate_csv(path: str | PathLike, column: str, xs, ys, fit: RateFit | None, x_name: str = "N") -> None:
    """Two-column table followed by a ``# slope=... intercept=... residual=...`` line."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([x_name, column])
        for x, y in zip(xs, ys):
            w.writerow([x if isinstance(x, (int, np.integer)) else repr(float(x)), repr(float(y))])
        if fit is not None:
            fh.write(f"# slope={fit.slope!r} intercept={fit.intercept!r} residual={fit.residual!r}\n")
