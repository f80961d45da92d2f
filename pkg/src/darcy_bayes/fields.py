"""Periodic grid fields on the torus [0, 2*pi)^d.

Normalization conventions (used by every module in the package):

* Grid nodes are ``x_j = j * h`` with ``h = 2*pi / n`` on every axis.
* Spectral coefficients are Fourier-series coefficients,
  ``fhat_k = n^-d * sum_j f_j exp(-i k.x_j)``, so that
  ``f(x_j) = sum_k fhat_k exp(i k.x_j)``. A pure ``cos(x_1)`` therefore has
  ``fhat_{+-1} = 1/2``.
* Wavenumbers follow the FFT layout, ``k_i`` in ``[-n/2, n/2)``; the Nyquist
  row is treated as ``|k_i| = n/2``.
* L2 inner product carries the quadrature weight ``h^d``. Parseval then reads
  ``||f||_L2^2 = (2*pi)^d * sum_k |fhat_k|^2``.
* The H1 norm is ``sqrt((2*pi)^d * sum_k (1 + |k|^2) |fhat_k|^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

MAX_HOLDER_PAIRS = 1_000_000


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` points per axis in ``d`` dimensions."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"points per axis must be a power of two >= 8, got {self.n}")

    @property
    def h(self) -> float:
        return 2.0 * math.pi / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def axes(self) -> tuple[int, ...]:
        """Trailing array axes that carry the grid (batch axes lead)."""
        return tuple(range(-self.d, 0))

    def coordinates(self) -> tuple[np.ndarray, ...]:
        x = np.arange(self.n) * self.h
        return tuple(np.meshgrid(*([x] * self.d), indexing="ij"))

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumber per axis, shaped to broadcast over the grid."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        out = []
        for axis in range(self.d):
            shape = [1] * self.d
            shape[axis] = self.n
            out.append(k.reshape(shape))
        return tuple(out)

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(k**2 for k in self.wavenumbers()) * np.ones(self.shape)

    @cached_property
    def kmax(self) -> np.ndarray:
        """Chebyshev magnitude max_i |k_i| on the full spectral layout."""
        return np.maximum.reduce([np.abs(k) * np.ones(self.shape) for k in self.wavenumbers()])


@dataclass(frozen=True, eq=False)
class Field:
    """Real field sampled on a grid; ``values`` has shape ``grid.shape``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.size != self.grid.size:
            raise ValueError(f"field has {values.size} values, grid needs {self.grid.size}")
        values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[..., np.ndarray]) -> "Field":
        return cls(grid, np.broadcast_to(fn(*grid.coordinates()), grid.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "Field":
        return cls(grid, np.full(grid.shape, float(c)))

    def _check(self, other: "Field"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __mul__(self, alpha):
        return Field(self.grid, self.values * alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier-series coefficients of a real field, in full FFT layout."""

    grid: GridSpec
    coefficients: np.ndarray


def spectrum(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Fourier-series coefficients over the trailing grid axes."""
    return np.fft.fftn(values, axes=grid.axes) / grid.size


def dft_forward(f: Field) -> SpectralField:
    return SpectralField(f.grid, spectrum(f.values, f.grid))


def dft_inverse(F: SpectralField) -> Field:
    values = np.fft.ifftn(F.coefficients, axes=F.grid.axes).real * F.grid.size
    return Field(F.grid, values)


def l2_norm_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.sqrt(grid.h**grid.d * np.sum(values**2, axis=grid.axes))


def h1_norm_array(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    c = spectrum(values, grid)
    weight = (2.0 * math.pi) ** grid.d * (1.0 + grid.ksq)
    return np.sqrt(np.sum(weight * np.abs(c) ** 2, axis=grid.axes))


def l2_norm(f: Field) -> float:
    return float(l2_norm_array(f.values, f.grid))


def h1_norm(f: Field) -> float:
    """Spectral H1 norm; equals ``|c| (2 pi)^(d/2)`` for a constant ``c``."""
    return float(h1_norm_array(f.values, f.grid))


def hminus1_norm(f: Field) -> float:
    """Dual (H^-1) norm of the mean-free part, ``sqrt((2pi)^d sum |fhat|^2/|k|^2)``."""
    c = spectrum(f.values, f.grid)
    ksq = f.grid.ksq
    w = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
    return float(np.sqrt((2.0 * math.pi) ** f.grid.d * np.sum(w * np.abs(c) ** 2)))


def sup_norm(f: Field) -> float:
    return float(np.max(np.abs(f.values)))


def zero_mean_project(f: Field) -> Field:
    return Field(f.grid, f.values - f.values.mean())


def _displacements(grid: GridSpec) -> np.ndarray:
    """Grid displacement vectors used by the Holder estimator.

    One representative per +-pair. All displacements are used when the total
    pair count fits the budget; otherwise a centred cube of short offsets is
    kept (these dominate the quotient) and axis-aligned dyadic offsets cover
    the long range.
    """
    n, d = grid.n, grid.d
    half = n // 2
    points = grid.size
    if points * (points - 1) // 2 <= MAX_HOLDER_PAIRS:
        radius = half
    else:
        radius = 1
        while points * ((2 * (radius + 1) + 1) ** d - 1) // 2 <= MAX_HOLDER_PAIRS:
            radius += 1
    rng = np.arange(-radius + (1 if radius == half else 0), radius + 1)
    cube = np.array(np.meshgrid(*([rng] * d), indexing="ij")).reshape(d, -1).T
    keep = []
    for delta in cube:
        nz = np.nonzero(delta)[0]
        if nz.size and delta[nz[0]] > 0:
            keep.append(delta)
    if radius < half:
        step = 1
        while step <= half:
            if step > radius:
                for axis in range(d):
                    delta = np.zeros(d, dtype=int)
                    delta[axis] = step
                    keep.append(delta)
            step *= 2
    return np.array(keep, dtype=int)


def holder_seminorm_estimate(f: Field, t: float) -> float:
    """Grid estimate of the C^t seminorm ``max |f(x)-f(y)| / dist(x,y)^t``.

    Distances use the torus metric. When the all-pairs count exceeds
    ``MAX_HOLDER_PAIRS`` a fixed displacement pattern is used instead
    (see ``_displacements``).
    """
    if not 0.0 < t <= 1.0:
        raise ValueError(f"Holder exponent must lie in (0, 1], got {t}")
    grid = f.grid
    n = grid.n
    best = 0.0
    for delta in _displacements(grid):
        wrapped = np.minimum(np.abs(delta), n - np.abs(delta))
        dist = grid.h * math.sqrt(float(np.sum(wrapped**2)))
        shifted = np.roll(f.values, tuple(-delta), axis=tuple(range(grid.d)))
        q = float(np.max(np.abs(shifted - f.values))) / dist**t
        best = max(best, q)
    return best
