"""Gaussian prior N(0, (-Laplacian)^-s) on mean-free fields, via its Fourier KL expansion.

A draw is written in the real L2-orthonormal basis

    u = sum_k sigma_k * (a_k * c_k + b_k * s_k),   sigma_k^2 = |k|^(-2s),

with ``c_k = sqrt(2/(2pi)^d) cos(k.x)``, ``s_k = sqrt(2/(2pi)^d) sin(k.x)`` and
``a_k, b_k`` iid standard normal. One wavevector is kept per +-k pair: the one
whose first nonzero component is positive. The index set is the full cube
``0 < max_i |k_i| <= N`` and modes are ordered lexicographically in k; random
numbers are consumed in that order, ``a_k`` before ``b_k``.

Random streams are numpy ``PCG64`` generators (``numpy.random.default_rng``).
Sample ``i`` of a bank with base seed ``s`` uses ``default_rng(s + i)``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from os import PathLike

import numpy as np

from .fields import Field, GridSpec, dft_forward, dft_inverse


@lru_cache(maxsize=None)
def _kl_modes(d: int, N: int) -> np.ndarray:
    out = []
    for k in itertools.product(range(-N, N + 1), repeat=d):
        nz = [c for c in k if c != 0]
        if nz and nz[0] > 0:
            out.append(k)
    modes = np.array(out, dtype=np.int64).reshape(-1, d)
    modes.setflags(write=False)
    return modes


def kl_modes(d: int, N: int) -> np.ndarray:
    """Half-set wavevectors of the truncation cube, shape ``(M, d)``, lexicographic."""
    if N < 1:
        raise ValueError(f"truncation level must be >= 1, got {N}")
    return _kl_modes(d, N)


def kl_variance(k, s: float) -> np.ndarray | float:
    """Prior variance ``(|k|^2)^-s`` of the KL coefficient at wavevector(s) ``k``."""
    k = np.asarray(k, dtype=np.float64)
    ksq = np.sum(k**2, axis=-1)
    if np.any(ksq == 0):
        raise ValueError("the zero mode carries no prior variance (mean-free prior)")
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    out = ksq ** (-s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PriorSpec:
    s: float
    N: int
    seed: int = 0
    d: int = 2

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.s > self.d / 2:
            raise ValueError(f"prior smoothness needs s > d/2, got s={self.s}, d={self.d}")
        if self.N < 1:
            raise ValueError(f"truncation level must be >= 1, got {self.N}")

    @property
    def modes(self) -> np.ndarray:
        return kl_modes(self.d, self.N)

    @property
    def n_coefficients(self) -> int:
        """Real dimension of the truncated space, ``(2N+1)^d - 1``."""
        return 2 * len(self.modes)

    def with_level(self, N: int) -> "PriorSpec":
        return PriorSpec(self.s, N, self.seed, self.d)


def _check_grid(spec: PriorSpec, grid: GridSpec, N: int | None = None):
    N = spec.N if N is None else N
    if grid.d != spec.d:
        raise ValueError(f"prior is {spec.d}-dimensional, grid is {grid.d}-dimensional")
    if not N < grid.n // 2:
        raise ValueError(f"truncation level {N} needs N < n/2 = {grid.n // 2}")


class KLSynthesizer:
    """Maps standardized KL amplitudes ``(..., M, 2)`` to grid values, batched."""

    def __init__(self, spec: PriorSpec, grid: GridSpec):
        _check_grid(spec, grid)
        self.spec = spec
        self.grid = grid
        modes = spec.modes
        sigma = np.sqrt(kl_variance(modes, spec.s))
        c0 = math.sqrt(2.0 / (2.0 * math.pi) ** grid.d)
        # (a - i b)/2 at +k, its conjugate at -k
        self._scale = 0.5 * c0 * sigma
        n = grid.n
        rshape = grid.shape[:-1] + (n // 2 + 1,)
        self._rshape = rshape
        last = modes[:, -1]
        pos = last >= 0
        flat = []
        for sign, sel in ((1, pos), (-1, (last <= 0))):
            k = sign * modes[sel]
            idx = np.mod(k, n)
            flat.append(np.ravel_multi_index(tuple(idx.T), rshape))
        self._pos_sel, self._pos_idx = np.nonzero(pos)[0], flat[0]
        self._neg_sel, self._neg_idx = np.nonzero(last <= 0)[0], flat[1]

    def spectrum(self, coeffs: np.ndarray) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=np.float64)
        batch = coeffs.shape[:-2]
        z = self._scale * (coeffs[..., 0] - 1j * coeffs[..., 1])
        out = np.zeros(batch + (math.prod(self._rshape),), dtype=np.complex128)
        out[..., self._pos_idx] = z[..., self._pos_sel]
        out[..., self._neg_idx] = np.conj(z[..., self._neg_sel])
        return out.reshape(batch + self._rshape)

    def __call__(self, coeffs: np.ndarray) -> np.ndarray:
        spec = self.spectrum(coeffs)
        values = np.fft.irfftn(spec, s=self.grid.shape, axes=self.grid.axes)
        return values * self.grid.size


@dataclass(frozen=True, eq=False)
class KLSample:
    """Standardized KL amplitudes of one draw; ``coefficients[m] = (a, b)`` for ``modes[m]``."""

    spec: PriorSpec
    grid: GridSpec
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.shape != (len(self.spec.modes), 2):
            raise ValueError(f"expected coefficients of shape {(len(self.spec.modes), 2)}, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("KL amplitudes must be finite")
        object.__setattr__(self, "coefficients", c)

    @property
    def modes(self) -> np.ndarray:
        return self.spec.modes

    def as_dict(self) -> dict[tuple[int, ...], tuple[float, float]]:
        return {tuple(int(c) for c in k): (float(a), float(b)) for k, (a, b) in zip(self.modes, self.coefficients)}

    def projections(self) -> np.ndarray:
        """L2 projections ``(u, c_k), (u, s_k)``: amplitudes times sigma_k."""
        sigma = np.sqrt(kl_variance(self.modes, self.spec.s))
        return self.coefficients * sigma[:, None]

    def to_field(self) -> Field:
        return Field(self.grid, KLSynthesizer(self.spec, self.grid)(self.coefficients))


def draw_coefficients(spec: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((len(spec.modes), 2))


def sample_prior(spec: PriorSpec, grid: GridSpec, rng: np.random.Generator | None = None) -> tuple[KLSample, Field]:
    """Draw ``u^N`` from the truncated prior; ``rng`` defaults to ``default_rng(spec.seed)``."""
    _check_grid(spec, grid)
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    sample = KLSample(spec, grid, draw_coefficients(spec, rng))
    return sample, sample.to_field()


def truncate(f: Field, N: int) -> Field:
    """Orthogonal L2 projection onto span{exp(i k.x): max_i |k_i| <= N} (zero mode kept)."""
    if not N < f.grid.n // 2:
        raise ValueError(f"truncation level {N} needs N < n/2 = {f.grid.n // 2}")
    F = dft_forward(f)
    mask = f.grid.kmax <= N
    return dft_inverse(type(F)(f.grid, F.coefficients * mask))


def truncate_array(values: np.ndarray, grid: GridSpec, N: int) -> np.ndarray:
    spec = np.fft.rfftn(values, axes=grid.axes)
    k = [np.abs(np.fft.fftfreq(grid.n, 1.0 / grid.n))] * (grid.d - 1) + [np.fft.rfftfreq(grid.n, 1.0 / grid.n)]
    mask = np.ones(spec.shape[-grid.d:], dtype=bool)
    for axis, ka in enumerate(k):
        shape = [1] * grid.d
        shape[axis] = ka.size
        mask &= ka.reshape(shape) <= N
    return np.fft.irfftn(spec * mask, s=grid.shape, axes=grid.axes)


def expected_l2_energy(spec: PriorSpec, N: int | None = None) -> float:
    """``E ||u^N||_L2^2 = sum over the cube 0 < max|k_i| <= N of |k|^-2s``."""
    N = spec.N if N is None else N
    modes = kl_modes(spec.d, N)
    # each half-set mode stands for the pair +-k
    return float(2.0 * np.sum(kl_variance(modes, spec.s)))


def level_mask(d: int, N_ref: int, N: int) -> np.ndarray:
    """Boolean mask selecting the level-``N`` modes inside the level-``N_ref`` mode list."""
    if N > N_ref:
        raise ValueError(f"level {N} exceeds bank level {N_ref}")
    return np.max(np.abs(kl_modes(d, N_ref)), axis=1) <= N


@dataclass(frozen=True)
class PriorBank:
    """Reproducible bank of prior amplitude draws at level ``spec.N``.

    Draws are regenerated on demand from their per-sample seed, so common
    random numbers across truncation levels cost no storage.
    """

    spec: PriorSpec
    size: int

    def draw(self, i: int) -> np.ndarray:
        if not 0 <= i < self.size:
            raise IndexError(i)
        return draw_coefficients(self.spec, np.random.default_rng(self.spec.seed + i))

    def chunk(self, start: int, stop: int) -> np.ndarray:
        stop = min(stop, self.size)
        return np.stack([self.draw(i) for i in range(start, stop)])

    def chunks(self, chunk_size: int):
        for start in range(0, self.size, chunk_size):
            yield start, min(start + chunk_size, self.size)


def write_kl_sample(sample: KLSample, path: str | PathLike) -> None:
    d = sample.spec.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"k_{i + 1}" for i in range(d)] + ["a", "b"])
        for k, (a, b) in zip(sample.modes, sample.coefficients):
            w.writerow([int(c) for c in k] + [repr(float(a)), repr(float(b))])


def read_kl_sample(path: str | PathLike, spec: PriorSpec, grid: GridSpec) -> KLSample:
    lookup = {tuple(int(c) for c in k): m for m, k in enumerate(spec.modes)}
    coeffs = np.zeros((len(lookup), 2))
    seen = set()
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        d = len(header) - 2
        if d != spec.d:
            raise ValueError(f"{path}: {d}-dimensional sample, prior is {spec.d}-dimensional")
        for row in rows:
            k = tuple(int(c) for c in row[:d])
            if k not in lookup:
                raise ValueError(f"{path}: wavevector {k} not in truncation set")
            coeffs[lookup[k]] = float(row[d]), float(row[d + 1])
            seen.add(k)
    if len(seen) != len(lookup):
        raise ValueError(f"{path}: {len(lookup) - len(seen)} modes missing")
    return KLSample(spec, grid, coeffs)
