"""Manufactured problems with closed-form pressures, referenced as ``manufactured:<name>``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import Field, GridSpec
from .solver import ProblemData


@dataclass(frozen=True, eq=False)
class Manufactured:
    u: Field
    data: ProblemData
    p_exact: Field


def _sinexp(grid: GridSpec) -> Manufactured:
    # u = sin x1; p = cos x2 (d >= 2) or cos x1 (d = 1)
    x = grid.coordinates()
    u = np.sin(x[0])
    if grid.d == 1:
        p = np.cos(x[0])
        f = np.exp(u) * np.cos(x[0]) * (1.0 + np.sin(x[0]))
    else:
        p = np.cos(x[1])
        f = np.exp(u) * np.cos(x[1])
    return Manufactured(Field(grid, u), ProblemData(Field(grid, f)), Field(grid, p))


def _cos(grid: GridSpec) -> Manufactured:
    # constant permeability: -laplace(cos x1) = cos x1
    x1 = grid.coordinates()[0]
    zero = Field(grid, np.zeros(grid.shape))
    return Manufactured(zero, ProblemData(Field(grid, np.cos(x1))), Field(grid, np.cos(x1)))


def _flux(grid: GridSpec) -> Manufactured:
    # pure flux source: f = 0, g = (sin x1, 0, ...), u = 0 gives p = cos x1
    x1 = grid.coordinates()[0]
    g = [Field(grid, np.sin(x1))] + [Field(grid, np.zeros(grid.shape)) for _ in range(grid.d - 1)]
    zero = Field(grid, np.zeros(grid.shape))
    return Manufactured(zero, ProblemData(zero, tuple(g)), Field(grid, np.cos(x1)))


REGISTRY: dict[str, Callable[[GridSpec], Manufactured]] = {
    "sinexp": _sinexp,
    "cos": _cos,
    "flux": _flux,
}


def manufactured(name: str, grid: GridSpec) -> Manufactured:
    try:
        return REGISTRY[name](grid)
    except KeyError:
        raise ValueError(f"unknown manufactured problem {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
