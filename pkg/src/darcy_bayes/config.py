"""Flat ``section.key = value`` experiment configuration.

Values are parsed as JSON when possible (numbers, lists, ``true``), otherwise
kept as bare strings. Unknown keys, wrong types and inconsistent combinations
raise ``ConfigError`` naming the offending key, before any computation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _real(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return float(v)


def _str(v):
    if not isinstance(v, str):
        raise TypeError("expected a string")
    return v


def _ints(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of integers")
    return [_int(x) for x in v]


def _reals(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of numbers")
    return [_real(x) for x in v]


def _points(v):
    if not isinstance(v, list) or not all(isinstance(p, list) for p in v):
        raise TypeError("expected a list of coordinate lists")
    return [[_real(c) for c in p] for p in v]


def _strs(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of strings")
    return [_str(x) for x in v]


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


# key -> (parser, default); a default of None means "unset"
SCHEMA: dict[str, tuple[Any, Any]] = {
    "grid.d": (_int, 2),
    "grid.n": (_int, 64),
    "prior.s": (_real, 2.0),
    "prior.N": (_int, 8),
    "prior.N_list": (_ints, None),
    "prior.N_ref": (_int, None),
    "problem.f": (_str, "manufactured:sinexp"),
    "problem.g": (_strs, None),
    "truth.u": (_str, "prior"),
    "truth.N": (_int, None),
    "truth.seed": (_int, 1),
    "observation.points": (_points, None),
    "observation.weights": (_strs, None),
    "observation.file": (_str, None),
    "observation.sigma": (_real, 0.1),
    "observation.gamma": (_str, None),
    "observation.y": (_str, None),
    "observation.noise_seed": (_int, 2),
    "solver.rel_tol": (_real, 1e-8),
    "solver.preconditioner": (_str, "scaled"),
    "mcmc.beta": (_real, 0.2),
    "mcmc.steps": (_int, 1000),
    "mcmc.burn_in": (_int, 100),
    "mcmc.thin": (_int, 1),
    "mcmc.save_samples": (_bool, False),
    "snis.n_samples": (_int, 1000),
    "snis.chunk_size": (_int, 256),
    "study.method": (_str, "snis"),
    "study.probe_level": (_int, 8),
    "hellinger.deltas": (_reals, [0.01, 0.02, 0.04, 0.08]),
    "hellinger.direction": (_reals, None),
    "sample.count": (_int, 4),
    "kernel.N_list": (_ints, [1, 4, 16, 64]),
    "kernel.l1_N_list": (_ints, [8, 16, 32, 64, 128, 256, 512]),
    "kernel.t": (_real, 0.5),
    "kernel.n": (_int, 65536),
    "kernel.trunc_N_list": (_ints, [4, 8, 16, 32, 64]),
    "seed": (_int, 0),
    "output.dir": (_str, "out"),
}


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw.strip().strip("'\"")


def parse_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Raw ``{key: value}`` from config text; ``#`` starts a comment line."""
    out: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}", "expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in out:
            raise ConfigError(key, f"duplicate key at {source}:{lineno}")
        out[key] = _parse_value(raw)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated configuration; ``base`` is the directory relative paths resolve against."""

    values: dict
    base: Path = Path(".")

    def __getitem__(self, key: str):
        return self.values[key]

    def path(self, key: str) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base / p

    @property
    def N_list(self) -> list[int]:
        return self.values["prior.N_list"] or [self.values["prior.N"]]

    @property
    def N_ref(self) -> int:
        ref = self.values["prior.N_ref"]
        return ref if ref is not None else max(self.N_list)


def from_mapping(raw: dict[str, Any], base: Path = Path("."), overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    raw = dict(raw)
    raw.update(overrides or {})
    values = {}
    for key in raw:
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
    for key, (parse, default) in SCHEMA.items():
        if key in raw and raw[key] is not None:
            try:
                values[key] = parse(raw[key])
            except TypeError as exc:
                raise ConfigError(key, f"{exc}, got {raw[key]!r}") from None
        else:
            values[key] = default
    cfg = ExperimentConfig(values, base)
    validate(cfg)
    return cfg


def load(path: str | PathLike, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    return from_mapping(parse_text(text, str(path)), path.parent, overrides)


def validate(cfg: ExperimentConfig) -> None:
    v = cfg.values
    d, n = v["grid.d"], v["grid.n"]
    if d not in (1, 2, 3):
        raise ConfigError("grid.d", f"dimension must be 1, 2 or 3, got {d}")
    if n < 8 or n & (n - 1):
        raise ConfigError("grid.n", f"must be a power of two >= 8, got {n}")
    if not v["prior.s"] > d / 2:
        raise ConfigError("prior.s", f"need s > d/2 = {d / 2}, got {v['prior.s']}")
    for N in cfg.N_list:
        if N < 1:
            raise ConfigError("prior.N_list" if v["prior.N_list"] else "prior.N", f"levels must be >= 1, got {N}")
    if v["prior.N_list"] is not None and sorted(set(v["prior.N_list"])) != v["prior.N_list"]:
        raise ConfigError("prior.N_list", "levels must be strictly increasing")
    if v["prior.N_ref"] is not None and v["prior.N_ref"] < max(cfg.N_list):
        raise ConfigError("prior.N_ref", f"must be >= max level {max(cfg.N_list)}")
    if not cfg.N_ref < n // 2:
        raise ConfigError("prior.N_ref" if v["prior.N_ref"] is not None else "prior.N", f"levels must be < n/2 = {n // 2}")
    if v["truth.N"] is not None and not 1 <= v["truth.N"] < n // 2:
        raise ConfigError("truth.N", f"must lie in [1, n/2), got {v['truth.N']}")
    if v["observation.sigma"] <= 0.0:
        raise ConfigError("observation.sigma", "must be positive")
    if not 0.0 < v["solver.rel_tol"] < 1.0:
        raise ConfigError("solver.rel_tol", "must lie in (0, 1)")
    if v["solver.preconditioner"] not in ("scaled", "laplacian"):
        raise ConfigError("solver.preconditioner", "must be 'scaled' or 'laplacian'")
    if not 0.0 < v["mcmc.beta"] <= 1.0:
        raise ConfigError("mcmc.beta", "must lie in (0, 1]")
    if v["mcmc.steps"] < 1:
        raise ConfigError("mcmc.steps", "must be >= 1")
    if not 0 <= v["mcmc.burn_in"] < v["mcmc.steps"]:
        raise ConfigError("mcmc.burn_in", "must lie in [0, mcmc.steps)")
    if v["mcmc.thin"] < 1:
        raise ConfigError("mcmc.thin", "must be >= 1")
    if v["snis.n_samples"] < 1:
        raise ConfigError("snis.n_samples", "must be >= 1")
    if v["snis.chunk_size"] < 1:
        raise ConfigError("snis.chunk_size", "must be >= 1")
    if v["study.method"] not in ("snis", "pcn"):
        raise ConfigError("study.method", "must be 'snis' or 'pcn'")
    if not 1 <= v["study.probe_level"] < n // 2:
        raise ConfigError("study.probe_level", f"must lie in [1, n/2), got {v['study.probe_level']}")
    if any(not (x > 0 and math.isfinite(x)) for x in v["hellinger.deltas"]):
        raise ConfigError("hellinger.deltas", "deltas must be positive")
    if v["sample.count"] < 1:
        raise ConfigError("sample.count", "must be >= 1")
    if v["seed"] < 0 or v["seed"] >= 2**64:
        raise ConfigError("seed", "must be an unsigned 64-bit integer")
    for p in v["observation.points"] or []:
        if len(p) != d:
            raise ConfigError("observation.points", f"point {p} does not have {d} coordinates")
        if not all(0.0 <= c < 2 * math.pi for c in p):
            raise ConfigError("observation.points", f"point {p} lies outside [0, 2pi)^{d}")
    if v["problem.g"] is not None and len(v["problem.g"]) != d:
        raise ConfigError("problem.g", f"need {d} flux component files")
