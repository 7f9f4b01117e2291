"""Scenario/solver configuration, unit conversion and channel generation."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ConfigError(ValueError):
    """Raised with every invariant violation found in a configuration."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    return 10.0 * math.log10(p_watts) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class ScenarioConfig:
    n_antennas: int = 8
    n_users: int = 5
    n_virtual_beams: int = 1
    target_directions: tuple[float, ...] = (-60.0, 0.0, 60.0)
    beam_width: float = 10.0
    grid_spacing: float = 1.0
    tx_power_dbm: float = 20.0
    noise_power_dbm: float = -80.0
    pathloss_db: float = 80.0
    min_rate_bits: float | tuple[float, ...] = 4.5
    antenna_spacing_ratio: float = 0.5

    @property
    def tx_power(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(self.noise_power_dbm)

    @property
    def channel_variance(self) -> float:
        return db_to_linear(-self.pathloss_db)

    def rate_floors(self) -> np.ndarray:
        """Per-user minimum rate in bits/s/Hz."""
        r = np.atleast_1d(np.asarray(self.min_rate_bits, dtype=float))
        if r.size == 1:
            r = np.full(self.n_users, float(r[0]))
        return r

    def sinr_targets(self) -> np.ndarray:
        return 2.0 ** self.rate_floors() - 1.0

    def with_min_rate(self, r_min: float) -> "ScenarioConfig":
        return dataclasses.replace(self, min_rate_bits=float(r_min))


@dataclass(frozen=True)
class SolverConfig:
    rho_init: float = 100.0
    rho_factor: float = 0.2
    penalty_tol: float = 1e-4
    inner_tol: float = 1e-2
    max_inner_iters: int = 30
    max_outer_iters: int = 20
    rank_tol: float = 1e-3
    feas_tol: float = 1e-6
    solver_tol: float = 1e-6


@dataclass(frozen=True)
class SweepSpec:
    r_min_values: tuple[float, ...] = (1.5, 2.5, 3.5, 4.5)
    schemes: tuple[str, ...] = ("noma_sca", "noma_sdr", "ideal", "conventional", "comm_only")
    n_realizations: int = 10
    base_seed: int = 42
    shared_channels: bool = True


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def scenario_violations(config: ScenarioConfig) -> list[str]:
    errs = []
    if not _is_int(config.n_antennas) or config.n_antennas < 1:
        errs.append("n_antennas must be ≥ 1")
    if not _is_int(config.n_users) or config.n_users < 1:
        errs.append("n_users must be ≥ 1")
    if not _is_int(config.n_virtual_beams) or config.n_virtual_beams < 1:
        errs.append("n_virtual_beams must be ≥ 1")
    for phi in config.target_directions:
        if not -90.0 < float(phi) < 90.0:
            errs.append(f"target_directions: {phi} not strictly inside (-90, 90)")
    if not config.beam_width > 0:
        errs.append("beam_width must be > 0")
    if not config.grid_spacing > 0:
        errs.append("grid_spacing must be > 0")
    elif 180.0 / config.grid_spacing < 1:
        errs.append("grid_spacing must give at least 2 grid points")
    if not config.antenna_spacing_ratio > 0:
        errs.append("antenna_spacing_ratio must be > 0")
    for name in ("tx_power_dbm", "noise_power_dbm", "pathloss_db"):
        if not math.isfinite(getattr(config, name)):
            errs.append(f"{name} must be finite")
    rates = np.atleast_1d(np.asarray(config.min_rate_bits, dtype=float))
    if rates.size not in (1, config.n_users if _is_int(config.n_users) else -1):
        errs.append("min_rate_bits must be a scalar or have one entry per user")
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        errs.append("min_rate_bits must be finite and ≥ 0")
    return errs


def solver_violations(config: SolverConfig) -> list[str]:
    errs = []
    if not config.rho_init > 0:
        errs.append("rho_init must be > 0")
    if not 0 < config.rho_factor < 1:
        errs.append("rho_factor out of (0,1)")
    if not config.penalty_tol >= 0:
        errs.append("penalty_tol must be ≥ 0")
    for name in ("inner_tol", "rank_tol", "feas_tol", "solver_tol"):
        if not getattr(config, name) > 0:
            errs.append(f"{name} must be > 0")
    for name in ("max_inner_iters", "max_outer_iters"):
        v = getattr(config, name)
        if not _is_int(v) or v < 1:
            errs.append(f"{name} must be ≥ 1")
    return errs


def sweep_violations(spec: SweepSpec) -> list[str]:
    from .schemes import SchemeKind

    errs = []
    if not _is_int(spec.n_realizations) or spec.n_realizations < 1:
        errs.append("n_realizations must be ≥ 1")
    r = list(spec.r_min_values)
    if not r:
        errs.append("r_min_values must be nonempty")
    elif any(b <= a for a, b in zip(r, r[1:])):
        errs.append("r_min_values must be strictly increasing")
    if not spec.schemes:
        errs.append("schemes must be nonempty")
    for s in spec.schemes:
        try:
            SchemeKind.from_name(s)
        except ValueError:
            errs.append(f"schemes: unknown scheme {s!r}")
    if not _is_int(spec.base_seed) or not 0 <= spec.base_seed < 2**64:
        errs.append("base_seed must be a 64-bit unsigned integer")
    return errs


def validate_config(config):
    """Return ``config`` unchanged or raise :class:`ConfigError` listing all violations."""
    if isinstance(config, ScenarioConfig):
        errs = scenario_violations(config)
    elif isinstance(config, SolverConfig):
        errs = solver_violations(config)
    elif isinstance(config, SweepSpec):
        errs = sweep_violations(config)
    else:
        raise TypeError(f"cannot validate {type(config).__name__}")
    if errs:
        raise ConfigError(errs)
    return config


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

_SECTIONS = {"scenario": ScenarioConfig, "solver": SolverConfig, "sweep": SweepSpec}


def _from_dict(cls, data: dict, section: str):
    known = {f.name for f in dataclasses.fields(cls)}
    errs = [f"{section}: unknown key {k!r}" for k in data if k not in known]
    if errs:
        raise ConfigError(errs)
    kwargs = {}
    for k, v in data.items():
        kwargs[k] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)

    def to_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in _SECTIONS}


def config_from_dict(data: dict) -> RunConfig:
    """Parse and validate; every violation across all sections is collected."""
    if not isinstance(data, dict):
        raise ConfigError(["config root must be a JSON object"])
    unknown = [f"unknown top-level key {k!r}" for k in data if k not in _SECTIONS]
    if unknown:
        raise ConfigError(unknown)
    parts, errs = {}, []
    for name, cls in _SECTIONS.items():
        try:
            parts[name] = _from_dict(cls, data.get(name, {}), name)
        except ConfigError as exc:
            errs.extend(exc.violations)
        except TypeError as exc:
            errs.append(f"{name}: {exc}")
    if errs:
        raise ConfigError(errs)
    errs += scenario_violations(parts["scenario"])
    errs += solver_violations(parts["solver"])
    errs += sweep_violations(parts["sweep"])
    if errs:
        raise ConfigError(errs)
    return RunConfig(**parts)


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChannelSet:
    """K downlink channel vectors (rows of ``h``), pathloss included."""

    h: np.ndarray
    realization_index: int
    seed: int
    attempt: int = 0

    def __post_init__(self):
        self.h.setflags(write=False)

    @property
    def n_users(self) -> int:
        return self.h.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.h.shape[1]

    def digest(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.h).tobytes()).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChannelSet):
            return NotImplemented
        return (
            (self.realization_index, self.seed, self.attempt)
            == (other.realization_index, other.seed, other.attempt)
            and self.h.shape == other.h.shape
            and bool(np.all(self.h == other.h))
        )

    __hash__ = None


def channel_rng(seed: int, realization_index: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream per (seed, realization, attempt); no sequential draws needed."""
    key = [int(seed), int(realization_index)] + ([int(attempt)] if attempt else [])
    return np.random.default_rng(np.random.SeedSequence(key))


def generate_channels(
    config: ScenarioConfig, seed: int, realization_index: int, attempt: int = 0
) -> ChannelSet:
    """Rayleigh channels with per-entry variance ``10**(-pathloss_db/10)``."""
    rng = channel_rng(seed, realization_index, attempt)
    shape = (config.n_users, config.n_antennas)
    std = math.sqrt(config.channel_variance / 2.0)
    h = std * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ChannelSet(h=h, realization_index=realization_index, seed=seed, attempt=attempt)
