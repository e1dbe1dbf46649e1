"""End-to-end pipelines: build, verify, and sweep over tree depths.

A pipeline takes a direction set (loaded from JSON or seeded uniform
samples of the upper hemisphere), orders it over a generic base point,
builds the sector chain and the midpoint permutation, and runs the
inductive construction on an automatically escalating grid.  Verification
aggregates every module's checker; sweeps record norms, level-set
fractions and maximal-transform ratios per depth, whose growth against
sqrt(depth) is the quantity of interest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import combinatorics, geometry, operators
from .construction import (
    ConstructionConfig,
    ConstructionState,
    build_construction,
    verify_construction,
)
from .errors import ConfigError, ConstructionError, ResourceGuardError
from .grid import DEFAULT_MEMORY_BUDGET, TorusGrid, lp_norm, superlevel_fraction
from .tree import midpoint_permutation

LEVEL_FACTOR = 1.0 / 20.0  # threshold multiplier for the level-set bound
MASS_FLOOR = 9.0 / 100.0  # required level-set fraction
COMPANION_LEVEL_FACTOR = 1.0 / 10.0
COMPANION_MASS = 1.0 / 10.0
ORACLE_MAX_M = 3
ORACLE_MAX_P0 = 2


@dataclass
class ExperimentConfig:
    """One experiment run; all thresholds are recorded in outputs."""

    n: int = 2
    m: int = 2
    m_max: int | None = None
    p_values: tuple = (2.0,)
    grid_size: int | None = None
    grid_max: int | None = None
    seed: int = 7
    p0: int = 1
    delta: float | None = None
    strict: bool = False
    directions_path: str | None = None
    out: str | None = None
    figures: bool = True
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    level_factor: float = LEVEL_FACTOR
    mass_floor: float = MASS_FLOOR
    companion_level_factor: float = COMPANION_LEVEL_FACTOR
    companion_mass: float = COMPANION_MASS

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"dimension must be >= 2, got {self.n}")
        if self.m < 1:
            raise ConfigError(f"depth must be >= 1, got {self.m}")
        if self.m_max is not None and self.m_max < self.m:
            raise ConfigError("m_max must be >= m")
        if any(p < 1 for p in self.p_values):
            raise ConfigError("exponents must be >= 1")
        if self.p0 < 1:
            raise ConfigError("p0 must be >= 1")

    @property
    def depths(self) -> list[int]:
        return list(range(self.m, (self.m_max or self.m) + 1))

    @property
    def tolerance_scale(self) -> float:
        return 0.1 if self.strict else 1.0

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "m_max": self.m_max,
            "p_values": list(self.p_values),
            "grid_size": self.grid_size,
            "grid_max": self.grid_max,
            "seed": self.seed,
            "p0": self.p0,
            "delta": self.delta,
            "strict": self.strict,
            "directions_path": self.directions_path,
            "level_factor": self.level_factor,
            "mass_floor": self.mass_floor,
            "companion_level_factor": self.companion_level_factor,
            "companion_mass": self.companion_mass,
        }


def start_grid_size(n: int, m: int) -> int:
    if n == 2:
        return {1: 128, 2: 256, 3: 256, 4: 512}.get(m, 1024)
    if n == 3:
        return 64
    return 32


def max_grid_size(n: int) -> int:
    return {2: 2048, 3: 256}.get(n, 64)


@dataclass
class PipelineResult:
    state: ConstructionState
    directions: np.ndarray
    grid_attempts: list
    build_seconds: float

    @property
    def grid(self) -> TorusGrid:
        return self.state.grid


def _directions_for_depth(config: ExperimentConfig, m: int) -> np.ndarray:
    count = 2**m
    if config.directions_path:
        dirs = geometry.load_directions(config.directions_path)
        if dirs.shape[1] != config.n:
            raise ConfigError(
                f"direction file has n={dirs.shape[1]}, expected {config.n}"
            )
        if dirs.shape[0] < count:
            raise ConfigError(
                f"direction file has {dirs.shape[0]} vectors, need {count}"
            )
        return dirs[:count]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(m,)))
    return geometry.random_directions(config.n, count, rng)


def build_pipeline(config: ExperimentConfig, m: int | None = None) -> PipelineResult:
    """Direction set -> ordering -> chain -> construction, escalating G."""
    m = config.m if m is None else m
    t0 = time.perf_counter()
    directions = _directions_for_depth(config, m)
    ordering = geometry.order_directions(directions, seed=config.seed)
    chain = geometry.build_sector_chain(ordering)
    perm = midpoint_permutation(m)
    build_cfg = ConstructionConfig(
        m=m, p0=config.p0, delta=config.delta, seed=config.seed
    )
    if config.grid_size is not None:
        schedule = [config.grid_size]
    else:
        size = start_grid_size(config.n, m)
        top = config.grid_max or max_grid_size(config.n)
        schedule = []
        while size <= top:
            schedule.append(size)
            size *= 2
        if not schedule:
            raise ConfigError("empty grid schedule; raise grid_max")
    attempts = []
    last_error: Exception | None = None
    for size in schedule:
        try:
            grid = TorusGrid(config.n, size, memory_budget=config.memory_budget)
            state = build_construction(grid, chain, perm, build_cfg)
            attempts.append({"grid": size, "outcome": "ok"})
            return PipelineResult(
                state, directions, attempts, time.perf_counter() - t0
            )
        except ConstructionError as exc:
            attempts.append({"grid": size, "outcome": str(exc)})
            last_error = exc
    raise last_error if last_error is not None else ConfigError("no grid size attempted")


@dataclass
class VerifyResult:
    passed: bool
    checks: dict
    metadata: dict

    def as_dict(self) -> dict:
        return {"pass": self.passed, "checks": self.checks, "metadata": self.metadata}


def run_verify(config: ExperimentConfig) -> VerifyResult:
    """Build one (n, m) instance and run every verifier on it."""
    pipeline = build_pipeline(config)
    state = pipeline.state
    scale = config.tolerance_scale
    checks: dict = {}

    construction_report = verify_construction(state, tolerance_scale=scale)
    checks["construction"] = construction_report.as_dict()

    pattern = geometry.verify_sector_pattern(state.chain, seed=config.seed)
    checks["sector_pattern"] = pattern.as_dict()

    identity = operators.verify_partial_sum_identity(state, rel_tol=1e-9 * scale)
    checks["partial_sum_identity"] = identity.as_dict()

    if state.m <= ORACLE_MAX_M and state.config.p0 <= ORACLE_MAX_P0:
        checks["norm_expansion"] = combinatorics.norm_expansion_check(
            state, rel_tol=1e-6 * scale
        ).as_dict()
        checks["ray_support"] = combinatorics.ray_support_report(
            state, state.config.p0, state.config.p0
        ).as_dict()
        unit = {
            level: combinatorics.unit_sum(state, level) for level in range(state.m)
        }
        unit_ok = all(abs(v - 1.0) <= 0.01 for v in unit.values())
        checks["unit_sums"] = {
            "pass": unit_ok,
            "values": {str(k): v for k, v in unit.items()},
        }

    passed = all(c["pass"] for c in checks.values())
    metadata = {
        "config": config.as_dict(),
        "grid": state.grid.size,
        "grid_attempts": pipeline.grid_attempts,
        "build_seconds": pipeline.build_seconds,
        "manifest": state.manifest(),
    }
    return VerifyResult(passed, checks, metadata)


@dataclass
class SweepRecord:
    m: int
    direction_count: int
    n: int
    grid: int
    p: float
    norm_f: float
    levelset_fraction: float
    ratio: float
    slope_flag: str
    seconds: float
    maximal_norm: float = float("nan")
    chain_consistent: bool = True

    def csv_row(self) -> dict:
        return {
            "m": self.m,
            "#U": self.direction_count,
            "n": self.n,
            "G": self.grid,
            "p": self.p,
            "norm_f": self.norm_f,
            "levelset_fraction": self.levelset_fraction,
            "ratio": self.ratio,
            "slope_flag": self.slope_flag,
            "seconds": self.seconds,
        }


@dataclass
class SweepResult:
    records: list
    slopes: dict
    summary: dict
    config: ExperimentConfig

    def as_dict(self) -> dict:
        return {
            "records": [r.csv_row() | {"maximal_norm": r.maximal_norm,
                                       "chain_consistent": r.chain_consistent}
                        for r in self.records],
            "slopes": self.slopes,
            "summary": self.summary,
            "config": self.config.as_dict(),
        }


def run_sweep(config: ExperimentConfig) -> SweepResult:
    """Build every depth in range and record norms, level sets and ratios."""
    records: list[SweepRecord] = []
    for m in config.depths:
        t0 = time.perf_counter()
        try:
            pipeline = build_pipeline(config, m)
        except (ConstructionError, ResourceGuardError) as exc:
            reason = "guard" if isinstance(exc, ResourceGuardError) else "build"
            seconds = time.perf_counter() - t0
            for p in config.p_values:
                records.append(
                    SweepRecord(
                        m, 2**m, config.n, config.grid_size or 0, float(p),
                        float("nan"), float("nan"), float("nan"),
                        f"skip:{reason}", seconds,
                    )
                )
            continue
        state = pipeline.state
        total = state.total()
        max_partial = state.max_partial_magnitude()
        threshold = config.level_factor * m
        fraction = superlevel_fraction(max_partial, threshold)
        maximal = operators.maximal_transform(
            total, state.chain.directions, kind="halfspace"
        )
        seconds = time.perf_counter() - t0
        for p in config.p_values:
            norm_f = lp_norm(total, p)
            max_norm = lp_norm(maximal, p)
            ratio = max_norm / norm_f
            level_pass = fraction > config.mass_floor
            bound = config.level_factor * m * config.mass_floor ** (1.0 / p)
            consistent = (not level_pass) or (max_norm >= bound * (1 - 1e-9))
            records.append(
                SweepRecord(
                    m, 2**m, config.n, state.grid.size, float(p),
                    norm_f, fraction, ratio, "ok", seconds,
                    maximal_norm=max_norm, chain_consistent=consistent,
                )
            )
    slopes = {}
    for p in config.p_values:
        rows = [r for r in records if r.p == float(p) and r.slope_flag == "ok"]
        if len(rows) >= 2:
            xs = np.log([r.m for r in rows])
            ys = np.log([r.ratio for r in rows])
            slopes[str(float(p))] = float(np.polyfit(xs, ys, 1)[0])
        else:
            slopes[str(float(p))] = float("nan")
    summary = {
        "slopes": slopes,
        "slope_band": [0.3, 0.7],
        "slopes_in_band": {
            key: bool(0.3 <= value <= 0.7) if np.isfinite(value) else False
            for key, value in slopes.items()
        },
        "level_factor": config.level_factor,
        "mass_floor": config.mass_floor,
        "levelset_pass": {
            str(r.m): bool(r.levelset_fraction > config.mass_floor)
            for r in records
            if r.slope_flag == "ok"
        },
        "norm_over_sqrt_depth": {
            f"p={r.p:g},m={r.m}": r.norm_f / np.sqrt(r.m)
            for r in records
            if r.slope_flag == "ok"
        },
        "chain_consistent": all(r.chain_consistent for r in records),
    }
    return SweepResult(records, slopes, summary, config)
