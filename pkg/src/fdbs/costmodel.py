"""Latency modeling for the query planner: benchmark harness, per-concurrency
ordinary-least-squares fits, crossover computation, and the lookup table that
decides how many ways to split a query.

The shape assumption is the classic one: a higher concurrency level pays a
fixed coordination overhead (larger intercept) and wins on marginal cost per
row (smaller slope), so the two cost lines cross at some row count n* above
which splitting pays off.
"""

from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import DegenerateSamples, FormatError, InvalidSpec, NoCrossover

SAMPLES_CSV_HEADER = "rows,concurrency,elapsed_ms"
MODELS_HEADER = "level\tintercept_ms\tslope_ms_per_row\tr_squared\tsample_count"

#: Row threshold used by the default planner configuration when no model has
#: been fitted.  Illustrative only — real deployments fit their own model.
DEFAULT_CROSSOVER_ROWS = 3000.0

_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class LatencySample:
    rows: int
    concurrency: int
    elapsed_ms: float

    def __post_init__(self):
        if self.rows < 1:
            raise ValueError(f"rows must be >= 1, got {self.rows}")
        if self.concurrency < 1:
            raise ValueError(f"concurrency must be >= 1, got {self.concurrency}")
        if not self.elapsed_ms > 0:
            raise ValueError(f"elapsed_ms must be > 0, got {self.elapsed_ms}")


@dataclass(frozen=True)
class LinearModel:
    intercept_ms: float
    slope_ms_per_row: float
    r_squared: float
    sample_count: int

    def __post_init__(self):
        if self.sample_count < 2:
            raise ValueError("a fitted line needs at least 2 samples")
        if not math.isfinite(self.slope_ms_per_row):
            raise ValueError("slope must be finite")

    def predict(self, rows: float) -> float:
        return self.intercept_ms + self.slope_ms_per_row * rows


def fit_line(samples: Sequence[tuple[float, float]]) -> LinearModel:
    """Ordinary least squares over (rows, elapsed_ms) pairs:
    b = Σ(x−x̄)(y−ȳ) / Σ(x−x̄)², a = ȳ − b·x̄."""
    if len(samples) < 2 or len({x for x, _ in samples}) < 2:
        raise DegenerateSamples("need at least 2 samples with 2 distinct rows values")
    xs = [float(x) for x, _ in samples]
    ys = [float(y) for _, y in samples]
    n = len(xs)
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    ss_tot = math.fsum((y - y_mean) ** 2 for y in ys)
    ss_res = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    r_squared = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return LinearModel(intercept, slope, r_squared, n)


def crossover(low: LinearModel, high: LinearModel) -> float:
    """Row count n* where the higher-concurrency line becomes cheaper."""
    if not (
        high.intercept_ms > low.intercept_ms
        and high.slope_ms_per_row < low.slope_ms_per_row
    ):
        raise NoCrossover(
            "expected the higher level to pay more overhead and win on slope"
        )
    return (high.intercept_ms - low.intercept_ms) / (
        low.slope_ms_per_row - high.slope_ms_per_row
    )


@dataclass(frozen=True)
class CostModel:
    models: Mapping[int, LinearModel]
    crossovers: Mapping[tuple[int, int], float] = field(default_factory=dict)

    def __post_init__(self):
        if 1 not in self.models:
            raise InvalidSpec("cost model must include concurrency level 1")
        object.__setattr__(self, "models", dict(self.models))
        object.__setattr__(self, "crossovers", dict(self.crossovers))
        for (k_low, k_high), stored in self.crossovers.items():
            recomputed = crossover(self.models[k_low], self.models[k_high])
            if not math.isclose(stored, recomputed, rel_tol=1e-9, abs_tol=1e-9):
                raise InvalidSpec(
                    f"stored crossover for ({k_low},{k_high}) disagrees with its models"
                )

    def predict(self, level: int, rows: float) -> float:
        return self.models[level].predict(rows)

    def levels(self) -> list[int]:
        return sorted(self.models)


def build_cost_model(samples: Iterable[LatencySample]) -> CostModel:
    """Fit one line per concurrency level and record every pairwise crossover
    that has the expected shape."""
    by_level: dict[int, list[tuple[float, float]]] = {}
    for s in samples:
        by_level.setdefault(s.concurrency, []).append((s.rows, s.elapsed_ms))
    models = {level: fit_line(points) for level, points in by_level.items()}
    crossovers: dict[tuple[int, int], float] = {}
    levels = sorted(models)
    for i, k_low in enumerate(levels):
        for k_high in levels[i + 1 :]:
            try:
                crossovers[(k_low, k_high)] = crossover(models[k_low], models[k_high])
            except NoCrossover:
                continue
    return CostModel(models=models, crossovers=crossovers)


def default_cost_model() -> CostModel:
    """Two-level model whose 1→2 crossover sits at the default threshold."""
    return CostModel(
        models={
            1: LinearModel(50.0, 0.04, 1.0, 2),
            2: LinearModel(110.0, 0.02, 1.0, 2),
        },
        crossovers={(1, 2): DEFAULT_CROSSOVER_ROWS},
    )


def lookup_best(model: CostModel, rows: int) -> int:
    """Concurrency level with the minimal predicted cost at ``rows``; ties
    (within relative 1e-9, covering exact-crossover row counts) go to the
    lower level."""
    best_level = 1
    best_cost = model.predict(1, rows)
    for level in model.levels():
        if level == 1:
            continue
        cost = model.predict(level, rows)
        if cost < best_cost and not math.isclose(cost, best_cost, rel_tol=_TIE_RTOL):
            best_level, best_cost = level, cost
    return best_level


# --- benchmark harness ---


@dataclass(frozen=True)
class WorkloadSpec:
    """Grid of (rows, concurrency) cells; each cell is measured ``repeats``
    times in deterministic order."""

    rows_grid: tuple[int, ...]
    levels: tuple[int, ...] = (1, 2)
    repeats: int = 1

    def __post_init__(self):
        if not self.rows_grid or not self.levels:
            raise InvalidSpec("workload needs at least one rows value and one level")
        if self.repeats < 1:
            raise InvalidSpec("repeats must be >= 1")
        if any(r < 1 for r in self.rows_grid) or any(k < 1 for k in self.levels):
            raise InvalidSpec("rows and levels must be >= 1")


@dataclass(frozen=True)
class SimulatedCost:
    """Ground-truth latency generator: elapsed = (a_k + b_k·rows) scaled by
    seeded uniform multiplicative noise."""

    params: Mapping[int, tuple[float, float]]
    noise_pct: float = 0.05
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "params", dict(self.params))
        if not self.params:
            raise InvalidSpec("simulated cost needs at least one level")
        if not 0 <= self.noise_pct < 1:
            raise InvalidSpec("noise_pct must be in [0, 1)")

    def analytic_crossover(self, k_low: int, k_high: int) -> float:
        a_low, b_low = self.params[k_low]
        a_high, b_high = self.params[k_high]
        return crossover(
            LinearModel(a_low, b_low, 1.0, 2), LinearModel(a_high, b_high, 1.0, 2)
        )


def benchmark_simulated(cost: SimulatedCost, workload: WorkloadSpec) -> list[LatencySample]:
    """Reproducible benchmark against the simulated ground truth."""
    rng = random.Random(cost.seed)
    samples: list[LatencySample] = []
    for level in workload.levels:
        if level not in cost.params:
            raise InvalidSpec(f"no simulated parameters for concurrency level {level}")
        a, b = cost.params[level]
        for rows in workload.rows_grid:
            for _ in range(workload.repeats):
                noise = rng.uniform(-cost.noise_pct, cost.noise_pct)
                samples.append(LatencySample(rows, level, (a + b * rows) * (1.0 + noise)))
    return samples


def benchmark_live(
    run_query: Callable[[int, int], object],
    workload: WorkloadSpec,
    max_level: int | None = None,
) -> list[LatencySample]:
    """Wall-clock benchmark: times ``run_query(rows, level)`` per grid cell
    (the callable must include its pre-count work).  ``max_level`` caps the
    admissible concurrency in replica-pinned setups."""
    samples: list[LatencySample] = []
    for level in workload.levels:
        if max_level is not None and level > max_level:
            raise InvalidSpec(
                f"concurrency level {level} exceeds the deployed replica count {max_level}"
            )
        for rows in workload.rows_grid:
            for _ in range(workload.repeats):
                started = time.perf_counter()
                run_query(rows, level)
                elapsed_ms = (time.perf_counter() - started) * 1000.0
                samples.append(LatencySample(rows, level, max(elapsed_ms, 1e-6)))
    return samples


# --- text import/export ---


def export_samples_csv(samples: Iterable[LatencySample]) -> str:
    lines = [SAMPLES_CSV_HEADER]
    for s in samples:
        lines.append(f"{s.rows},{s.concurrency},{s.elapsed_ms!r}")
    return "\n".join(lines) + "\n"


def parse_samples_csv(text: str) -> list[LatencySample]:
    lines = text.splitlines()
    if not lines or lines[0] != SAMPLES_CSV_HEADER:
        raise FormatError(f"samples document must start with {SAMPLES_CSV_HEADER!r}")
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise FormatError(f"line {lineno}: expected 3 comma-separated fields")
        try:
            samples.append(LatencySample(int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return samples


def export_models_text(model: CostModel) -> str:
    lines = [MODELS_HEADER]
    for level in model.levels():
        m = model.models[level]
        lines.append(
            f"{level}\t{m.intercept_ms!r}\t{m.slope_ms_per_row!r}"
            f"\t{m.r_squared!r}\t{m.sample_count}"
        )
    return "\n".join(lines) + "\n"
