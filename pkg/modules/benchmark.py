# modules/benchmark.py
"""
Replicated simulation study: e1 = mean ISE_rel, e2 = its standard deviation and
e3 = mean relative bias of each selector against the Monte Carlo MISE-optimal bandwidth.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator

from modules.covariate_transform import CovariateDistribution, spatial_cdf
from modules.errors import CovkernError
from modules.estimators import (
    EPS_Q_REL,
    GUAN_EVAL_POINTS,
    TransformedSample,
    estimate_rho,
    guan_cv_score,
    guan_denominator,
    kernel_sum,
    lambda_hat,
    transform_sample,
)
from modules.geom import RasterCovariate, eval_covariate_many
from modules.kernels import Kernel, get_kernel
from modules.quadrature import simpson
from modules.random_streams import STREAM_PATTERN, substream
from modules.selector_registry import SELECTOR_FUNCTIONS, get_selector
from modules.simulation import (
    GRFSpec,
    ModelSpec,
    build_model_covariates,
    ise_rel,
    model_intensity,
    simulate_poisson,
    true_relative_density,
)

logger = logging.getLogger(__name__)


# --- Schemas ---
class BenchmarkConfig(BaseModel):
    models: list[Literal[1, 2, 3]] = Field(default_factory=lambda: [1])
    m_values: list[float] = Field(default_factory=lambda: [50.0, 100.0])
    replicates: int = Field(100, ge=2)
    selectors: list[str] = Field(default_factory=lambda: ["silverman", "rt", "boot", "cv"])
    boot_criterion: Literal["exact", "amise"] = "exact"
    include_guan: bool = True
    seed: int = 2024
    kernel: str = "gaussian"
    grf: GRFSpec = Field(default_factory=GRFSpec)
    n_z: int = Field(257, ge=64)
    # MISE search grid, as fractions of the observed covariate range
    h_grid_size: int = Field(60, ge=3)
    h_grid_lo: float = Field(0.005, gt=0)
    h_grid_hi: float = Field(1.0, gt=0)
    threads: int = Field(1, ge=1)

    @field_validator("selectors")
    @classmethod
    def _known_selectors(cls, v: list[str]) -> list[str]:
        unknown = [s for s in v if s not in SELECTOR_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown selectors {unknown}; choose from {sorted(SELECTOR_FUNCTIONS)}")
        return v

    @field_validator("m_values")
    @classmethod
    def _positive_m(cls, v: list[float]) -> list[float]:
        if not v or any(m <= 0 for m in v):
            raise ValueError("m_values must be a non-empty list of positive expected counts")
        return v

    @model_validator(mode="after")
    def _ordered_h_grid(self):
        if self.h_grid_lo >= self.h_grid_hi:
            raise ValueError("h_grid_lo must be below h_grid_hi")
        return self


class BenchmarkRow(BaseModel):
    model: int
    m: float
    estimator: Literal["weighted", "guan"]
    selector: str
    e1: Optional[float] = None
    e2: Optional[float] = None
    e3: Optional[float] = None
    e1_se: Optional[float] = None
    h_mean: Optional[float] = None
    h_reference: float
    replicates: int
    failures: int = 0
    boundary_hits: int = 0


class ScenarioSummary(BaseModel):
    model: int
    m: float
    h_mise: float
    h_mise_guan: Optional[float] = None
    mise_boundary_hit: bool = False
    mean_events: float
    failed_replicates: int = 0


class BenchmarkResult(BaseModel):
    config: BenchmarkConfig
    scenarios: list[ScenarioSummary] = Field(default_factory=list)
    rows: list[BenchmarkRow] = Field(default_factory=list)

    def row(self, model: int, m: float, estimator: str, selector: str) -> BenchmarkRow:
        for r in self.rows:
            if r.model == model and r.m == m and r.estimator == estimator and r.selector == selector:
                return r
        raise KeyError((model, m, estimator, selector))


# --- Per-scenario state shared read-only by replicate workers ---
@dataclass(frozen=True)
class _Scenario:
    model: int
    m: float
    m_index: int
    observed: RasterCovariate
    intensity: RasterCovariate
    dist: CovariateDistribution
    f_true: np.ndarray
    h_grid: np.ndarray
    guan_z: np.ndarray
    guan_q: list
    guan_valid: np.ndarray


@dataclass
class _ReplicateOutcome:
    n_events: int
    error: Optional[str] = None
    ise_f_grid: Optional[np.ndarray] = None
    ise_rel_grid: Optional[np.ndarray] = None
    guan_ise_grid: Optional[np.ndarray] = None
    guan_cv_index: Optional[int] = None
    h: dict = field(default_factory=dict)
    ise: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    boundary: dict = field(default_factory=dict)


def _build_scenario(config: BenchmarkConfig, k: Kernel, model: int, m: float, m_index: int) -> _Scenario:
    spec = ModelSpec(model_id=model, target_m=m)
    generating, observed = build_model_covariates(spec, config.grf.seeded(config.seed))
    intensity = model_intensity(spec, generating)
    dist = spatial_cdf(observed, n_z=config.n_z)
    f_true = true_relative_density(intensity, observed, dist)

    z_range = float(observed.values.max() - observed.values.min())
    h_grid = np.geomspace(config.h_grid_lo * z_range, config.h_grid_hi * z_range, config.h_grid_size)

    guan_z = np.linspace(observed.values.min(), observed.values.max(), GUAN_EVAL_POINTS)
    guan_q, valid = [], []
    if config.include_guan:
        for h in h_grid:
            q = guan_denominator(observed, h, k, guan_z)
            guan_q.append(q)
            valid.append(bool(np.all(q >= EPS_Q_REL * observed.window.area)))
        if not all(valid):
            logger.warning(f"Guan's estimator undefined for {valid.count(False)} of {len(h_grid)} grid bandwidths")
    return _Scenario(
        model, m, m_index, observed, intensity, dist, f_true, h_grid, guan_z, guan_q, np.array(valid, dtype=bool)
    )


def _weighted_errors(sample: TransformedSample, scen: _Scenario, h: float, k: Kernel) -> tuple[float, float]:
    """(ISE of f_hat in covariate space, ISE_rel of lambda_hat in the plane)."""
    rho = estimate_rho(sample, scen.dist, h, k)
    fh = scen.dist.g_star * rho.rho_hat / sample.n if sample.n else np.zeros_like(scen.f_true)
    ise_f = simpson((fh - scen.f_true) ** 2, scen.dist.z_grid)
    return ise_f, ise_rel(lambda_hat(rho, scen.observed), scen.intensity)


def _guan_errors(event_z: np.ndarray, scen: _Scenario, k: Kernel) -> tuple[np.ndarray, np.ndarray]:
    """Per grid bandwidth: ISE_rel of Guan's surface and its least-squares CV score."""
    n_h = scen.h_grid.size
    ise, cv = np.full(n_h, np.nan), np.full(n_h, np.nan)
    for i, h in enumerate(scen.h_grid):
        if not scen.guan_valid[i]:
            continue
        q = scen.guan_q[i]
        curve = kernel_sum(scen.guan_z, event_z, 1.0, h, k) / q
        lam = np.interp(scen.observed.values, scen.guan_z, curve)
        ise[i] = ise_rel(scen.observed.with_values(lam), scen.intensity)
        if event_z.size >= 2:
            cv[i] = guan_cv_score(event_z, scen.observed, h, k, scen.guan_z, q)
    return ise, cv


def _run_replicate(scen: _Scenario, config: BenchmarkConfig, k: Kernel, replicate: int) -> _ReplicateOutcome:
    rng = substream(config.seed, STREAM_PATTERN, scen.model, scen.m_index, replicate)
    pattern = simulate_poisson(scen.intensity, rng=rng)
    out = _ReplicateOutcome(n_events=pattern.n)
    try:
        sample = transform_sample(pattern, scen.observed, scen.dist)
    except CovkernError as exc:
        out.error = str(exc)
        return out

    grid_errors = [_weighted_errors(sample, scen, h, k) for h in scen.h_grid]
    out.ise_f_grid = np.array([e[0] for e in grid_errors])
    out.ise_rel_grid = np.array([e[1] for e in grid_errors])

    for name in config.selectors:
        try:
            report = get_selector(name)(sample, scen.dist, k, seed=config.seed, boot_criterion=config.boot_criterion)
            out.h[name] = report.h
            out.ise[name] = _weighted_errors(sample, scen, report.h, k)[1]
            out.boundary[name] = bool(report.diagnostics.get("boundary_hit", False))
        except CovkernError as exc:
            out.failures[name] = str(exc)

    if config.include_guan:
        event_z = eval_covariate_many(scen.observed, pattern.points)
        out.guan_ise_grid, cv = _guan_errors(event_z, scen, k)
        if np.any(np.isfinite(cv)):
            out.guan_cv_index = int(np.nanargmin(cv))
    return out


# --- Summaries ---
def _summarise(
    model: int,
    m: float,
    estimator: str,
    selector: str,
    h_values: list[float],
    ise_values: list[float],
    h_reference: float,
    replicates: int,
    boundary_hits: int = 0,
) -> BenchmarkRow:
    count = len(ise_values)
    stats = {}
    if count:
        e2 = float(np.std(ise_values, ddof=1)) if count > 1 else 0.0
        stats = {
            "e1": math.fsum(ise_values) / count,
            "e2": e2,
            "e3": math.fsum((h - h_reference) / h_reference for h in h_values) / count,
            "e1_se": e2 / math.sqrt(count),
            "h_mean": math.fsum(h_values) / count,
        }
    return BenchmarkRow(
        model=model,
        m=m,
        estimator=estimator,
        selector=selector,
        h_reference=h_reference,
        replicates=replicates,
        failures=replicates - count,
        boundary_hits=boundary_hits,
        **stats,
    )


def _grid_minimiser(curves: list[np.ndarray], h_grid: np.ndarray) -> tuple[int, bool]:
    mean_curve = np.mean(np.vstack(curves), axis=0)
    idx = int(np.nanargmin(mean_curve))
    return idx, idx in (0, h_grid.size - 1)


def _scenario_rows(
    scen: _Scenario,
    config: BenchmarkConfig,
    outcomes: list[_ReplicateOutcome],
) -> tuple[ScenarioSummary, list[BenchmarkRow]]:
    R = config.replicates
    ok = [o for o in outcomes if o.error is None]
    if not ok:
        raise CovkernError(f"model {scen.model}, m={scen.m}: every replicate failed")

    idx, boundary = _grid_minimiser([o.ise_f_grid for o in ok], scen.h_grid)
    h_mise = float(scen.h_grid[idx])
    if boundary:
        logger.warning(f"Model {scen.model}, m={scen.m}: h_MISE sits on the edge of the search grid")

    rows = [
        _summarise(scen.model, scen.m, "weighted", "mise", [h_mise] * len(ok),
                   [float(o.ise_rel_grid[idx]) for o in ok], h_mise, R)
    ]
    for name in config.selectors:
        done = [o for o in ok if name in o.h]
        rows.append(
            _summarise(
                scen.model, scen.m, "weighted", name,
                [o.h[name] for o in done], [o.ise[name] for o in done], h_mise, R,
                boundary_hits=sum(o.boundary.get(name, False) for o in done),
            )
        )
        for i, o in enumerate(outcomes):
            if name in o.failures:
                logger.warning(f"Model {scen.model}, m={scen.m}, replicate {i}: {name} failed ({o.failures[name]})")

    h_mise_guan = None
    if config.include_guan and scen.guan_valid.any():
        g_idx, _ = _grid_minimiser([o.guan_ise_grid for o in ok], scen.h_grid)
        h_mise_guan = float(scen.h_grid[g_idx])
        rows.append(
            _summarise(scen.model, scen.m, "guan", "mise", [h_mise_guan] * len(ok),
                       [float(o.guan_ise_grid[g_idx]) for o in ok], h_mise_guan, R)
        )
        cv_done = [o for o in ok if o.guan_cv_index is not None]
        last = scen.h_grid.size - 1
        rows.append(
            _summarise(
                scen.model, scen.m, "guan", "cv",
                [float(scen.h_grid[o.guan_cv_index]) for o in cv_done],
                [float(o.guan_ise_grid[o.guan_cv_index]) for o in cv_done],
                h_mise_guan, R,
                boundary_hits=sum(o.guan_cv_index in (0, last) for o in cv_done),
            )
        )

    summary = ScenarioSummary(
        model=scen.model,
        m=scen.m,
        h_mise=h_mise,
        h_mise_guan=h_mise_guan,
        mise_boundary_hit=boundary,
        mean_events=math.fsum(o.n_events for o in outcomes) / len(outcomes),
        failed_replicates=len(outcomes) - len(ok),
    )
    return summary, rows


def run_benchmark(config: BenchmarkConfig) -> BenchmarkResult:
    """
    Simulates config.replicates patterns per (model, m) and scores every selector.

    Replicates run on a thread pool; results are merged in replicate order, so the
    output does not depend on the thread count.
    """
    k = get_kernel(config.kernel)
    result = BenchmarkResult(config=config)
    for model in config.models:
        for m_index, m in enumerate(config.m_values):
            logger.info(f"Benchmark: model {model}, m={m}, {config.replicates} replicates")
            scen = _build_scenario(config, k, model, m, m_index)
            worker = partial(_run_replicate, scen, config, k)
            with ThreadPoolExecutor(max_workers=config.threads) as executor:
                outcomes = list(executor.map(worker, range(config.replicates)))
            summary, rows = _scenario_rows(scen, config, outcomes)
            result.scenarios.append(summary)
            result.rows.extend(rows)
            logger.info(
                f"Model {model}, m={m}: h_MISE={summary.h_mise:.4g}, mean N={summary.mean_events:.1f}, "
                f"failed replicates={summary.failed_replicates}"
            )
    return result


# --- Egress ---
def benchmark_table(result: BenchmarkResult) -> pd.DataFrame:
    """One row per (model, m, criterion), one column per estimator:selector."""
    records = []
    for r in result.rows:
        for criterion in ("e1", "e2", "e3"):
            records.append(
                {
                    "model": r.model,
                    "m": r.m,
                    "criterion": criterion,
                    "column": f"{r.estimator}:{r.selector}",
                    "value": getattr(r, criterion),
                }
            )
    df = pd.DataFrame.from_records(records)
    df["value"] = df["value"].astype(float)
    columns = list(dict.fromkeys(df["column"]))
    table = df.pivot(index=["model", "m", "criterion"], columns="column", values="value")
    table = table.reindex(columns=columns)
    table.columns.name = None
    return table.reset_index()


def write_benchmark(result: BenchmarkResult, out_dir) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "table": out_dir / "benchmark_table.csv",
        "rows": out_dir / "benchmark_rows.csv",
        "json": out_dir / "benchmark.json",
    }
    benchmark_table(result).to_csv(paths["table"], index=False, float_format="%.10g", lineterminator="\n")
    pd.DataFrame([r.model_dump() for r in result.rows]).to_csv(
        paths["rows"], index=False, float_format="%.10g", lineterminator="\n"
    )
    paths["json"].write_text(result.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Benchmark written to {out_dir}")
    return paths
