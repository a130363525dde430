# modules/run_manager.py
"""
One runner per CLI subcommand. Each run resolves a RunConfig, writes manifest.json
into the output directory and then its numeric outputs.
"""

import json
import logging
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from modules import __version__
from modules.bandwidth import BandwidthReport, guan_cv_bandwidth, pilot_bandwidth, rule_of_thumb
from modules.benchmark import BenchmarkConfig, run_benchmark, write_benchmark
from modules.bootstrap import (
    amise_star,
    build_world,
    h_boot,
    mise_star_closed_form,
    mise_star_exact,
    mise_star_monte_carlo,
)
from modules.covariate_transform import DEFAULT_N_Z, MIN_N_Z, spatial_cdf
from modules.data_manager import load_pattern, load_raster, save_curve, save_pattern, save_raster
from modules.errors import CovkernError, ParameterError, ParseError
from modules.estimators import (
    diggle_default_bandwidth,
    diggle_surface,
    estimate_rho,
    guan_surface,
    lambda_hat,
    transform_sample,
)
from modules.geom import eval_covariate_many
from modules.kernels import get_kernel
from modules.random_streams import STREAM_PATTERN, substream
from modules.run_logger import RunLogHandler
from modules.selector_registry import SELECTOR_FUNCTIONS, get_selector
from modules.simulation import GRFSpec, ModelSpec, build_model_covariates, model_intensity, simulate_poisson

logger = logging.getLogger(__name__)

COMMANDS = ("gstar", "estimate", "bandwidth", "bootstrap", "simulate", "benchmark")
MANIFEST_NAME = "manifest.json"
RUN_LOG_NAME = "run.log"


class RunConfig(BaseModel):
    command: Literal["gstar", "estimate", "bandwidth", "bootstrap", "simulate", "benchmark"]
    covariate: Optional[str] = None
    pattern: Optional[str] = None
    config: Optional[str] = None
    out_dir: str = "covkern_out"
    kernel: str = "gaussian"
    bandwidth: str = "auto:boot"
    estimator: Literal["weighted", "guan", "diggle"] = "weighted"
    selectors: list[str] = Field(default_factory=lambda: list(SELECTOR_FUNCTIONS))
    seed: Optional[int] = None
    threads: int = Field(1, ge=1)
    n_z: int = Field(DEFAULT_N_Z, ge=MIN_N_Z)
    smoothing_bandwidth: Optional[float] = Field(None, gt=0)
    exact_A: bool = False
    pilot: Optional[float] = Field(None, gt=0)
    boot_criterion: Literal["exact", "amise"] = "exact"
    replicates: int = Field(0, ge=0)
    h_grid_size: int = Field(40, ge=3)
    model: Literal[1, 2, 3] = 1
    target_m: float = Field(100.0, gt=0)
    grf: GRFSpec = Field(default_factory=GRFSpec)
    benchmark: Optional[BenchmarkConfig] = None
    version: str = __version__

    @field_validator("bandwidth")
    @classmethod
    def _bandwidth_spec(cls, v: str) -> str:
        if v == "auto":
            return v
        if v.startswith("auto:"):
            name = v.split(":", 1)[1]
            if name not in SELECTOR_FUNCTIONS:
                raise ValueError(f"unknown selector '{name}'; choose from {sorted(SELECTOR_FUNCTIONS)}")
            return v
        try:
            h = float(v)
        except ValueError:
            raise ValueError(f"bandwidth must be a positive number or auto:<selector>, got '{v}'")
        if not (np.isfinite(h) and h > 0):
            raise ValueError(f"bandwidth must be positive, got {v}")
        return v

    @field_validator("selectors")
    @classmethod
    def _known_selectors(cls, v: list[str]) -> list[str]:
        unknown = [s for s in v if s not in SELECTOR_FUNCTIONS]
        if unknown:
            raise ValueError(f"unknown selectors {unknown}")
        return v

    @property
    def resolved_seed(self) -> int:
        return 0 if self.seed is None else self.seed


# --- Manifest ---
def write_manifest(rc: RunConfig, out_dir: Path) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    payload = {"tool": "covkern", "version": __version__, "config": rc.model_dump(mode="json")}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_manifest(path) -> dict:
    """Config mapping stored in a manifest written by a previous run."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"manifest is not valid JSON: {e.msg}", line=e.lineno)
    if not isinstance(payload, dict) or "config" not in payload:
        raise ParseError(f"{path} is not a covkern manifest")
    return payload["config"]


def load_benchmark_config(path) -> BenchmarkConfig:
    return BenchmarkConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))


# --- Shared steps ---
def _inputs(rc: RunConfig, need_pattern: bool = True):
    if rc.covariate is None:
        raise ParameterError(f"'{rc.command}' needs a covariate raster")
    raster = load_raster(rc.covariate)
    pattern = None
    if need_pattern:
        if rc.pattern is None:
            raise ParameterError(f"'{rc.command}' needs a point pattern")
        pattern = load_pattern(rc.pattern, window=raster.window)
    return raster, pattern


def _write_report(report: BandwidthReport, path: Path) -> None:
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def _selector_options(rc: RunConfig) -> dict:
    return {
        "exact_A": rc.exact_A,
        "seed": rc.resolved_seed,
        "pilot": rc.pilot,
        "boot_criterion": rc.boot_criterion,
    }


def resolve_bandwidth(rc: RunConfig, sample, dist, k) -> BandwidthReport:
    """Fixed value or the named data-driven selector for the weighted estimator."""
    if rc.bandwidth == "auto" or rc.bandwidth.startswith("auto:"):
        name = rc.bandwidth.split(":", 1)[1] if ":" in rc.bandwidth else "boot"
        return get_selector(name)(sample, dist, k, **_selector_options(rc))
    return BandwidthReport(method="fixed", h=float(rc.bandwidth))


# --- Runners ---
def run_gstar(rc: RunConfig, out: Path) -> dict:
    raster, _ = _inputs(rc, need_pattern=False)
    dist = spatial_cdf(raster, n_z=rc.n_z, smoothing_bandwidth=rc.smoothing_bandwidth)
    path = out / "gstar.csv"
    save_curve(path, z=dist.z_grid, g_star=dist.g_star, G_star=dist.G_star)
    return {"gstar": path}


def _estimate_weighted(rc, raster, pattern, k, out: Path) -> dict:
    dist = spatial_cdf(raster, n_z=rc.n_z, smoothing_bandwidth=rc.smoothing_bandwidth)
    sample = transform_sample(pattern, raster, dist)
    report = resolve_bandwidth(rc, sample, dist, k)
    rho = estimate_rho(sample, dist, report.h, k)
    f = dist.g_star * rho.rho_hat / sample.n if sample.n else np.zeros_like(rho.rho_hat)
    est = lambda_hat(rho, raster)
    logger.info(f"Weighted estimate: n={sample.n}, h={report.h:.5g} ({report.method}), m_hat={rho.m_hat:.4g}")
    paths = {"rho": out / "rho.csv", "intensity": out / "intensity.asc", "bandwidth": out / "bandwidth.json"}
    save_curve(paths["rho"], z=dist.z_grid, rho_hat=rho.rho_hat, f_hat=f, g_star=dist.g_star)
    save_raster(est.raster, paths["intensity"])
    _write_report(report, paths["bandwidth"])
    return paths


def _estimate_guan(rc, raster, pattern, k, out: Path) -> dict:
    if rc.bandwidth in ("auto", "auto:cv"):
        report = guan_cv_bandwidth(eval_covariate_many(raster, pattern.points), raster, k)
    elif rc.bandwidth.startswith("auto:"):
        raise ParameterError(f"Guan's estimator supports a fixed bandwidth or auto:cv, got {rc.bandwidth}")
    else:
        report = BandwidthReport(method="fixed", h=float(rc.bandwidth))
    est, z_eval, curve = guan_surface(pattern, raster, report.h, k)
    logger.info(f"Guan estimate: n={pattern.n}, h={report.h:.5g} ({report.method})")
    paths = {"rho": out / "rho.csv", "intensity": out / "intensity.asc", "bandwidth": out / "bandwidth.json"}
    save_curve(paths["rho"], z=z_eval, rho_hat=curve)
    save_raster(est.raster, paths["intensity"])
    _write_report(report, paths["bandwidth"])
    return paths


def _estimate_diggle(rc, raster, pattern, out: Path) -> dict:
    if rc.bandwidth == "auto":
        h = diggle_default_bandwidth(pattern)
    elif rc.bandwidth.startswith("auto:"):
        raise ParameterError(f"Diggle's estimator supports a fixed bandwidth or auto, got {rc.bandwidth}")
    else:
        h = float(rc.bandwidth)
    est = diggle_surface(pattern, raster, h)
    logger.info(f"Diggle estimate: n={pattern.n}, h={h:.5g}")
    path = out / "intensity.asc"
    save_raster(est.raster, path)
    return {"intensity": path}


def run_estimate(rc: RunConfig, out: Path) -> dict:
    raster, pattern = _inputs(rc)
    if rc.estimator == "diggle":
        return _estimate_diggle(rc, raster, pattern, out)
    k = get_kernel(rc.kernel)
    if rc.estimator == "guan":
        return _estimate_guan(rc, raster, pattern, k, out)
    return _estimate_weighted(rc, raster, pattern, k, out)


def run_bandwidth(rc: RunConfig, out: Path) -> dict:
    raster, pattern = _inputs(rc)
    k = get_kernel(rc.kernel)
    dist = spatial_cdf(raster, n_z=rc.n_z, smoothing_bandwidth=rc.smoothing_bandwidth)
    sample = transform_sample(pattern, raster, dist)
    reports = {}
    for name in rc.selectors:
        try:
            report = get_selector(name)(sample, dist, k, **_selector_options(rc))
            reports[name] = report.model_dump(mode="json")
            logger.info(f"{name}: h={report.h:.5g}")
        except CovkernError as e:
            reports[name] = {"method": name, "error": str(e)}
            logger.warning(f"{name} failed: {e}")
    if all("error" in r for r in reports.values()):
        raise ParameterError("every bandwidth selector failed")
    path = out / "bandwidths.json"
    path.write_text(json.dumps(reports, indent=2) + "\n", encoding="utf-8")
    return {"bandwidths": path}


def run_bootstrap(rc: RunConfig, out: Path) -> dict:
    raster, pattern = _inputs(rc)
    k = get_kernel(rc.kernel)
    dist = spatial_cdf(raster, n_z=rc.n_z, smoothing_bandwidth=rc.smoothing_bandwidth)
    sample = transform_sample(pattern, raster, dist)
    b = rc.pilot if rc.pilot is not None else pilot_bandwidth(rule_of_thumb(sample, dist, k), sample.n)
    report = h_boot(sample, dist, k, seed=rc.resolved_seed, pilot=b, criterion=rc.boot_criterion)
    world = build_world(sample, dist, b, k, seed=rc.resolved_seed)

    h_grid = np.geomspace(report.h / 10.0, report.h * 10.0, rc.h_grid_size)
    columns = {
        "h": h_grid,
        "amise_star": [amise_star(world, h, k) for h in h_grid],
        "mise_star": [mise_star_closed_form(world, h, k) for h in h_grid],
        "mise_star_exact": [mise_star_exact(world, h, k) for h in h_grid],
    }
    if rc.replicates:
        mc = [mise_star_monte_carlo(world, h, k, rc.replicates, threads=rc.threads) for h in h_grid]
        columns["mise_star_mc"] = [v for v, _ in mc]
        columns["mise_star_se"] = [se for _, se in mc]
    logger.info(f"Bootstrap bandwidth h={report.h:.5g} with pilot b={b:.5g}, m_hat={world.m_hat:.4g}")

    paths = {"curve": out / "bootstrap_curve.csv", "world": out / "bootstrap_world.csv", "bandwidth": out / "bootstrap.json"}
    save_curve(paths["curve"], **columns)
    save_curve(paths["world"], z=world.z_grid, rho_b=world.rho_b.rho_hat, f_tilde=world.f_tilde)
    _write_report(report, paths["bandwidth"])
    return paths


def run_simulate(rc: RunConfig, out: Path) -> dict:
    spec = ModelSpec(model_id=rc.model, target_m=rc.target_m)
    generating, observed = build_model_covariates(spec, rc.grf.seeded(rc.resolved_seed))
    intensity = model_intensity(spec, generating)
    pattern = simulate_poisson(intensity, rng=substream(rc.resolved_seed, STREAM_PATTERN, rc.model))
    logger.info(f"Simulated model {rc.model} with m={rc.target_m}: {pattern.n} event(s)")
    paths = {"covariate": out / "covariate.asc", "intensity": out / "intensity.asc", "pattern": out / "pattern.csv"}
    save_raster(observed, paths["covariate"])
    save_raster(intensity, paths["intensity"])
    save_pattern(pattern, paths["pattern"])
    return paths


def run_benchmark_command(rc: RunConfig, out: Path) -> dict:
    result = run_benchmark(rc.benchmark)
    return write_benchmark(result, out)


RUNNERS = {
    "gstar": run_gstar,
    "estimate": run_estimate,
    "bandwidth": run_bandwidth,
    "bootstrap": run_bootstrap,
    "simulate": run_simulate,
    "benchmark": run_benchmark_command,
}


def resolve(rc: RunConfig) -> RunConfig:
    """Fills the embedded benchmark config so the manifest is self-contained."""
    if rc.command != "benchmark":
        return rc
    cfg = rc.benchmark
    if cfg is None:
        cfg = load_benchmark_config(rc.config) if rc.config else BenchmarkConfig()
    updates = {"threads": rc.threads}
    if rc.seed is not None:
        updates["seed"] = rc.seed
    cfg = BenchmarkConfig.model_validate({**cfg.model_dump(), **updates})
    return rc.model_copy(update={"benchmark": cfg})


def execute(rc: RunConfig, log_handler: Optional[RunLogHandler] = None) -> dict:
    rc = resolve(rc)
    out = Path(rc.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(rc, out)
    logger.info(f"covkern {__version__}: {rc.command} -> {out}")
    try:
        return RUNNERS[rc.command](rc, out)
    finally:
        if log_handler is not None:
            log_handler.flush_to(out / RUN_LOG_NAME)
