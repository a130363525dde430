# app.py
from dotenv import load_dotenv
load_dotenv()

import argparse
import os
import sys

from pydantic import ValidationError

from modules import __version__
from modules.errors import CovkernError
from modules.run_logger import setup_run_logger
from modules.run_manager import RunConfig, execute, load_manifest


class CovkernArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; data and numeric errors keep status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# ---------- Parser ----------
def _add_common(p: argparse.ArgumentParser, inputs: bool = True) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--out-dir", "-o", dest="out_dir", default=S, help="Output directory")
    p.add_argument("--seed", type=int, default=S, help="Master seed for every random stream")
    p.add_argument("--threads", type=int, default=S, help="Worker cap (falls back to COVKERN_THREADS)")
    p.add_argument("--from-manifest", dest="from_manifest", default=S, help="Rerun from a manifest.json")
    if inputs:
        p.add_argument("--covariate", default=S, help="ASCII-grid covariate raster")
        p.add_argument("--n-z", dest="n_z", type=int, default=S, help="z-grid size for g*")
        p.add_argument("--smoothing-bandwidth", dest="smoothing_bandwidth", type=float, default=S)
        p.add_argument("--kernel", default=S, choices=["gaussian", "epanechnikov"])


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = CovkernArgumentParser(prog="covkern", description="Covariate-based kernel intensity estimation")
    parser.add_argument("--version", action="version", version=f"covkern {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gstar", help="Spatial CDF and density of the covariate")
    _add_common(p)

    p = sub.add_parser("estimate", help="Intensity surface from a pattern and a covariate")
    _add_common(p)
    p.add_argument("--pattern", default=S, help="Point pattern CSV with header x,y")
    p.add_argument("--bandwidth", default=S, help="Positive number, auto or auto:<silverman|rt|boot|cv>")
    p.add_argument("--estimator", default=S, choices=["weighted", "guan", "diggle"])
    p.add_argument("--exact-A", dest="exact_A", action="store_true", default=S)
    p.add_argument("--pilot", type=float, default=S, help="Pilot bandwidth for auto:boot")
    p.add_argument("--boot-criterion", dest="boot_criterion", default=S, choices=["exact", "amise"])

    p = sub.add_parser("bandwidth", help="Run the data-driven bandwidth selectors")
    _add_common(p)
    p.add_argument("--pattern", default=S)
    p.add_argument("--selectors", default=S, help="Comma-separated selector names")
    p.add_argument("--exact-A", dest="exact_A", action="store_true", default=S)
    p.add_argument("--pilot", type=float, default=S)
    p.add_argument("--boot-criterion", dest="boot_criterion", default=S, choices=["exact", "amise"])

    p = sub.add_parser("bootstrap", help="Bootstrap bandwidth and MISE* curve")
    _add_common(p)
    p.add_argument("--pattern", default=S)
    p.add_argument("--pilot", type=float, default=S)
    p.add_argument("--boot-criterion", dest="boot_criterion", default=S, choices=["exact", "amise"])
    p.add_argument("--replicates", type=int, default=S, help="Monte Carlo resamples per h (0 = closed form only)")
    p.add_argument("--h-grid-size", dest="h_grid_size", type=int, default=S)

    p = sub.add_parser("simulate", help="Simulate a benchmark model")
    _add_common(p, inputs=False)
    p.add_argument("--model", type=int, default=S, choices=[1, 2, 3])
    p.add_argument("--target-m", dest="target_m", type=float, default=S)
    p.add_argument("--grid", type=int, default=S, help="Raster cells per side")
    p.add_argument("--grf-sigma", dest="grf_sigma", type=float, default=S)
    p.add_argument("--grf-range", dest="grf_range_s", type=float, default=S)
    p.add_argument("--grf-seed", dest="grf_seed", type=int, default=S)
    p.add_argument("--grf-method", dest="grf_method", default=S, choices=["circulant", "cholesky"])

    p = sub.add_parser("benchmark", help="Replicated simulation study")
    _add_common(p, inputs=False)
    p.add_argument("--config", default=S, help="Benchmark config JSON")
    return parser


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Explicit flags override the manifest, which overrides the environment and defaults."""
    cli = dict(vars(args))
    values = {}
    env_threads = os.getenv("COVKERN_THREADS")
    if env_threads:
        values["threads"] = env_threads

    manifest = cli.pop("from_manifest", None)
    if manifest:
        stored = load_manifest(manifest)
        stored.pop("version", None)
        values.update(stored)

    grf = {key[len("grf_"):]: cli.pop(key) for key in list(cli) if key.startswith("grf_")}
    if "grid" in cli:
        grf["ncols"] = grf["nrows"] = cli.pop("grid")
    if grf:
        values["grf"] = {**values.get("grf", {}), **grf}
    if "selectors" in cli:
        cli["selectors"] = [s.strip() for s in cli["selectors"].split(",") if s.strip()]
    values.update(cli)
    return RunConfig.model_validate(values)


# ---------- Entry point ----------
def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handler = setup_run_logger()
    try:
        rc = build_run_config(args)
    except ValidationError as exc:
        print(f"covkern: invalid configuration\n{exc}", file=sys.stderr)
        return 1
    except CovkernError as exc:
        print(f"covkern: {exc}", file=sys.stderr)
        return 2

    try:
        execute(rc, handler)
    except ValidationError as exc:
        print(f"covkern: invalid configuration\n{exc}", file=sys.stderr)
        return 1
    except (CovkernError, OSError) as exc:
        print(f"covkern: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(dispatch())
