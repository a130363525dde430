# modules/selector_registry.py
from modules.bandwidth import BandwidthReport, cv_bandwidth, rule_of_thumb, silverman
from modules.bootstrap import h_boot
from modules.covariate_transform import CovariateDistribution
from modules.errors import ParameterError
from modules.estimators import TransformedSample
from modules.kernels import Kernel


def silverman_selector(sample: TransformedSample, dist: CovariateDistribution, k: Kernel, **_) -> BandwidthReport:
    return silverman(sample)


def rt_selector(sample, dist, k, exact_A: bool = False, **_) -> BandwidthReport:
    return rule_of_thumb(sample, dist, k, exact_A=exact_A)


def cv_selector(sample, dist, k, h_grid=None, **_) -> BandwidthReport:
    return cv_bandwidth(sample, dist, k, h_grid=h_grid)


def boot_selector(
    sample, dist, k, seed: int = 0, pilot=None, boot_criterion: str = "exact", **_
) -> BandwidthReport:
    return h_boot(sample, dist, k, seed=seed, pilot=pilot, criterion=boot_criterion)


# Data-driven selectors, keyed by the names used on the CLI and in benchmark configs
SELECTOR_FUNCTIONS = {
    "silverman": silverman_selector,
    "rt": rt_selector,
    "cv": cv_selector,
    "boot": boot_selector,
}


def get_selector(name: str):
    selector = SELECTOR_FUNCTIONS.get(name)
    if selector is None:
        raise ParameterError(f"Unsupported bandwidth selector: {name}. Choose from {sorted(SELECTOR_FUNCTIONS)}")
    return selector
