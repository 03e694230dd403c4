from pathlib import Path

import pytest

from ndsm.pareto import population_extremes, solve_target
from ndsm.scenario import load_scenario

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def calibrated_doc():
    return load_scenario(SCENARIOS / "calibrated_homogeneous.json")


@pytest.fixture(scope="session")
def calibrated(calibrated_doc):
    return calibrated_doc.build()


@pytest.fixture(scope="session")
def calibrated_extremes(calibrated):
    return population_extremes(calibrated)


@pytest.fixture(scope="session")
def calibrated_target(calibrated, calibrated_extremes):
    return solve_target(calibrated_extremes, calibrated.pricing.shifter_count)
