from __future__ import annotations

from pathlib import Path

import pytest

from combsim.harness import validate_full
from combsim.scenario import load_scenario

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


@pytest.fixture(scope="session")
def arrhenius_scenario():
    return load_scenario(SCENARIO_DIR / "arrhenius_2layer.yaml")


@pytest.fixture(scope="session")
def diffusion_scenario():
    return load_scenario(SCENARIO_DIR / "diffusion_2layer.yaml")


@pytest.fixture(scope="session")
def constant_scenario():
    return load_scenario(SCENARIO_DIR / "constant_2layer.yaml")


@pytest.fixture(scope="session")
def arrhenius_bundle(arrhenius_scenario):
    return validate_full(arrhenius_scenario)


@pytest.fixture(scope="session")
def diffusion_bundle(diffusion_scenario):
    return validate_full(diffusion_scenario)


@pytest.fixture(scope="session")
def constant_bundle(constant_scenario):
    return validate_full(constant_scenario)
