import numpy as np
import pytest

from bbcu.cli import run_scenario, scenario_roa_table
from bbcu.config import load_spec
from bbcu.plant import PlantParams

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def plant():
    return PlantParams()


@pytest.fixture(scope="session")
def spec1():
    return load_spec("scenario1")


@pytest.fixture(scope="session")
def spec2():
    return load_spec("scenario2")


@pytest.fixture(scope="session")
def roa_table(spec1):
    return scenario_roa_table(spec1)


@pytest.fixture(scope="session")
def run1(spec1, roa_table):
    return run_scenario(spec1, roa_table)


@pytest.fixture(scope="session")
def run2(spec2, roa_table):
    return run_scenario(spec2, roa_table)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
