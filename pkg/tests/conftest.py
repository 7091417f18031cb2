import numpy as np
import pytest

from udn_ase.analytic import NetworkParams
from udn_ase.channel import preset_3gpp_case1, preset_single_slope

# Outcome lines collected by the acceptance suite, printed at the end of the run.
ACCEPTANCE_LINES = []


@pytest.fixture
def case1():
    return preset_3gpp_case1()


@pytest.fixture
def single_slope():
    return preset_single_slope()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def params_for(density, height_m=8.5, noise_dbm=-95.0, fading=None):
    return NetworkParams.from_units(density, height_m=height_m, noise_dbm=noise_dbm, fading=fading)


@pytest.fixture
def acceptance():
    def record(criterion, passed, detail):
        line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
