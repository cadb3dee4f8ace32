import math

import pytest
from hypothesis import HealthCheck, settings

from skewmix import dynamics, groups, thermo

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
)
settings.load_profile("default")

LOG2 = math.log(2.0)


@pytest.fixture(scope="session")
def doubling():
    return dynamics.doubling_map()


@pytest.fixture(scope="session")
def perturbed():
    return dynamics.perturbed_doubling(0.05)


@pytest.fixture(scope="session")
def srb(doubling):
    return thermo.srb_potential(doubling)


@pytest.fixture(scope="session")
def srb_rpf(doubling, srb):
    return thermo.rpf_solve(doubling, srb, 32)


@pytest.fixture(scope="session")
def perturbed_srb(perturbed):
    return thermo.srb_potential(perturbed)


@pytest.fixture(scope="session")
def perturbed_rpf(perturbed, perturbed_srb):
    return thermo.rpf_solve(perturbed, perturbed_srb, 48)


@pytest.fixture(scope="session")
def torus1():
    return groups.Torus(1)


@pytest.fixture(scope="session")
def su2():
    return groups.SU2()


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance_line():
    """Record and print the PASS/FAIL line of one acceptance criterion."""

    def record(number: int, passed: bool, detail: str) -> None:
        line = f"CRITERION {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
