import numpy as np
import pytest

from heavyis.apps.fluid import FluidSpec
from heavyis.skorokhod import FluidNetwork


def example_network() -> FluidNetwork:
    return FluidNetwork(
        Q=np.array([[0.0, 0.1, 0.8], [0.1, 0.0, 0.8], [0.0, 0.0, 0.0]]),
        r=np.array([1.0, 1.0, 2.5]),
        rho=np.array([0.8, 0.8, 1.0]),
    )


@pytest.fixture(scope="session")
def network():
    return example_network()


@pytest.fixture(scope="session")
def fluid_spec(network):
    return FluidSpec(network, (0, 0, 1), 0.05, (1.5, 1.5, 2.2), (0.012, 0.012, 0.045))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion_log():
    def record(number: int, ok: bool, detail: str) -> None:
        CRITERIA[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
