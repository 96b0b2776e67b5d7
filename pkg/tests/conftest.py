import numpy as np
import pytest

from qsf import alternating_process, biased_coin, build_quantum_model, random_machine, upset_gambler

P, Q = 0.7, 0.8


def random_suite(count, seed, states=(2, 5), symbols=(2, 3)):
    rng = np.random.default_rng(seed)
    return [
        random_machine(int(rng.integers(states[0], states[1] + 1)), int(rng.integers(symbols[0], symbols[1] + 1)), rng)
        for _ in range(count)
    ]


@pytest.fixture(scope="session")
def gambler():
    return upset_gambler(P, Q)


@pytest.fixture(scope="session")
def gambler_model(gambler):
    return build_quantum_model(gambler)


@pytest.fixture(scope="session")
def alternating():
    return alternating_process()


@pytest.fixture(scope="session")
def coin():
    return biased_coin(0.5)


@pytest.fixture(scope="session")
def machine_suite():
    """50 random minimal machines with 2-5 states and 2-3 symbols."""
    return random_suite(50, seed=20240611)


@pytest.fixture(scope="session")
def suite_models(machine_suite):
    return [build_quantum_model(m) for m in machine_suite]


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
