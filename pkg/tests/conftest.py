import numpy as np
import pytest

from optbistab.bloch import AtomicParams, FieldConfig

ACCEPTANCE_LINES = []


def random_hermitian(rng, unit_trace=True):
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real if unit_trace else 0.5 * (a + a.conj().T)


def random_params(rng):
    return AtomicParams(*rng.uniform(0.2, 2.0, 4), float(rng.uniform(0, 0.1)))


def random_fields(rng, omega_max=5.0, delta_max=5.0):
    om = rng.uniform(0.5, omega_max, 3) * np.exp(1j * rng.uniform(0, 2 * np.pi, 3))
    d = rng.uniform(-delta_max, delta_max, 3)
    return FieldConfig(*om, *d)


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
