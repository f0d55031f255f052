import numpy as np
import pytest

from rabi_dimer.ansatz import MultiD2State
from rabi_dimer.model import BathSpec, DrivingField, ModelSpec, bath_from_frequencies


def random_state(rng, m, n_bath, scale=0.5, t=0.0):
    amps = rng.normal(size=(m, 4)) + 1j * rng.normal(size=(m, 4))
    disp = scale * (rng.normal(size=(m, 2 + n_bath)) + 1j * rng.normal(size=(m, 2 + n_bath)))
    return MultiD2State(amps, disp, t).normalized()


@pytest.fixture
def rng():
    return np.random.default_rng(20190321)


@pytest.fixture
def small_model():
    """Fully coupled dimer with two hand-placed bath modes and two driven qubits."""
    bath = BathSpec(alpha=0.1, n_modes=2)
    return ModelSpec(J=0.05, g=0.3, left=DrivingField(1.0, 1.0), right=DrivingField(0.7, 0.3, 0.2),
                     bath=bath, modes=bath_from_frequencies(bath, [0.5, 1.5]))


# one line per acceptance criterion, echoed after the test session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
