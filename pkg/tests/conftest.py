import numpy as np
import pytest
from hypothesis import strategies as st

from fvspine.ctmc import validate_model
from fvspine.fv import assemble_run

A3 = np.array([[0.0, 0.0, 0.0], [4.0, -6.0, 2.0], [1.0, 6.0, -7.0]])


def closed_form_transition(t):
    """Transition matrix of the 3-state example written out in exponentials."""
    a, b = np.exp(-3 * t), np.exp(-10 * t)
    return np.array(
        [
            [1.0, 0.0, 0.0],
            [1 - 6 / 7 * a - 1 / 7 * b, 4 / 7 * a + 3 / 7 * b, 2 / 7 * a - 2 / 7 * b],
            [1 - 9 / 7 * a + 2 / 7 * b, 6 / 7 * a - 6 / 7 * b, 3 / 7 * a + 4 / 7 * b],
        ]
    )


@pytest.fixture(scope="session")
def model3():
    return validate_model(A3)


@pytest.fixture
def scripted3(model3):
    """Three particles (0-based), one free jump and two resample events.

    Event 1 at t=1: particle 1 killed, adopts particle 2's state.
    Event 2 at t=2: particle 0 killed, adopts particle 1's state.
    """
    return assemble_run(model3, [1, 2, 1], 5.0, jumps=[(2, 0.5, 2)], events=[(1.0, 1, 2), (2.0, 0, 1)])


@st.composite
def chain_models(draw, max_n=4):
    """Valid absorbed chains: strictly positive interior rates and at least one killing rate."""
    n = draw(st.integers(1, max_n))
    rate = st.floats(0.05, 10.0, allow_nan=False)
    Q = np.zeros((n + 1, n + 1))
    for x in range(1, n + 1):
        for y in range(1, n + 1):
            if x != y:
                Q[x, y] = draw(rate)
        Q[x, 0] = draw(st.one_of(st.just(0.0), rate))
    if not np.any(Q[1:, 0] > 0):
        Q[draw(st.integers(1, n)), 0] = draw(rate)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return validate_model(Q)


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
