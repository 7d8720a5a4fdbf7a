import numpy as np
import pytest

from gradoverlap.paneldata import TaskPanel

# filled by the acceptance module, echoed at the end of the run
ACCEPTANCE_LINES = []


def make_panel(X, Y, M=None, names=None):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    M = np.ones(Y.shape, dtype=bool) if M is None else np.asarray(M, dtype=bool)
    names = names or tuple(f"t{k}" for k in range(Y.shape[1]))
    return TaskPanel(X, Y, M, names, tuple(f"r{i}" for i in range(X.shape[0])))


@pytest.fixture
def toy_panel():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 5))
    Y = X @ rng.standard_normal((5, 3)) + 0.1 * rng.standard_normal((40, 3))
    M = rng.random((40, 3)) > 0.2
    M[0] = True
    return make_panel(X, Y, M)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
