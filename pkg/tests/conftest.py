import numpy as np
import pytest

from swarm_ot.admm import AdmmState

_criteria: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def criterion():
    """Record an acceptance verdict; a summary line per criterion is printed at the end."""

    def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
        _criteria[number] = (title, bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, passed, detail = _criteria[number]
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def settled_state(pi, support=None, eta=10.0) -> AdmmState:
    """A state whose copies agree exactly, as after convergence."""
    pi = np.asarray(pi, dtype=float)
    support = np.ones(pi.shape, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    return AdmmState(pi=pi, pi_d=pi.copy(), pi_s=pi.copy(), alpha=np.zeros_like(pi), support=support, eta=eta, drift=0.0)
