import pytest

from g2instantons import dynamics as dyn
from g2instantons.metric import MetricParams, tuned_ac_profile

# values recorded from a reference run of the tuned profile and the shooting solver
BETA_AC = 1.334668219232622
H0_AT_F0_01 = 0.05815914612952966


@pytest.fixture(scope="session")
def params():
    return MetricParams(1, 1, 1.0, 1.0)


@pytest.fixture(scope="session")
def profile(params):
    return tuned_ac_profile(params)


@pytest.fixture(scope="session")
def shot(profile):
    return dyn.shoot_h0(0.1, profile)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = {}


def record(number: int, title: str, passed: bool, detail: str = "") -> bool:
    ACCEPTANCE_LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(ACCEPTANCE_LINES[number])
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
