import numpy as np
import pytest

from lrstrang.harness.reference import reference_solution
from lrstrang.problems import make_problem

# criterion id -> (description, nodeid fragment)
CRITERIA = {
    "AC1": "linear exactness (heat, G = 0, m = 64)",
    "AC2": "second order, compatible heat benchmark",
    "AC3": "order reduction, lyap-random rank 11",
    "AC4": "cubic benchmark rank behaviour",
    "AC5": "cubic singular value decay",
    "AC6": "adaptive rank run",
    "AC7": "BUG2 standalone order",
    "AC8": "invariant suite",
    "AC9": "symmetry preservation",
}

_outcomes: dict[str, list] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cubic128():
    return make_problem("cubic", m=128, T=0.3)


@pytest.fixture(scope="session")
def cubic128_reference(cubic128):
    return reference_solution(cubic128, "dense-strang-fine", 1e-5)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for key in CRITERIA:
        if f"test_{key.lower()}_" in report.nodeid:
            detail = dict(report.user_properties).get("detail", "")
            _outcomes.setdefault(key, []).append((report.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key, desc in CRITERIA.items():
        runs = _outcomes.get(key)
        if runs is None:
            status = "NOT RUN"
            detail = ""
        else:
            status = "PASS" if all(o == "passed" for o, _ in runs) else "FAIL"
            detail = "; ".join(d for _, d in runs if d)
        terminalreporter.write_line(f"{key} {status:7s} {desc}" + (f"  [{detail}]" if detail else ""))
