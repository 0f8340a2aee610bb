import numpy as np
import pytest

from blindfdi import build_jacobian, load_case, operating_point


@pytest.fixture(scope="session")
def systems():
    out = {}
    for name in ("case14", "case30", "case57"):
        case = load_case(name)
        jac = build_jacobian(case)
        out[name] = (case, jac, operating_point(case, jac))
    return out


@pytest.fixture(scope="session")
def ieee14(systems):
    return systems["case14"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


TWO_BUS = """
function mpc = two
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0;
    2 1 50;
];
mpc.branch = [
    1 2 0 0.1 0 0 0 0 0 0 1;
];
"""

TRIANGLE = """
mpc.baseMVA = 100;
mpc.bus = [
    1 3 0 0 0 0 1 1 0 135 1 1.05 0.95;
    2 2 20 0 0 0 1 1 0 135 1 1.05 0.95;
    3 1 40 0 0 0 1 1 0 135 1 1.05 0.95;
];
mpc.gen = [
    1 30 0 100 -100 1 100 1 250 10;
    2 30 0 100 -100 1 100 1 250 10;
];
mpc.branch = [
    1 2 0.01 0.2 0 250 250 250 0 0 1 -360 360;
    1 3 0.01 0.25 0 250 250 250 0 0 1 -360 360;
    2 3 0.01 0.5 0 250 250 250 0 0 1 -360 360;
];
"""


# acceptance criteria report: one line per criterion, shown after the run
ACCEPTANCE_LINES: list[str] = []


def acceptance(cid: str, ok: bool, title: str, detail: str) -> bool:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}")
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1][1:].split(".")[0])):
        terminalreporter.write_line(line)
