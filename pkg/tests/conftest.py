import pytest

from gevrey_forge.exactnum import derive_params
from gevrey_forge.solver import BuildConfig, build

CRITERIA: dict[int, tuple[bool, str]] = {}


def record(number: int, ok: bool, detail: str) -> None:
    """Keep one verdict per acceptance criterion for the terminal summary."""
    CRITERIA[number] = (ok, detail)
    print(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        ok, detail = CRITERIA[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")


_SOLUTIONS: dict = {}


def solution(n: int, m: int, lmax: int = 6):
    key = (n, m, lmax)
    if key not in _SOLUTIONS:
        _SOLUTIONS[key] = build(derive_params(n, m), BuildConfig(lmax=lmax))
    return _SOLUTIONS[key]


@pytest.fixture(scope="session")
def sol01():
    return solution(0, 1)


@pytest.fixture(scope="session")
def sol02():
    return solution(0, 2)


@pytest.fixture(scope="session")
def sol12():
    return solution(1, 2)


@pytest.fixture(scope="session")
def small01():
    return build(derive_params(0, 1), BuildConfig(lmax=3, rho_max=42.0))
