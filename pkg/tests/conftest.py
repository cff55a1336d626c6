from __future__ import annotations

from fractions import Fraction

import pytest

from congest_fl import Instance, solve_distributed

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}
ACCEPTANCE_TITLES = {
    1: "distributed ratio <= 1861/1000 (1+eps)^2",
    2: "sequential greedy ratio <= 1861/1000",
    3: "invariant verifiers clean, injected faults detected",
    4: "phase bound",
    5: "message budget 4 ceil(log2 n) + 16",
    6: "selection loop |J'| <= 1 and progress",
    7: "closed-form expected removals vs |E|/|F| and |F|",
    8: "mean first-iteration removed edges >= 0.9 sqrt|E|",
    9: "median selection iterations <= 2 n^(3/4) log2 n, round cap never hit",
    10: "byte-identical reruns",
}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in ACCEPTANCE_TITLES.items():
        if number in ACCEPTANCE:
            ok, detail = ACCEPTANCE[number]
            verdict = "PASS" if ok else "FAIL"
        else:
            verdict, detail = "NOT RUN", "-"
        terminalreporter.write_line(f"[{verdict}] criterion {number}: {title} ({detail})")


@pytest.fixture
def half() -> Fraction:
    return Fraction(1, 2)


@pytest.fixture
def trivial() -> Instance:
    """One free facility, one client at distance 1."""
    return Instance.build([0], [[1]])


@pytest.fixture
def two_by_two() -> Instance:
    return Instance.build([1, 1], [[1, 1], [3, 3]])


@pytest.fixture
def solve():
    def _solve(inst: Instance, eps=Fraction(1, 2), seed: int = 0, **kw):
        return solve_distributed(inst, Fraction(eps), seed, **kw)

    return _solve
