import math

import pytest

from islandap.field import example1_case, example2_case

# Example 1 parameter sets (gamma1, gamma2, phi)
EX1 = {
    "a": (0.5, 0.5, 0.0),
    "b": (0.5, 0.85, 0.0),
    "c": (0.5, 0.85, math.pi / 4),
    "d": (0.25, 0.85, math.pi / 3),
}

# criterion number -> list of (passed, detail), filled by the acceptance suite
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def ex1():
    def make(label, eps=1e-6):
        return example1_case(*EX1[label], eps)

    return make


@pytest.fixture
def ex2():
    def make(eps=1e-6, lam=0.1):
        return example2_case(lam, eps)

    return make


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[num]
        ok = all(p for p, _ in checks)
        passed = sum(p for p, _ in checks)
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} ({passed}/{len(checks)} checks)")
        for p, detail in checks:
            terminalreporter.write_line(f"    [{'pass' if p else 'FAIL'}] {detail}")
