import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from neumann_layers.coefficients import constant_family  # noqa: E402
from neumann_layers.bvp import solve  # noqa: E402

# criterion number -> list of (label, passed, detail), filled by test_acceptance
ACCEPTANCE = {}


def record(criterion: int, label: str, passed: bool, detail: str = "") -> None:
    ACCEPTANCE.setdefault(criterion, []).append((label, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[n]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}")
        for label, passed, detail in parts:
            tr.write_line(f"    [{'pass' if passed else 'FAIL'}] {label}: {detail}")


@pytest.fixture(scope="session")
def linear_family():
    return constant_family()


@pytest.fixture(scope="session")
def linear_profiles(linear_family):
    """Solved linear-constant profiles keyed by radius (N = 2)."""
    cache = {}

    def get(R):
        if R not in cache:
            cache[R] = solve(linear_family.at(R))
        return cache[R]

    return get
