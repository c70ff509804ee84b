"""Acceptance-criteria bookkeeping shared by every test tree in the repo.

Tests that implement an acceptance criterion record a verdict under a
criterion name; the terminal summary then prints one PASS/FAIL line per
recorded criterion, primary criteria first.
"""

import pytest

ACCEPTANCE_ORDER = (
    "read-oracle",
    "gradient-suite",
    "memory-lifecycle",
    "parity",
    "rejection",
    "selection",
    "determinism",
    "exporter-contract",
)


def pytest_configure(config):
    if not hasattr(config, "_acceptance_results"):
        config._acceptance_results = {}


@pytest.fixture(scope="session")
def acceptance_report(request):
    """Criterion-name → bool map; tests set False up front, True when done."""
    return request.config._acceptance_results


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_acceptance_results", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    ordered = [name for name in ACCEPTANCE_ORDER if name in results]
    extras = sorted(set(results) - set(ACCEPTANCE_ORDER))
    for name in ordered + extras:
        verdict = "PASS" if results[name] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {name}: {verdict}")
