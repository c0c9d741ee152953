import pytest

from vmhammer import builtin_mappings, default_geometry

PRESET_NAMES = ("simple", "bank-xor", "bank-xor-noncontig-row")


@pytest.fixture(scope="session")
def geometry():
    return default_geometry()


@pytest.fixture(scope="session")
def presets():
    return builtin_mappings()


@pytest.fixture(scope="session", params=PRESET_NAMES)
def preset(request, presets):
    return presets[request.param]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One visible pass/fail line per acceptance criterion."""
    lines = []
    for outcome, reports in sorted(terminalreporter.stats.items()):
        for report in reports:
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion" not in nodeid:
                continue
            if getattr(report, "when", "call") != "call" and outcome != "error":
                continue
            name = nodeid.split("::")[-1].removeprefix("test_")
            verdict = "PASS" if outcome == "passed" else "FAIL"
            lines.append((name, f"ACCEPTANCE {name}: {verdict}"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
