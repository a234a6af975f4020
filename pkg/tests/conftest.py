import os

import pytest

from clickcascade import kernels


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CLICKCASCADE_SKIP_SLOW"):
        skip = pytest.mark.skip(reason="CLICKCASCADE_SKIP_SLOW is set")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


@pytest.fixture(params=sorted(kernels.available_backends()))
def backend(request):
    """Each importable kernel module in turn."""
    return kernels.available_backends()[request.param]


_CRITERIA_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; ``criterion(n, ok, detail)``.

    The line is printed immediately and again in the terminal summary.
    """
    lines = request.config.stash.setdefault(_CRITERIA_KEY, {})

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail}"
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
