import pytest
import torch

torch.set_num_threads(1)

_ACCEPTANCE = {}
N_CRITERIA = 11


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow stochastic training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="slow; run with --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance criterion."""

    def record(number, passed, detail):
        _ACCEPTANCE[number] = ("PASS" if passed else "FAIL", detail)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, N_CRITERIA + 1):
        status, detail = _ACCEPTANCE.get(number, ("SKIP", "not run (slow suite, use --runslow)"))
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {detail}")
