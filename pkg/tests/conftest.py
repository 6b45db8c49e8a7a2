from collections import OrderedDict

import numpy as np
import pytest

from ldprate import builtin_model

# criterion number -> list of (passed, detail) from the tests that check it
_ACCEPTANCE = OrderedDict()
_RECORDED = set()


@pytest.fixture(scope="session")
def brownian():
    return builtin_model("brownian")


@pytest.fixture(scope="session")
def ou():
    return builtin_model("ou-additive", a=-1.0)


@pytest.fixture(scope="session")
def mult_sine():
    return builtin_model("mult-sine")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def _criterion(item):
    marker = item.get_closest_marker("acceptance")
    return marker.args[0] if marker and marker.args else None


@pytest.fixture
def acceptance_record(request):
    number = _criterion(request.node)

    def record(passed, detail=""):
        _ACCEPTANCE.setdefault(number, []).append((bool(passed), detail))
        _RECORDED.add(request.node.nodeid)
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
        print(line)
        return passed

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    number = _criterion(item)
    if number is None or report.when != "call":
        return
    if report.outcome != "passed" and item.nodeid not in _RECORDED:
        _ACCEPTANCE.setdefault(number, []).append((False, f"{item.name} raised before reporting"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        parts = _ACCEPTANCE[number]
        ok = all(p for p, _ in parts)
        if len(parts) == 1:
            detail = parts[0][1]
        else:
            detail = "; ".join(f"[{'ok' if p else 'FAIL'}] {d}" for p, d in parts)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}  {detail}")
