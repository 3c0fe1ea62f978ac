import numpy as np
import pytest


def random_set(rng, n, h, w, p_empty=0.3, density=None):
    """Random sample set with roughly ``p_empty`` of its masks empty."""
    out = np.zeros((n, h, w), dtype=bool)
    for i in range(n):
        if rng.random() < p_empty:
            continue
        d = rng.uniform(0.1, 0.9) if density is None else density
        out[i] = rng.random((h, w)) < d
    return out


def block(h, w, top, left, size_h, size_w):
    m = np.zeros((h, w), dtype=bool)
    m[top : top + size_h, left : left + size_w] = True
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion this test checks")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    label = dict(report.user_properties).get("criterion")
    if label:
        _ACCEPTANCE.append((label, report.outcome))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _ACCEPTANCE:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {label}")
