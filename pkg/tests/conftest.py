"""Shared fixtures; solutions of the preset models are computed once per session."""

import numpy as np
import pytest

from qtsda.cli import run_method
from qtsda.models import build_coefficients, preset


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def test1_coeffs():
    return build_coefficients(preset("test1"))


_RUNS = {}


def method_run(model: str, method: str):
    """Cached ``run_method`` result for a preset model."""
    key = (model, method)
    if key not in _RUNS:
        _RUNS[key] = run_method(preset(model), method)
    return _RUNS[key]


@pytest.fixture(scope="session")
def solved():
    return method_run


# one PASS/FAIL line per acceptance criterion, printed after the run
_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    detail = dict(report.user_properties).get("criterion")
    if detail is not None:
        _ACCEPTANCE.append((detail, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for detail, outcome in sorted(_ACCEPTANCE, key=lambda x: (int(x[0][0].split(".")[0]), x[0][0])):
        label, text = detail
        terminalreporter.write_line(f"{outcome} criterion {label}: {text}")
