import importlib

import numpy as np
import pytest

from wikivandal import _core_py, kernels

_RESULTS: list[tuple[str, bool, str]] = []

_BACKENDS = [_core_py]
try:
    _BACKENDS.insert(0, importlib.import_module("wikivandal._core"))
except ImportError:  # extension not built
    pass


@pytest.fixture(params=_BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request, monkeypatch):
    """Run a test once per kernel implementation."""
    mod = request.param
    for name in ("csr_matvec", "csr_rmatvec", "pav"):
        monkeypatch.setattr(kernels, name, getattr(mod, name))
    return mod


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion: str, passed: bool, detail: str = ""):
        _RESULTS.append((criterion, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {criterion}  {detail}")
