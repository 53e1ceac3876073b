import importlib
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = []


def record_criterion(number, title, passed, detail=""):
    _ACCEPTANCE.append((number, title, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {title} {detail}".rstrip())


def _backends():
    names = ["_kernels_py"]
    try:
        importlib.import_module("gbrip._kernels")
        names.append("_kernels")
    except ImportError:
        pass
    return names


@pytest.fixture(params=_backends())
def kernel_backend(request, monkeypatch):
    """Run a test once per kernel implementation (compiled and fallback)."""
    from gbrip import kernels

    impl = importlib.import_module(f"gbrip.{request.param}")
    for name in ("farthest_pairs", "lloyd2", "nnls_gram"):
        monkeypatch.setattr(kernels, name, getattr(impl, name))
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
