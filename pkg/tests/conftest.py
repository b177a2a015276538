import numpy as np
import pytest

from stencilforge import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.get_backend(request.param)


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one acceptance line; call as ``criterion(tag, ok, detail)``."""

    def record(tag, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
