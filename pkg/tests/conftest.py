import numpy as np
import pytest
from hypothesis import strategies as st

from resalloc import QuadraticCost, ScalarInstance

_ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance(request):
    """Record a PASS/FAIL line for an acceptance criterion and assert on it."""

    def record(number: int, ok: bool, detail: str):
        _ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")


def quad_instance(alphas, mus, C, meta=None):
    if np.isscalar(mus):
        mus = [mus] * len(alphas)
    return ScalarInstance([QuadraticCost(float(a), float(m)) for a, m in zip(alphas, mus)], C, meta or {})


@st.composite
def quadratic_instances(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    alphas = draw(st.lists(st.floats(0, 10, allow_nan=False), min_size=n, max_size=n))
    mus = draw(st.lists(st.floats(0.25, 4, allow_nan=False), min_size=n, max_size=n))
    C = draw(st.floats(0.1, 20, allow_nan=False))
    return quad_instance(alphas, mus, C)
