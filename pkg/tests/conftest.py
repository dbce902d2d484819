import numpy as np
import pytest

from lagdecomp.instances import random_problem, tiny_abs_net
from lagdecomp.prebounds import Box, compute_intermediate_bounds


@pytest.fixture
def tiny():
    net = tiny_abs_net()
    dom = Box([-1.0], [1.0])
    return net, dom, compute_intermediate_bounds(net, dom)


def problem(seed, **kw):
    """``(net, dom, c, bounds)`` for a seeded random ReLU problem."""
    net, dom, c = random_problem(seed, **kw)
    return net, dom, c, compute_intermediate_bounds(net, dom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(num: int, passed: bool, detail: str):
    ACCEPTANCE[num] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if passed else 'FAIL'}  {detail}")
