import numpy as np
import pytest

from impulsym.abstraction import build_symbolic
from impulsym.config import case_config


def case_pipeline(case, eta=None):
    from impulsym.cli import synthesize

    cfg = case_config(case) if eta is None else case_config(case, eta=eta)
    return synthesize(cfg)


@pytest.fixture(scope="session")
def case1():
    """(Pipeline, CaseResult) for the built-in case 1 at eta = 0.01."""
    return case_pipeline(1)


@pytest.fixture(scope="session")
def coarse_case1():
    """Case-1 system on [25, 50] with eta = 1."""
    cfg = case_config(1, eta=1.0)
    return build_symbolic(cfg.system(), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
