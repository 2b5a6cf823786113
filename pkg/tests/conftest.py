import numpy as np
import pytest

from pclfmpc.cli import load_config
from pclfmpc.mpc import build_design

_DESIGNS = {}
_TABLE1 = {}
STEPS = {"example1": 120, "example2": 100}


def design_for(name):
    """Build (once per session) the design for a bundled example."""
    if name not in _DESIGNS:
        cfg = load_config(name)
        _DESIGNS[name] = build_design(cfg.system, cfg.X, cfg.U, cfg.Q, cfg.R, cfg.horizon,
                                      cfg.eps, cfg.c, cfg.riccati_inputs, cfg.xf_points,
                                      cfg.levels)
    return _DESIGNS[name]


def table1_for(name):
    """Table-1 experiment with the bundled settings (seed 0), computed once."""
    from pclfmpc.simulate import table1_experiment

    if name not in _TABLE1:
        cfg = load_config(name)
        _TABLE1[name] = table1_experiment(design_for(name), cfg.steps, cfg.runs, seed=cfg.seed)
    return _TABLE1[name]


@pytest.fixture(scope="session")
def ex1():
    return design_for("example1")


@pytest.fixture(scope="session")
def ex2():
    return design_for("example2")


@pytest.fixture(params=["example1", "example2"], scope="session")
def design(request):
    return design_for(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
