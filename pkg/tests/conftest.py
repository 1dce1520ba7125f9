import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from chc.benchmarks import PendulumParams, ThreeTankParams, pendulum_model, threetank_model
from chc.dynamics import HybridSystemModel, ModeDynamics

settings.register_profile(
    "chc", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("chc")

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance_report(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash[_ACCEPTANCE]

    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title} | {detail}"
        lines.append(line)
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def pendulum_params():
    return PendulumParams()


@pytest.fixture(scope="session")
def pendulum(pendulum_params):
    return pendulum_model(pendulum_params)


@pytest.fixture(scope="session")
def tank_params():
    return ThreeTankParams()


@pytest.fixture(scope="session")
def tank(tank_params):
    return threetank_model(tank_params)


def integrator_model(lo=0.0, hi=1.0, u_bound=1.0) -> HybridSystemModel:
    """1-D ``xdot = u`` on ``[lo, hi]``."""
    mode = ModeDynamics.affine([[0.0]], [0.0], [[1.0]])
    return HybridSystemModel(np.array([[lo, hi]]), np.array([[-u_bound, u_bound]]), (mode,), {(): 0})


def drift_model(rate=1.0, lo=0.0, hi=1.0) -> HybridSystemModel:
    """1-D ``xdot = rate`` with an inert input channel."""
    mode = ModeDynamics.affine([[0.0]], [rate], [[0.0]])
    return HybridSystemModel(np.array([[lo, hi]]), np.array([[-1.0, 1.0]]), (mode,), {(): 0})
