import numpy as np
import pytest

from msam import simgen
from msam.models import NoiseModel


def rect(w, h):
    return ((0.0, 0.0), (w, 0.0), (w, h), (0.0, h), (0.0, 0.0), (1.0, 0.0))


@pytest.fixture(scope="session")
def small_loop():
    """Noiseless single-robot loop; (datasets, truth, cfg)."""
    cfg = simgen.ScenarioConfig(
        paths=(rect(4.0, 3.0),), n_landmarks=12, landmark_layout="corridor", seed=7, step_length=0.5, noiseless=True
    )
    ds, gt = simgen.generate(cfg)
    return ds, gt, cfg


@pytest.fixture(scope="session")
def noisy_loop():
    cfg = simgen.ScenarioConfig(
        paths=(rect(6.0, 4.0),),
        n_landmarks=15,
        landmark_layout="corridor",
        seed=3,
        step_length=0.4,
        noise=NoiseModel((0.02, 0.02, 0.01), (0.05, 0.05)),
    )
    ds, gt = simgen.generate(cfg)
    return ds, gt, cfg


def random_pose(rng):
    return rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-np.pi, np.pi)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
