import numpy as np
import pytest

from aerograsp.dynamics import Link, MultibodyModel, default_model
from aerograsp.so3 import expm


def spatial_arm(seed=3, n=4):
    """A deliberately irregular arm: skew axes, rotated joint origins, off-axis CoMs."""
    rng = np.random.default_rng(seed)
    links = []
    for i in range(n):
        axis = rng.normal(size=3)
        A = rng.normal(size=(3, 3))
        links.append(
            Link(
                mass=rng.uniform(0.05, 0.3),
                com=rng.normal(scale=0.05, size=3),
                inertia=A @ A.T * 1e-3 + np.eye(3) * 1e-4,
                axis=axis / np.linalg.norm(axis),
                origin_pos=rng.normal(scale=0.1, size=3),
                origin_rot=expm(rng.normal(size=3)),
            )
        )
    B = rng.normal(size=(3, 3))
    return MultibodyModel(1.3, B @ B.T * 1e-2 + np.eye(3) * 1e-2, links,
                          ee_pos=rng.normal(scale=0.05, size=3), ee_rot=expm(rng.normal(size=3)))


@pytest.fixture(params=["default", "spatial"])
def model(request):
    return default_model() if request.param == "default" else spatial_arm()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def acceptance_line(request):
    """Print a criterion verdict now and repeat it in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def emit(criterion, passed, detail):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
