import numpy as np
import pytest

from semamesh.raycast import build_bvh
from semamesh.synthetic import make_scene


@pytest.fixture(scope="session")
def scene():
    return make_scene(seed=0)


@pytest.fixture(scope="session")
def scene_bvh(scene):
    return build_bvh(scene.mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    """Print and remember one acceptance verdict, then fail the test if needed."""
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}" + (f" ({detail})" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture
def criterion():
    return record_criterion


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
