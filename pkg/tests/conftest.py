import numpy as np
import pytest

from hexrecon.harness import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_sphere_scene():
    """8 views of the textured sphere at 32 px: cheap enough for unit tests."""
    return generate_synthetic("sphere", n_views=8, res=32, seed=0, gt_level=4)


@pytest.fixture(scope="session")
def carved_sphere_mesh():
    """Marching-cubes surface of a 64^3 hull from 12 views."""
    from hexrecon.carving import carve, marching_cubes

    scene, _ = generate_synthetic("sphere", n_views=12, res=64, seed=0, gt_level=3)
    return marching_cubes(carve(scene.masks, scene.cameras, res=64))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
