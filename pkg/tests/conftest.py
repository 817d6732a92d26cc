import os

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

np.seterr(all="warn", under="ignore")  # flushing tiny products to zero is harmless


@pytest.fixture(scope="session")
def indoor_scene():
    from camforge.scene import SceneSpec, generate_scene
    return generate_scene(SceneSpec(seed=3))


@pytest.fixture(scope="session")
def outdoor_scene():
    from camforge.scene import SceneKind, SceneSpec, generate_scene
    return generate_scene(SceneSpec(kind=SceneKind.OUTDOOR_STRIP, seed=1))


@pytest.fixture(scope="session")
def plane_scene():
    """Textured fronto-parallel plane at z = 10 m, lit by ambient light only."""
    from camforge.scene import Box, SceneInstance, SceneKind, Texture, WALL_CLASS
    wall = Box((-40.0, -30.0, 10.0), (40.0, 30.0, 10.0), WALL_CLASS, 1, (0.5, 0.5, 0.5), Texture.NOISE, 4.0, 0.8)
    return SceneInstance(SceneKind.TARGET, (80.0, 60.0, 10.0), (wall,), (), 20.0, 0.0, (), ())


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture()
def acceptance(request):
    """Context manager factory that records one pass/fail line per criterion."""
    import contextlib
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    @contextlib.contextmanager
    def criterion(n, name):
        try:
            yield
        except BaseException as exc:
            lines.append((n, f"FAIL  criterion {n:2d}: {name} ({type(exc).__name__}: {str(exc).splitlines()[0][:100] if str(exc) else ''})"))
            raise
        lines.append((n, f"PASS  criterion {n:2d}: {name}"))
    return criterion


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
