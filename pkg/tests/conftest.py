import numpy as np
import pytest

from deepkpm.scene import bundled_scene_path, load_scene, parse_scene

CAMERA = "camera { position 0 1 4 look_at 0 0 0 up 0 1 0 fov_degrees 40 width 8 height 6 }\n"
MINIMAL = CAMERA + """
material floor { kind lambertian albedo 0.5 0.5 0.5 }
primitive { shape quad corner -1 0 1 edge_u 2 0 0 edge_v 0 0 -2 material floor }
light { corner -0.5 2 -0.5 edge_u 1 0 0 edge_v 0 0 1 radiance 1 1 1 }
"""


def scene_from(body: str, camera: str = CAMERA):
    return parse_scene(camera + body)


@pytest.fixture(scope="session")
def caustic():
    return load_scene(bundled_scene_path("caustic"))


@pytest.fixture(scope="session")
def caustic_heldout():
    return load_scene(bundled_scene_path("caustic_heldout"))


@pytest.fixture(scope="session")
def diffuse():
    return load_scene(bundled_scene_path("diffuse"))


@pytest.fixture(scope="session")
def caustic_photons(caustic):
    from deepkpm.photons import trace_photons
    return trace_photons(caustic, 20_000, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import acceptance_report
    if acceptance_report.LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(acceptance_report.LINES):
            terminalreporter.write_line(acceptance_report.LINES[n])
