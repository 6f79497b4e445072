import numpy as np
import pytest

from homd import Mesh, add_gaussian_noise
from homd import primitives as prim


def perturbed_sphere(seed=0, amplitude=0.05):
    """UV sphere (1984 faces) with random radial bumps."""
    v, f = prim.uv_sphere(32, 32)
    rng = np.random.default_rng(seed)
    v = v * (1.0 + amplitude * rng.uniform(-1.0, 1.0, size=(len(v), 1)))
    return Mesh(v, f)


def small_meshes():
    """The five meshes used for operator identities, keyed by name."""
    return {
        "triangle": Mesh(*prim.single_triangle()),
        "tetrahedron": Mesh(*prim.tetrahedron()),
        "icosphere2": Mesh(*prim.icosphere(2)),
        "grid": Mesh(*prim.grid_patch(6, 5)),
        "sphere2k": perturbed_sphere(),
    }


@pytest.fixture(scope="session")
def meshes():
    return small_meshes()


@pytest.fixture(scope="session")
def cube():
    return Mesh(*prim.subdivided_cube(16))


@pytest.fixture(scope="session")
def noisy_cube(cube):
    return add_gaussian_noise(cube, 0.15, seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance report ---------------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record ``(number, title)`` and outcome details for the summary table."""

    class Recorder:
        def __init__(self):
            self.details = []

        def __call__(self, number, title):
            self.key = (number, title)
            ACCEPTANCE.setdefault(self.key, {"status": "FAIL", "details": []})
            return self

        def note(self, text):
            ACCEPTANCE[self.key]["details"].append(text)

    rec = Recorder()
    yield rec
    rep = getattr(request.node, "rep_call", None)
    if hasattr(rec, "key") and rep is not None and rep.passed:
        ACCEPTANCE[rec.key]["status"] = "PASS"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), res in sorted(ACCEPTANCE.items()):
        detail = "; ".join(res["details"])
        terminalreporter.write_line(f"[{res['status']}] {number:>2}. {title}: {detail}")
