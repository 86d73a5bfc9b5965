import numpy as np
import pytest

from rops3d.shapes import bumpy_blob, bundled_model, icosphere, planar_grid


@pytest.fixture(scope="session")
def small_blob():
    """642-vertex closed blob; fast enough for brute-force oracles."""
    return bumpy_blob(5, subdivisions=3)


@pytest.fixture(scope="session")
def medium_blob():
    return bumpy_blob(7, subdivisions=4)


@pytest.fixture(scope="session")
def blob_a():
    return bundled_model("blob_a")


@pytest.fixture(scope="session")
def sphere():
    return icosphere(3)


@pytest.fixture(scope="session")
def grid():
    return planar_grid(20, spacing=1.0, jitter=0.2, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_library():
    """Two level-4 bundled models, 400 seeds each."""
    from rops3d.library import build_model_library

    names = ["blob_a", "blob_b"]
    meshes = [bundled_model(n, 4) for n in names]
    return build_model_library(meshes, 400, names=names)


@pytest.fixture(scope="session")
def full_library():
    """Three level-5 bundled models with the default 1000 seeds."""
    from rops3d.library import build_model_library

    names = ["blob_a", "blob_b", "blob_c"]
    return build_model_library([bundled_model(n) for n in names], names=names)


_ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion."""

    def _report(number, ok, detail):
        line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
