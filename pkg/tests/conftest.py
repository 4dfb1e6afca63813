import numpy as np
import pytest

from bfdarcy.mesh import B, D, CoupledMesh, build_structured, StackedRectangles


def single_triangle(domain=B):
    return CoupledMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]], [domain])


def two_triangles(domain=B):
    pts = [[0, 0], [1, 0], [1, 1], [0, 1]]
    return CoupledMesh(pts, [[0, 1, 2], [0, 2, 3]], [domain, domain])


def diamond():
    """Two B triangles above two D triangles; the interface y = 0 has two edges."""
    pts = [[0, 0], [1, 0], [2, 0], [1, 1], [1, -1]]
    tris = [[0, 1, 3], [1, 2, 3], [0, 4, 1], [1, 4, 2]]
    return CoupledMesh(pts, tris, [B, B, D, D])


def small_coupled(nx=4, ny=2):
    return build_structured(StackedRectangles(0.0, 1.0, 0.0, 0.5, 1.0), nx, ny, ny)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdicts, printed once at the end of the session
VERDICTS = {}


class criterion:
    """Context manager recording PASS/FAIL for one acceptance criterion."""

    def __init__(self, label):
        self.label = label
        self.details = []

    def note(self, text):
        self.details.append(text)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        VERDICTS[self.label] = (status, "; ".join(self.details))
        return False


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, (status, detail) in VERDICTS.items():
        terminalreporter.write_line(f"{status}  {label}" + (f"  ({detail})" if detail else ""))
