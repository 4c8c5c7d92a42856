import numpy as np
import pytest

from stylefield.tensor_grid import GridGeometry


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_geometry():
    return GridGeometry((7, 6, 5), (-1.0, -0.5, -1.5), (1.0, 1.5, 0.5))


def trilinear(dense, geometry, x):
    """Trilinear interpolation of a dense ``(nx, ny, nz, C)`` array, one point at a time."""
    t = geometry.to_index(np.asarray(x, dtype=np.float64))
    out = np.zeros(dense.shape[-1])
    i0 = [min(int(np.floor(t[a])), geometry.resolution[a] - 2) for a in range(3)]
    f = [t[a] - i0[a] for a in range(3)]
    for di in (0, 1):
        for dj in (0, 1):
            for dk in (0, 1):
                w = (f[0] if di else 1 - f[0]) * (f[1] if dj else 1 - f[1]) * (f[2] if dk else 1 - f[2])
                out += w * dense[i0[0] + di, i0[1] + dj, i0[2] + dk]
    return out


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
