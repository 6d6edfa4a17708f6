import numpy as np
import pytest

from hmt3d.numerics import make_rng
from hmt3d.voxel_grid import GridSpec, SparseVoxelGrid

ACCEPTANCE = {}


def random_grid(rng, extents, count, d, spec=None):
    """``count`` distinct occupied cells of an ``extents`` box with normal features."""
    total = int(np.prod(extents))
    cells = rng.choice(total, size=min(count, total), replace=False)
    coords = np.stack(np.unravel_index(cells, extents), axis=1)
    return SparseVoxelGrid(spec or GridSpec.unit(extents), coords, rng.normal(size=(len(cells), d)))


@pytest.fixture
def rng():
    return make_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])
