import numpy as np
import pytest

from amrvol import io as avio
from amrvol.bricks import BrickBuildParams, build_bricks
from amrvol.model import CellList
from amrvol.regions import build_regions

# Mid-size gaussian refinement with a carved hole and a forced fine pocket,
# so level jumps of more than one show up next to the coarse background.
SMOKE_SPEC = avio.SyntheticSpec(
    field="gaussian",
    extent=(32, 32, 32),
    max_level=3,
    threshold=0.04,
    seed=3,
    holes=((10, 10, 10, 4.0),),
    refine_spheres=((24, 24, 24, 5.0),),
)


@pytest.fixture(scope="session")
def smoke_cells() -> CellList:
    return avio.generate_synthetic(SMOKE_SPEC)


@pytest.fixture(scope="session")
def smoke(smoke_cells):
    """(model, tree, regions) for the shared mid-size scene."""
    model, tree = build_bricks(smoke_cells, BrickBuildParams(keep_split_tree=True))
    regions = build_regions(model)
    return model, tree, regions


@pytest.fixture(scope="session")
def ramp():
    """Fully refined level-0 ramp f(p) = p.x; reconstruction is exact."""
    spec = avio.SyntheticSpec(
        field="ramp", extent=(16, 16, 16), max_level=2, threshold=0.0, seed=0,
        field_params={"direction": (1.0, 0.0, 0.0)},
    )
    cells = avio.generate_synthetic(spec)
    model, tree = build_bricks(cells, BrickBuildParams(keep_split_tree=True))
    regions = build_regions(model)
    return model, tree, regions


@pytest.fixture(scope="session")
def constant():
    """Uniform value over a mixed-level grid; gradients must vanish."""
    spec = avio.SyntheticSpec(
        field="constant", extent=(16, 16, 16), max_level=2, threshold=np.inf,
        seed=0, refine_spheres=((4, 4, 4, 3.0),), field_params={"c": 7.5},
    )
    cells = avio.generate_synthetic(spec)
    model, tree = build_bricks(cells, BrickBuildParams(keep_split_tree=True))
    regions = build_regions(model)
    return model, tree, regions


def make_cells(i, j, k, level, values, field_names=("value",)):
    vals = np.asarray(values, np.float32)
    if vals.ndim == 1:
        vals = vals[:, None]
    return CellList(
        np.asarray(i, np.int64), np.asarray(j, np.int64), np.asarray(k, np.int64),
        np.asarray(level, np.int64), vals, tuple(field_names),
    )


@pytest.fixture
def two_cell_pair():
    """Two level-0 cells sharing a face along x, values 0 and 10."""
    return make_cells([0, 1], [0, 0], [0, 0], [0, 0], [0.0, 10.0])


def interior_points(rng, regions, n):
    """Random points inside random region boxes (strictly interior)."""
    idx = rng.integers(0, len(regions), n)
    u = rng.uniform(0.05, 0.95, (n, 3))
    return regions.lo[idx] + u * (regions.hi[idx] - regions.lo[idx])
