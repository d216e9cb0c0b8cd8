import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amrvol.bricks import (
    BrickBuildParams,
    InvalidCellsError,
    brick_stats,
    build_bricks,
)
from amrvol.model import brick_support

from conftest import make_cells


def _cell_map(cl):
    return {
        (int(i), int(j), int(k), int(l)): float(v)
        for i, j, k, l, v in zip(cl.i, cl.j, cl.k, cl.level, cl.values[:, 0])
    }


def assert_partitions(cells, model):
    """Every input cell appears in exactly one brick slot with its value."""
    want = _cell_map(cells)
    got = _cell_map(model.cell_list())
    assert got == want


def test_single_cell_single_brick():
    cl = make_cells([4], [4], [4], [2], [3.5])
    model, _ = build_bricks(cl)
    assert model.n_bricks == 1
    assert tuple(model.brick_dims[0]) == (1, 1, 1)
    assert model.brick_level[0] == 2
    assert_partitions(cl, model)


def test_adjacent_same_level_cells_merge():
    cl = make_cells([0, 1], [0, 0], [0, 0], [0, 0], [1.0, 2.0])
    model, _ = build_bricks(cl)
    assert model.n_bricks == 1
    assert tuple(model.brick_dims[0]) == (2, 1, 1)
    b = model.brick(0)
    assert b.cell_value(0, 0, 0) == 1.0 and b.cell_value(1, 0, 0) == 2.0


def test_max_brick_width_splits():
    cl = make_cells([0, 1], [0, 0], [0, 0], [0, 0], [1.0, 2.0])
    model, _ = build_bricks(cl, BrickBuildParams(max_brick_width=1))
    assert model.n_bricks == 2
    assert_partitions(cl, model)


def test_hole_forces_two_bricks():
    # cells at x = 0 and x = 2 with a gap: cannot be one dense grid
    cl = make_cells([0, 2], [0, 0], [0, 0], [0, 0], [1.0, 2.0])
    model, _ = build_bricks(cl)
    assert model.n_bricks == 2
    assert_partitions(cl, model)


def test_levels_never_mix_in_a_brick():
    cl = make_cells([0, 1, 2], [0, 0, 0], [0, 0, 0], [0, 0, 1], [1., 2., 3.])
    model, _ = build_bricks(cl)
    assert model.n_bricks == 2
    assert sorted(model.brick_level) == [0, 1]
    assert_partitions(cl, model)


def test_width_cap_default_32(smoke_cells, smoke):
    model, _, _ = smoke
    assert model.brick_dims.max() <= 32
    assert_partitions(smoke_cells, model)


def test_negative_anchors_supported():
    cl = make_cells([-8, -4], [-4, -4], [0, 0], [2, 2], [1.0, 2.0])
    model, _ = build_bricks(cl)
    assert model.n_bricks == 1
    assert tuple(model.brick_lower[0]) == (-8, -4, 0)
    assert_partitions(cl, model)


def test_build_deterministic_across_permutations(smoke_cells):
    base, base_tree = build_bricks(smoke_cells, BrickBuildParams(keep_split_tree=True))
    rng = np.random.default_rng(5)
    for _ in range(3):
        perm = rng.permutation(len(smoke_cells))
        model, tree = build_bricks(
            smoke_cells.permuted(perm), BrickBuildParams(keep_split_tree=True)
        )
        assert np.array_equal(model.brick_lower, base.brick_lower)
        assert np.array_equal(model.brick_level, base.brick_level)
        assert np.array_equal(model.brick_dims, base.brick_dims)
        assert np.array_equal(model.scalars, base.scalars)
        assert np.array_equal(tree.axis, base_tree.axis)
        assert np.array_equal(tree.pos, base_tree.pos)
        assert np.array_equal(tree.brick_start, base_tree.brick_start)


def test_invalid_cells_raise_with_report():
    cl = make_cells([0, 0], [0, 0], [0, 0], [0, 0], [1.0, 1.0])
    with pytest.raises(InvalidCellsError) as exc:
        build_bricks(cl)
    assert exc.value.report.duplicates == [(0, 1)]


def test_empty_input_builds_empty_model():
    cl = make_cells([], [], [], [], [])
    model, tree = build_bricks(cl, BrickBuildParams(keep_split_tree=True))
    assert model.n_bricks == 0 and model.n_cells == 0
    assert tree.n_nodes == 0
    st = brick_stats(model)
    assert st.n_bricks == 0


def test_split_tree_leaves_partition_bricks(smoke):
    model, tree, _ = smoke
    seen = []
    leaves = np.nonzero(tree.axis == -1)[0]
    for n in leaves:
        s, c = tree.brick_start[n], tree.brick_count[n]
        seen.extend(range(s, s + c))
    # brick_start ranges cover ids 0..n_bricks-1 exactly once
    assert sorted(seen) == list(range(model.n_bricks))


def test_split_tree_boxes_contain_children(smoke):
    model, tree, _ = smoke
    for n in range(tree.n_nodes):
        if tree.axis[n] < 0:
            continue
        for ch in (tree.left[n], tree.right[n]):
            assert np.all(tree.box_lo[ch] >= tree.box_lo[n] - 1e-12)
            assert np.all(tree.box_hi[ch] <= tree.box_hi[n] + 1e-12)
            assert tree.max_half[ch] <= tree.max_half[n]


def test_split_tree_max_half_matches_levels(smoke):
    model, tree, _ = smoke
    leaves = np.nonzero(tree.axis == -1)[0]
    for n in leaves[:50]:
        s, c = tree.brick_start[n], tree.brick_count[n]
        width = max(model.brick_width(b) for b in range(s, s + c))
        assert tree.max_half[n] == 0.5 * width


def test_brick_supports_cover_cells(smoke):
    model, _, _ = smoke
    for b in range(0, model.n_bricks, 97):
        brick = model.brick(b)
        sup = brick_support(brick)
        assert np.array_equal(sup.lo, brick.box.lo - 0.5 * brick.cell_width)
        assert np.array_equal(sup.hi, brick.box.hi + 0.5 * brick.cell_width)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 4))
def test_random_octrees_partition(seed, max_brick_width):
    from amrvol import io as avio

    spec = avio.SyntheticSpec(
        field="octaves", extent=(8, 8, 8), max_level=2, threshold=0.05,
        seed=seed, holes=((4, 4, 4, 1.5),),
    )
    cells = avio.generate_synthetic(spec)
    model, _ = build_bricks(cells, BrickBuildParams(max_brick_width=max_brick_width))
    assert model.brick_dims.max(initial=0) <= max_brick_width
    assert_partitions(cells, model)
