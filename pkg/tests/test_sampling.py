import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amrvol.bricks import build_bricks
from amrvol.model import Cell, LevelCoord
from amrvol.regions import build_regions, point_to_region
from amrvol.sampling import (
    basis_sample_celllocation,
    basis_sample_oracle,
    basis_sample_region,
    gradient_analytic,
    gradient_central,
    gradient_central_clamped,
    hat_weight,
    nearest_sample,
    sample_at,
)

from conftest import make_cells


# -- hat basis -----------------------------------------------------------------


def test_hat_weight_peaks_at_center():
    c = Cell(LevelCoord(0, 0, 0, 0))
    assert hat_weight(c, [0.5, 0.5, 0.5]) == 1.0
    assert hat_weight(c, [1.0, 0.5, 0.5]) == 0.5
    assert hat_weight(c, [0.75, 0.75, 0.75]) == 0.421875  # 0.75**3


def test_hat_weight_zero_outside_support():
    c = Cell(LevelCoord(0, 0, 0, 0))
    assert hat_weight(c, [1.5, 0.5, 0.5]) == 0.0
    assert hat_weight(c, [2.0, 0.5, 0.5]) == 0.0


def test_hat_weight_scales_with_level():
    c = Cell(LevelCoord(0, 0, 0, 1))  # width 2, center (1,1,1), support (-1,3)
    assert hat_weight(c, [1.0, 1.0, 1.0]) == 1.0
    assert hat_weight(c, [2.0, 1.0, 1.0]) == 0.5
    assert hat_weight(c, [3.0, 1.0, 1.0]) == 0.0


# -- reconstruction on known fields ---------------------------------------------


def _grid_model(n, f):
    """Dense level-0 n^3 grid with values f(center)."""
    ax = np.arange(n)
    i, j, k = np.meshgrid(ax, ax, ax, indexing="ij")
    i, j, k = i.ravel(), j.ravel(), k.ravel()
    vals = f(i + 0.5, j + 0.5, k + 0.5)
    cl = make_cells(i, j, k, np.zeros_like(i), vals)
    model, tree = build_bricks(cl)
    return cl, model, build_regions(model)


def test_uniform_grid_weights_partition_unity():
    cl, model, regions = _grid_model(4, lambda x, y, z: np.ones_like(x))
    rng = np.random.default_rng(0)
    pts = rng.uniform(0.5, 3.5, (50, 3))  # inside the cell-center hull
    for p in pts:
        s = sample_at(p, regions, model)
        assert s.valid
        assert s.weight_sum == pytest.approx(1.0, abs=1e-12)
        assert s.value == pytest.approx(1.0, abs=1e-12)


def test_uniform_grid_reproduces_linear_fields():
    cl, model, regions = _grid_model(4, lambda x, y, z: 2 * x + 3 * y - z + 1)
    rng = np.random.default_rng(1)
    for p in rng.uniform(0.5, 3.5, (50, 3)):
        s = sample_at(p, regions, model)
        want = 2 * p[0] + 3 * p[1] - p[2] + 1
        assert s.value == pytest.approx(want, rel=1e-6)


def test_two_cell_ramp_profile(two_cell_pair):
    model, _ = build_bricks(two_cell_pair)
    regions = build_regions(model)

    def f(x):
        return sample_at([x, 0.5, 0.5], regions, model).value

    assert f(0.25) == 0.0       # left plateau: only cell 0 contributes
    assert f(1.0) == 5.0        # midpoint between the centers
    assert f(1.25) == 7.5
    assert f(1.75) == 10.0      # right plateau
    s = sample_at([1.0, 0.5, 0.5], regions, model)
    assert s.weight_sum == 1.0


def test_outside_support_union_invalid(two_cell_pair):
    model, _ = build_bricks(two_cell_pair)
    regions = build_regions(model)
    s = sample_at([5.0, 0.5, 0.5], regions, model)
    assert not s.valid and s.value == 0.0 and s.weight_sum == 0.0


# -- path equivalence ------------------------------------------------------------


def test_three_sampling_paths_bit_exact(smoke):
    model, tree, regions = smoke
    cl = model.cell_list()
    rng = np.random.default_rng(7)
    b = regions.bounds
    pts = rng.uniform(b.lo - 0.5, b.hi + 0.5, (2000, 3))
    mismatches = 0
    for p in pts:
        o = basis_sample_oracle(p, cl)
        c = basis_sample_celllocation(p, tree, model)
        r = point_to_region(regions, p)
        if r is None:
            ok = not o.valid and not c.valid
        else:
            s = basis_sample_region(p, regions[r], model)
            ok = (
                (s.value, s.weight_sum, s.valid)
                == (o.value, o.weight_sum, o.valid)
                == (c.value, c.weight_sum, c.valid)
            )
        mismatches += not ok
    assert mismatches == 0


def test_nearest_sample_returns_containing_cell(smoke):
    model, tree, regions = smoke
    cl = model.cell_list()
    rng = np.random.default_rng(3)
    idx = rng.integers(0, len(cl), 200)
    w = 2.0 ** cl.level[idx]
    offs = rng.uniform(0.05, 0.95, (200, 3)) * w[:, None]
    pts = np.stack([cl.i[idx], cl.j[idx], cl.k[idx]], 1) + offs
    for t, p in zip(idx, pts):
        s = nearest_sample(p, tree, model)
        assert s.valid and s.value == cl.values[t, 0]


def test_nearest_sample_invalid_in_hole(smoke):
    model, tree, _ = smoke
    assert not nearest_sample([10.0, 10.0, 10.0], tree, model).valid


# -- continuity -------------------------------------------------------------------


@settings(max_examples=80, deadline=None)
@given(st.floats(-0.4, 2.4), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_two_cell_reconstruction_is_lipschitz(x, y, z):
    cl = make_cells([0, 1], [0, 0], [0, 0], [0, 0], [0.0, 10.0])
    model, _ = build_bricks(cl)
    regions = build_regions(model)
    d = 1e-5
    a = sample_at([x - d, y, z], regions, model)
    b = sample_at([x + d, y, z], regions, model)
    if a.valid and b.valid:
        # spread 10 over finest width 1 -> slope bound well under 10x that
        assert abs(b.value - a.value) <= 100.0 * (2 * d) + 1e-12


def test_continuity_across_region_faces(smoke):
    model, _, regions = smoke
    rng = np.random.default_rng(11)
    d = 1e-5
    checked = 0
    while checked < 100:
        r = int(rng.integers(0, len(regions)))
        axis = int(rng.integers(0, 3))
        face = regions.hi[r, axis]
        p = regions.lo[r] + rng.uniform(0.2, 0.8, 3) * (regions.hi[r] - regions.lo[r])
        p[axis] = face
        lo = p.copy(); lo[axis] -= d
        hi = p.copy(); hi[axis] += d
        a = sample_at(lo, regions, model)
        b = sample_at(hi, regions, model)
        if not (a.valid and b.valid):
            continue
        if min(a.weight_sum, b.weight_sum) < 0.25:
            # slope scales with 1/weight at support fringes
            continue
        # the spread local to the face spans both adjacent regions
        r2 = point_to_region(regions, hi)
        rr = regions.value_range[[r, r2], 0]
        spread = rr[:, 1].max() - rr[:, 0].min()
        finest = min(regions.finest_width[r], regions.finest_width[r2])
        k = 10.0 * max(spread, 1e-6) / finest
        assert abs(b.value - a.value) <= k * (2 * d) + 1e-9
        checked += 1


# -- gradients --------------------------------------------------------------------


def test_two_cell_ramp_gradient_is_ten(two_cell_pair):
    model, _ = build_bricks(two_cell_pair)
    regions = build_regions(model)
    for x in (0.75, 1.0, 1.3):
        r = point_to_region(regions, [x, 0.5, 0.5])
        g = gradient_analytic([x, 0.5, 0.5], regions[r], model)
        assert g.valid
        assert g.vec[0] == pytest.approx(10.0, abs=1e-6)
        assert g.vec[1] == pytest.approx(0.0, abs=1e-6)
        assert g.vec[2] == pytest.approx(0.0, abs=1e-6)


def test_constant_field_gradient_exactly_zero(constant):
    model, _, regions = constant
    rng = np.random.default_rng(5)
    b = regions.bounds
    done = 0
    for p in rng.uniform(b.lo, b.hi, (400, 3)):
        r = point_to_region(regions, p)
        if r is None:
            continue
        g = gradient_analytic(p, regions[r], model)
        if g.valid:
            assert np.all(g.vec == 0.0), p
            done += 1
    assert done > 100


def _lattice_clear(p, margin):
    return np.all(np.abs(p * 2.0 - np.rint(p * 2.0)) * 0.5 > margin)


def test_analytic_gradient_matches_fd(smoke):
    model, _, regions = smoke
    rng = np.random.default_rng(9)
    b = regions.bounds
    checked = 0
    while checked < 100:
        p = rng.uniform(b.lo, b.hi)
        if not _lattice_clear(p, 0.05):
            continue
        r = point_to_region(regions, p)
        if r is None:
            continue
        h = 1e-3 * regions.finest_width[r]
        fd = np.zeros(3)
        ok = True
        for a in range(3):
            qp, qm = p.copy(), p.copy()
            qp[a] += h
            qm[a] -= h
            sp, sm = sample_at(qp, regions, model), sample_at(qm, regions, model)
            ok &= sp.valid and sm.valid
            fd[a] = (sp.value - sm.value) / (2 * h)
        if not ok:
            continue
        g = gradient_analytic(p, regions[r], model)
        assert g.valid
        denom = max(np.linalg.norm(fd), 1e-9)
        assert np.linalg.norm(g.vec - fd) / denom < 1e-3, (p, g.vec, fd)
        checked += 1


def test_central_difference_on_linear_field():
    _, model, regions = _grid_model(6, lambda x, y, z: 2 * x + 3 * y - z + 1)
    rng = np.random.default_rng(13)
    for p in rng.uniform(1.5, 4.5, (40, 3)):
        g = gradient_central(p, regions, model)
        assert g.valid
        assert np.allclose(g.vec, [2.0, 3.0, -1.0], atol=1e-9)


def test_clamped_central_stays_in_region(smoke):
    model, _, regions = smoke
    rng = np.random.default_rng(15)
    done = 0
    for _ in range(300):
        r = int(rng.integers(0, len(regions)))
        # probe right at a region corner: unclamped offsets would leave the box
        p = regions.lo[r] + 1e-9
        g = gradient_central_clamped(p, regions[r], model)
        if g.valid:
            assert np.all(np.isfinite(g.vec))
            done += 1
        if done >= 50:
            break
    assert done >= 50


def test_gradient_invalid_outside_union(smoke):
    model, _, regions = smoke
    g = gradient_central([999.0, 0.0, 0.0], regions, model)
    assert not g.valid and np.all(g.vec == 0.0)
