"""Scalar-field reconstruction and gradients on brick-decomposed AMR data.

A cell's basis weight is a hat function scaled to its own width, so samples
are convex combinations of nearby cell values and stay continuous across
level jumps. The region path, the cell-location path, and the brute-force
oracle all accumulate the same nonzero terms in the same order (ascending
brick id, x-fastest within a brick) with the same primitive, which makes
their results identical bit for bit. Do not reorder these loops.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .bricks import SplitTree
from .model import AmrModel, Cell
from .regions import ActiveBrickRegion, RegionSet, point_to_region

__all__ = [
    "EPS_WEIGHT",
    "SampleResult",
    "GradientResult",
    "hat_weight",
    "basis_sample_region",
    "basis_sample_oracle",
    "basis_sample_celllocation",
    "nearest_sample",
    "sample_at",
    "gradient_analytic",
    "gradient_central",
    "gradient_central_clamped",
]

# validity threshold on the accumulated weight sum
EPS_WEIGHT = 1e-12


@dataclass
class SampleResult:
    value: float
    weight_sum: float
    valid: bool


@dataclass
class GradientResult:
    vec: np.ndarray  # (3,) float64
    valid: bool


# ---------------------------------------------------------------------------
# Kernels. All paths share _hat_terms so equal inputs give equal floats.


@njit(cache=True, inline="always")
def _hat_terms(ai, aj, ak, w, px, py, pz):
    """Per-axis hat factors for the cell anchored at integer (ai,aj,ak)."""
    hx = 1.0 - abs((ai + 0.5 * w) - px) / w
    hy = 1.0 - abs((aj + 0.5 * w) - py) / w
    hz = 1.0 - abs((ak + 0.5 * w) - pz) / w
    return hx, hy, hz


@njit(cache=True)
def _accumulate_bricks(ids, blo, blev, bdims, boff, vals, px, py, pz):
    """Weighted sum over the candidate cells of the listed bricks.

    ids must be ascending. Zero-weight cells are skipped rather than added,
    so any superset of the bricks whose supports contain p yields the exact
    same partial-sum sequence as the full-model scan.
    """
    num = 0.0
    den = 0.0
    for t in range(len(ids)):
        b = ids[t]
        lev = np.int64(blev[b])
        w = 2.0 ** lev
        iw = np.int64(1) << lev
        nx = np.int64(bdims[b, 0])
        ny = np.int64(bdims[b, 1])
        nz = np.int64(bdims[b, 2])
        lx = np.int64(blo[b, 0])
        ly = np.int64(blo[b, 1])
        lz = np.int64(blo[b, 2])
        # nonzero weight needs the cell center within one width of p per axis,
        # so at most two lattice slots per axis can contribute
        x0 = np.int64(np.floor((px - lx) / w - 0.5))
        y0 = np.int64(np.floor((py - ly) / w - 0.5))
        z0 = np.int64(np.floor((pz - lz) / w - 0.5))
        base = boff[b]
        for z in range(max(z0, 0), min(z0 + 2, nz)):
            for y in range(max(y0, 0), min(y0 + 2, ny)):
                for x in range(max(x0, 0), min(x0 + 2, nx)):
                    hx, hy, hz = _hat_terms(
                        lx + x * iw, ly + y * iw, lz + z * iw, w, px, py, pz
                    )
                    if hx > 0.0 and hy > 0.0 and hz > 0.0:
                        h = hx * hy * hz
                        num += h * vals[base + x + nx * (y + ny * z)]
                        den += h
    return num, den


@njit(cache=True)
def _accumulate_cells(ci, cj, ck, clev, cvals, px, py, pz):
    """Reference scan over an explicit cell list, in its given order."""
    num = 0.0
    den = 0.0
    for t in range(len(ci)):
        w = 2.0 ** np.int64(clev[t])
        hx, hy, hz = _hat_terms(
            np.int64(ci[t]), np.int64(cj[t]), np.int64(ck[t]), w, px, py, pz
        )
        if hx > 0.0 and hy > 0.0 and hz > 0.0:
            h = hx * hy * hz
            num += h * cvals[t]
            den += h
    return num, den


@njit(cache=True)
def _gradient_bricks(ids, blo, blev, bdims, boff, vals, px, py, pz):
    """Value and derivative accumulators over the listed bricks.

    d(hat)/dp per axis is sign(center - p)/w times the other two factors;
    the sign at an exact center coordinate takes the descending branch.
    Values are shifted by the first contributing cell's value so a locally
    constant field cancels to an exactly zero gradient.
    """
    num = 0.0
    den = 0.0
    dnx = dny = dnz = 0.0
    ddx = ddy = ddz = 0.0
    v0 = 0.0
    have_ref = False
    for t in range(len(ids)):
        b = ids[t]
        lev = np.int64(blev[b])
        w = 2.0 ** lev
        iw = np.int64(1) << lev
        nx = np.int64(bdims[b, 0])
        ny = np.int64(bdims[b, 1])
        nz = np.int64(bdims[b, 2])
        lx = np.int64(blo[b, 0])
        ly = np.int64(blo[b, 1])
        lz = np.int64(blo[b, 2])
        x0 = np.int64(np.floor((px - lx) / w - 0.5))
        y0 = np.int64(np.floor((py - ly) / w - 0.5))
        z0 = np.int64(np.floor((pz - lz) / w - 0.5))
        base = boff[b]
        for z in range(max(z0, 0), min(z0 + 2, nz)):
            for y in range(max(y0, 0), min(y0 + 2, ny)):
                for x in range(max(x0, 0), min(x0 + 2, nx)):
                    ai = lx + x * iw
                    aj = ly + y * iw
                    ak = lz + z * iw
                    hx, hy, hz = _hat_terms(ai, aj, ak, w, px, py, pz)
                    if hx > 0.0 and hy > 0.0 and hz > 0.0:
                        sx = 1.0 if (ai + 0.5 * w) - px > 0.0 else -1.0
                        sy = 1.0 if (aj + 0.5 * w) - py > 0.0 else -1.0
                        sz = 1.0 if (ak + 0.5 * w) - pz > 0.0 else -1.0
                        gx = sx / w * hy * hz
                        gy = sy / w * hx * hz
                        gz = sz / w * hx * hy
                        h = hx * hy * hz
                        v = np.float64(vals[base + x + nx * (y + ny * z)])
                        if not have_ref:
                            v0 = v
                            have_ref = True
                        u = v - v0
                        num += h * u
                        den += h
                        dnx += gx * u
                        dny += gy * u
                        dnz += gz * u
                        ddx += gx
                        ddy += gy
                        ddz += gz
    return num, den, dnx, dny, dnz, ddx, ddy, ddz


@njit(cache=True)
def _collect_bricks(axis, left, right, brick_start, brick_count, box_lo, box_hi, max_half, px, py, pz, out):
    """Brick ids whose subtree's dilated box contains p, sorted ascending.

    Dilation by the subtree's largest half cell width over-approximates every
    contained brick support, so no contributing brick is missed.
    """
    n = 0
    stack = np.empty(128, np.int32)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        nd = stack[top]
        e = max_half[nd]
        if (
            px <= box_lo[nd, 0] - e or px >= box_hi[nd, 0] + e
            or py <= box_lo[nd, 1] - e or py >= box_hi[nd, 1] + e
            or pz <= box_lo[nd, 2] - e or pz >= box_hi[nd, 2] + e
        ):
            continue
        if axis[nd] < 0:
            for b in range(brick_start[nd], brick_start[nd] + brick_count[nd]):
                if n < len(out):
                    out[n] = b
                    n += 1
        else:
            stack[top] = right[nd]
            top += 1
            stack[top] = left[nd]
            top += 1
    # insertion sort; candidate sets are small
    for a in range(1, n):
        key = out[a]
        c = a - 1
        while c >= 0 and out[c] > key:
            out[c + 1] = out[c]
            c -= 1
        out[c + 1] = key
    return n


@njit(cache=True)
def _nearest_kernel(axis, pos, left, right, brick_start, brick_count, box_lo, box_hi, blo, blev, bdims, boff, vals, px, py, pz):
    """Value of the cell containing p, or NaN when p lies in a hole."""
    nd = 0
    while True:
        if (
            px < box_lo[nd, 0] or px >= box_hi[nd, 0]
            or py < box_lo[nd, 1] or py >= box_hi[nd, 1]
            or pz < box_lo[nd, 2] or pz >= box_hi[nd, 2]
        ):
            return np.nan
        if axis[nd] < 0:
            break
        a = axis[nd]
        q = px if a == 0 else (py if a == 1 else pz)
        nd = left[nd] if q < pos[nd] else right[nd]
    for b in range(brick_start[nd], brick_start[nd] + brick_count[nd]):
        w = 2.0 ** np.int64(blev[b])
        x = np.int64(np.floor((px - blo[b, 0]) / w))
        y = np.int64(np.floor((py - blo[b, 1]) / w))
        z = np.int64(np.floor((pz - blo[b, 2]) / w))
        nx = np.int64(bdims[b, 0])
        ny = np.int64(bdims[b, 1])
        nz = np.int64(bdims[b, 2])
        if 0 <= x < nx and 0 <= y < ny and 0 <= z < nz:
            return np.float64(vals[boff[b] + x + nx * (y + ny * z)])
    return np.nan


# ---------------------------------------------------------------------------
# Public API


def hat_weight(cell: Cell, p) -> float:
    """Basis weight of one cell at p; in [0,1], zero outside its support."""
    p = np.asarray(p, np.float64)
    w = cell.coord.width
    c = cell.center
    h = 1.0
    for a in range(3):
        h *= max(1.0 - abs(c[a] - p[a]) / w, 0.0)
    return h


def _field_values(model: AmrModel, field: int) -> np.ndarray:
    return np.ascontiguousarray(model.scalars[field])


def _result(num: float, den: float) -> SampleResult:
    if den > EPS_WEIGHT:
        return SampleResult(num / den, den, True)
    return SampleResult(0.0, den, False)


def basis_sample_region(p, region: ActiveBrickRegion, model: AmrModel, field: int = 0) -> SampleResult:
    """Weighted-average sample using only the region's brick list."""
    p = np.asarray(p, np.float64)
    num, den = _accumulate_bricks(
        region.brick_ids, model.brick_lower, model.brick_level, model.brick_dims,
        model.brick_offset, _field_values(model, field), p[0], p[1], p[2],
    )
    return _result(num, den)


def basis_sample_oracle(p, cells, field: int = 0) -> SampleResult:
    """Linear scan over every cell; the ground-truth reference path."""
    p = np.asarray(p, np.float64)
    num, den = _accumulate_cells(
        cells.i, cells.j, cells.k, cells.level,
        np.ascontiguousarray(cells.values[:, field]), p[0], p[1], p[2],
    )
    return _result(num, den)


def basis_sample_celllocation(p, tree: SplitTree, model: AmrModel, field: int = 0) -> SampleResult:
    """Sample by descending the retained split tree instead of a region list.

    Baseline for the lookup benchmark; numerically identical to the region
    path because the gathered brick set is a superset visited in id order.
    """
    p = np.asarray(p, np.float64)
    buf = np.empty(1024, np.int32)
    n = _collect_bricks(
        tree.axis, tree.left, tree.right, tree.brick_start, tree.brick_count,
        tree.box_lo, tree.box_hi, tree.max_half, p[0], p[1], p[2], buf,
    )
    num, den = _accumulate_bricks(
        buf[:n], model.brick_lower, model.brick_level, model.brick_dims,
        model.brick_offset, _field_values(model, field), p[0], p[1], p[2],
    )
    return _result(num, den)


def nearest_sample(p, tree: SplitTree, model: AmrModel, field: int = 0) -> SampleResult:
    """Value of the cell whose box contains p; invalid in coverage holes."""
    p = np.asarray(p, np.float64)
    v = _nearest_kernel(
        tree.axis, tree.pos, tree.left, tree.right, tree.brick_start,
        tree.brick_count, tree.box_lo, tree.box_hi,
        model.brick_lower, model.brick_level, model.brick_dims,
        model.brick_offset, _field_values(model, field), p[0], p[1], p[2],
    )
    if np.isnan(v):
        return SampleResult(0.0, 0.0, False)
    return SampleResult(float(v), 1.0, True)


def sample_at(p, regions: RegionSet, model: AmrModel, field: int = 0) -> SampleResult:
    """Locate the region containing p and sample there."""
    r = point_to_region(regions, p)
    if r is None:
        return SampleResult(0.0, 0.0, False)
    return basis_sample_region(p, regions[r], model, field)


def gradient_analytic(p, region: ActiveBrickRegion, model: AmrModel, field: int = 0) -> GradientResult:
    """Exact derivative of the weighted average, from the same cell gather."""
    p = np.asarray(p, np.float64)
    num, den, dnx, dny, dnz, ddx, ddy, ddz = _gradient_bricks(
        region.brick_ids, model.brick_lower, model.brick_level, model.brick_dims,
        model.brick_offset, _field_values(model, field), p[0], p[1], p[2],
    )
    if den <= EPS_WEIGHT:
        return GradientResult(np.zeros(3), False)
    dn = np.array([dnx, dny, dnz])
    dd = np.array([ddx, ddy, ddz])
    return GradientResult((dn * den - num * dd) / (den * den), True)


def gradient_central(p, regions: RegionSet, model: AmrModel, field: int = 0, offset_scale: float = 0.5) -> GradientResult:
    """Central differences with offsets of offset_scale x finest cell width.

    Offset points are re-located through the all-regions index, so neighbors
    in other regions are sampled there; offsets landing outside the support
    union degrade to one-sided differences.
    """
    p = np.asarray(p, np.float64)
    r0 = point_to_region(regions, p)
    if r0 is None:
        return GradientResult(np.zeros(3), False)
    h = offset_scale * regions.finest_width[r0]
    center = sample_at(p, regions, model, field)
    g = np.zeros(3)
    for a in range(3):
        q = p.copy()
        q[a] = p[a] + h
        fp = sample_at(q, regions, model, field)
        q[a] = p[a] - h
        fm = sample_at(q, regions, model, field)
        if fp.valid and fm.valid:
            g[a] = (fp.value - fm.value) / (2.0 * h)
        elif fp.valid and center.valid:
            g[a] = (fp.value - center.value) / h
        elif fm.valid and center.valid:
            g[a] = (center.value - fm.value) / h
    return GradientResult(g, center.valid)


def gradient_central_clamped(p, region: ActiveBrickRegion, model: AmrModel, field: int = 0, offset_scale: float = 0.5) -> GradientResult:
    """Central differences with offsets clamped into the region box.

    Divisors use the actual clamped span, going one-sided at region faces.
    Never leaves the region, at the cost of boundary artifacts.
    """
    p = np.asarray(p, np.float64)
    h = offset_scale * region.finest_cell_width
    lo, hi = region.box.lo, region.box.hi
    g = np.zeros(3)
    any_valid = False
    for a in range(3):
        qa = max(lo[a], p[a] - h)
        qb = min(hi[a], p[a] + h)
        if qb <= qa:
            continue
        q = p.copy()
        q[a] = qa
        fa = basis_sample_region(q, region, model, field)
        q[a] = qb
        fb = basis_sample_region(q, region, model, field)
        if fa.valid and fb.valid:
            g[a] = (fb.value - fa.value) / (qb - qa)
            any_valid = True
    return GradientResult(g, any_valid)
