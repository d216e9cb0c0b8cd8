"""Active brick regions: a disjoint rectangular decomposition of the union of
brick supports, where each region lists every brick whose support overlaps its
interior plus per-field value bounds and the finest contributing cell width.

All support corners sit on multiples of half a finest cell, so the build runs
on integer half-unit coordinates and every comparison is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import AmrModel, Box3

__all__ = [
    "ActiveBrickRegion",
    "RegionSet",
    "build_regions",
    "point_to_region",
    "RegionStats",
    "region_stats",
]


@dataclass
class ActiveBrickRegion:
    box: Box3
    brick_ids: np.ndarray  # sorted ascending
    value_range: np.ndarray  # (n_fields, 2)
    finest_cell_width: float


class RegionSet:
    """Columnar region storage; behaves like a sequence of ActiveBrickRegion."""

    def __init__(self, lo, hi, brick_off, brick_ids, value_range, finest_width, field_names):
        self.lo = np.ascontiguousarray(lo, np.float64).reshape(-1, 3)
        self.hi = np.ascontiguousarray(hi, np.float64).reshape(-1, 3)
        self.brick_off = np.ascontiguousarray(brick_off, np.int64)
        self.brick_ids = np.ascontiguousarray(brick_ids, np.int32)
        self.value_range = np.ascontiguousarray(value_range, np.float64)
        self.finest_width = np.ascontiguousarray(finest_width, np.float64)
        self.field_names = tuple(field_names)
        self._point_index = None

    def __len__(self) -> int:
        return len(self.finest_width)

    def __getitem__(self, r: int) -> ActiveBrickRegion:
        s, e = self.brick_off[r], self.brick_off[r + 1]
        return ActiveBrickRegion(
            Box3(self.lo[r], self.hi[r]),
            self.brick_ids[s:e],
            self.value_range[r],
            float(self.finest_width[r]),
        )

    def region_bricks(self, r: int) -> np.ndarray:
        return self.brick_ids[self.brick_off[r] : self.brick_off[r + 1]]

    def volumes(self) -> np.ndarray:
        return np.prod(self.hi - self.lo, axis=1)

    @property
    def bounds(self) -> Box3:
        if len(self) == 0:
            return Box3.empty()
        return Box3(self.lo.min(axis=0), self.hi.max(axis=0))

    @property
    def point_index(self):
        """BVH over all region boxes; used for point lookup and gradients."""
        if self._point_index is None:
            from .accel import build_all_regions_bvh

            self._point_index = build_all_regions_bvh(self)
        return self._point_index


def _support_boxes_halfunits(model: AmrModel):
    """(B,3) int64 lo/hi corners of brick supports, in half finest units."""
    w = (np.int64(1) << model.brick_level.astype(np.int64))[:, None]
    lo = model.brick_lower.astype(np.int64)
    hi = lo + model.brick_dims.astype(np.int64) * w
    return 2 * lo - w, 2 * hi + w


def build_regions(model: AmrModel) -> RegionSet:
    """Recursive top-down partition of the support union.

    Candidate planes are fragment faces strictly inside the current region;
    the chosen plane is the one closest to the region center on the widest
    axis that has any candidate (ties: lower coordinate). Fragments straddling
    the plane are clipped into both children. A region with no interior
    candidate is a leaf and lists its fragments' brick ids.
    """
    if model.n_bricks == 0:
        return RegionSet(
            np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(1, np.int64),
            np.zeros(0, np.int32), np.zeros((0, model.n_fields, 2)),
            np.zeros(0), model.field_names,
        )

    slo, shi = _support_boxes_halfunits(model)
    root_lo = slo.min(axis=0)
    root_hi = shi.max(axis=0)

    leaf_lo: list[np.ndarray] = []
    leaf_hi: list[np.ndarray] = []
    leaf_ids: list[np.ndarray] = []

    stack = [(root_lo, root_hi, slo, shi, np.arange(model.n_bricks, dtype=np.int32))]
    while stack:
        rlo, rhi, flo, fhi, fid = stack.pop()
        width_order = np.argsort(-(rhi - rlo), kind="stable")
        plane = None
        axis = -1
        for a in width_order:
            faces = np.concatenate([flo[:, a], fhi[:, a]])
            inner = faces[(faces > rlo[a]) & (faces < rhi[a])]
            if len(inner):
                d = np.abs(2 * inner - (rlo[a] + rhi[a]))
                plane = int(inner[d == d.min()].min())
                axis = int(a)
                break
        if plane is None:
            # no interior candidate: every fragment spans the whole region,
            # so a fragment-free leaf is a cavity outside the support union
            if len(fid):
                leaf_lo.append(rlo)
                leaf_hi.append(rhi)
                leaf_ids.append(np.sort(fid))
            continue

        lmask = flo[:, axis] < plane
        rmask = fhi[:, axis] > plane
        llo, lhi = flo[lmask].copy(), fhi[lmask].copy()
        lhi[:, axis] = np.minimum(lhi[:, axis], plane)
        rlo2, rhi2 = flo[rmask].copy(), fhi[rmask].copy()
        rlo2[:, axis] = np.maximum(rlo2[:, axis], plane)
        left_lo, left_hi = rlo.copy(), rhi.copy()
        left_hi[axis] = plane
        right_lo, right_hi = rlo.copy(), rhi.copy()
        right_lo[axis] = plane
        # push right first so the left child is processed first (stable order)
        stack.append((right_lo, right_hi, rlo2, rhi2, fid[rmask]))
        stack.append((left_lo, left_hi, llo, lhi, fid[lmask]))

    n = len(leaf_lo)
    lo_h = np.stack(leaf_lo)
    hi_h = np.stack(leaf_hi)
    counts = np.array([len(ids) for ids in leaf_ids], np.int64)
    brick_off = np.concatenate(([0], np.cumsum(counts)))
    brick_ids = np.concatenate(leaf_ids) if n else np.zeros(0, np.int32)

    value_range = np.empty((n, model.n_fields, 2), np.float64)
    finest = np.empty(n, np.float64)
    _region_metadata(
        lo_h, hi_h, brick_off, brick_ids.astype(np.int32),
        2 * model.brick_lower.astype(np.int64),
        model.brick_level.astype(np.int64),
        model.brick_dims.astype(np.int64),
        model.brick_offset,
        model.scalars,
        value_range, finest,
    )
    return RegionSet(
        lo_h / 2.0, hi_h / 2.0, brick_off, brick_ids, value_range, finest, model.field_names
    )


@njit(cache=True)
def _region_metadata(rlo_h, rhi_h, brick_off, brick_ids, b_lower_h, b_level, b_dims, b_offset, values, out_range, out_finest):
    n_regions = rlo_h.shape[0]
    n_fields = values.shape[0]
    for r in range(n_regions):
        for f in range(n_fields):
            out_range[r, f, 0] = np.inf
            out_range[r, f, 1] = -np.inf
        finest = np.inf
        for t in range(brick_off[r], brick_off[r + 1]):
            b = brick_ids[t]
            lev = b_level[b]
            w_h = np.int64(2) << lev  # cell width in half-units
            half_h = np.int64(1) << lev  # half cell width in half-units
            w_world = 2.0 ** lev
            if w_world < finest:
                finest = w_world
            nx = b_dims[b, 0]
            ny = b_dims[b, 1]
            nz = b_dims[b, 2]
            base = b_offset[b]
            # per-axis index range of cells whose support overlaps the
            # region interior (all integer arithmetic, exact)
            ix0 = max((rlo_h[r, 0] - b_lower_h[b, 0] - half_h) // w_h, 0)
            ix1 = min((rhi_h[r, 0] - b_lower_h[b, 0] + half_h - 1) // w_h, nx - 1)
            iy0 = max((rlo_h[r, 1] - b_lower_h[b, 1] - half_h) // w_h, 0)
            iy1 = min((rhi_h[r, 1] - b_lower_h[b, 1] + half_h - 1) // w_h, ny - 1)
            iz0 = max((rlo_h[r, 2] - b_lower_h[b, 2] - half_h) // w_h, 0)
            iz1 = min((rhi_h[r, 2] - b_lower_h[b, 2] + half_h - 1) // w_h, nz - 1)
            for z in range(iz0, iz1 + 1):
                for y in range(iy0, iy1 + 1):
                    row = base + nx * (y + ny * z)
                    for x in range(ix0, ix1 + 1):
                        for f in range(n_fields):
                            v = values[f, row + x]
                            if v < out_range[r, f, 0]:
                                out_range[r, f, 0] = v
                            if v > out_range[r, f, 1]:
                                out_range[r, f, 1] = v
        out_finest[r] = finest


def point_to_region(regions: RegionSet, p) -> int | None:
    """Index of the region whose half-open box [lo, hi) contains p, else None."""
    from .accel import point_query

    return point_query(regions.point_index, p)


@dataclass
class RegionStats:
    n_regions: int
    bricks_per_region_by_count: float
    bricks_per_region_by_volume: float
    max_bricks_per_region: int
    total_volume: float


def region_stats(regions: RegionSet) -> RegionStats:
    n = len(regions)
    if n == 0:
        return RegionStats(0, 0.0, 0.0, 0, 0.0)
    counts = np.diff(regions.brick_off)
    vols = regions.volumes()
    return RegionStats(
        n_regions=n,
        bricks_per_region_by_count=float(counts.mean()),
        bricks_per_region_by_volume=float((counts * vols).sum() / vols.sum()),
        max_bricks_per_region=int(counts.max()),
        total_volume=float(vols.sum()),
    )
