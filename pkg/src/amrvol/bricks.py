"""Re-organize an unordered cell list into disjoint same-level bricks.

Recursive top-down k-d partitioning: a node becomes a leaf (one brick) when its
cells are same-level, completely fill the node's bounding box, and fit the
width limit; otherwise it splits along its longest axis at the midpoint rounded
to a multiple of the coarsest cell width present in the node.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field

import numpy as np

from .model import AmrModel, CellList, CellValidationReport, _as_cell_list, validate_cells

__all__ = [
    "BrickBuildParams",
    "SplitTree",
    "InvalidCellsError",
    "build_bricks",
    "BrickStats",
    "brick_stats",
]


@dataclass
class BrickBuildParams:
    max_brick_width: int = 32
    keep_split_tree: bool = False

    def __post_init__(self):
        if self.max_brick_width < 1:
            raise ValueError("max_brick_width must be >= 1")


class InvalidCellsError(ValueError):
    """Raised when build input fails validation; carries the full report."""

    def __init__(self, report: CellValidationReport):
        super().__init__(report.summary())
        self.report = report


@dataclass
class SplitTree:
    """Flattened k-d split tree retained for the cell-location benchmark path.

    Interior nodes: axis >= 0, pos is the world split plane, children in
    left/right. Leaves: axis == -1 and [brick_start, brick_start+brick_count)
    indexes consecutive brick ids. Every node stores its cell bounding box and
    the maximum half cell width of its subtree, so a point query can visit
    exactly the subtrees whose dilated boxes contain the point.
    """

    axis: np.ndarray  # (n,) int32, -1 for leaf
    pos: np.ndarray  # (n,) float64
    left: np.ndarray  # (n,) int32
    right: np.ndarray  # (n,) int32
    brick_start: np.ndarray  # (n,) int32
    brick_count: np.ndarray  # (n,) int32
    box_lo: np.ndarray  # (n,3) float64
    box_hi: np.ndarray  # (n,3) float64
    max_half: np.ndarray  # (n,) float64

    @property
    def n_nodes(self) -> int:
        return len(self.axis)


class _TreeBuilder:
    def __init__(self):
        self.axis = []
        self.pos = []
        self.left = []
        self.right = []
        self.brick_start = []
        self.brick_count = []
        self.box_lo = []
        self.box_hi = []
        self.max_half = []

    def add(self) -> int:
        for a in (self.axis, self.pos, self.left, self.right, self.brick_start, self.brick_count, self.max_half):
            a.append(0)
        self.box_lo.append((0.0, 0.0, 0.0))
        self.box_hi.append((0.0, 0.0, 0.0))
        return len(self.axis) - 1

    def done(self) -> SplitTree:
        return SplitTree(
            np.asarray(self.axis, np.int32),
            np.asarray(self.pos, np.float64),
            np.asarray(self.left, np.int32),
            np.asarray(self.right, np.int32),
            np.asarray(self.brick_start, np.int32),
            np.asarray(self.brick_count, np.int32),
            np.asarray(self.box_lo, np.float64),
            np.asarray(self.box_hi, np.float64),
            np.asarray(self.max_half, np.float64),
        )


def build_bricks(cells, params: BrickBuildParams | None = None):
    """Partition validated cells into bricks.

    Returns (AmrModel, SplitTree or None). Output is deterministic for any
    input permutation: cells are canonically sorted by (level, k, j, i) first.
    """
    params = params or BrickBuildParams()
    cl = _as_cell_list(cells)
    report = validate_cells(cl)
    if not report.ok:
        raise InvalidCellsError(report)

    field_names = cl.field_names
    if len(cl) == 0:
        return AmrModel.empty(field_names), (_TreeBuilder().done() if params.keep_split_tree else None)

    order = np.lexsort((cl.i, cl.j, cl.k, cl.level))
    ci = cl.i[order].astype(np.int64)
    cj = cl.j[order].astype(np.int64)
    ck = cl.k[order].astype(np.int64)
    clev = cl.level[order].astype(np.int64)
    cvals = cl.values[order]
    coords = np.stack([ci, cj, ck], axis=1)

    maxw = params.max_brick_width
    bricks_lower: list[tuple[int, int, int]] = []
    bricks_level: list[int] = []
    bricks_dims: list[tuple[int, int, int]] = []
    slabs: list[np.ndarray] = []  # (F, n) slabs in brick order
    tree = _TreeBuilder() if params.keep_split_tree else None

    def emit_brick(idx: np.ndarray, lo: np.ndarray, level: int, dims: np.ndarray) -> int:
        nx, ny, nz = (int(d) for d in dims)
        gx = (coords[idx, 0] - lo[0]) >> level
        gy = (coords[idx, 1] - lo[1]) >> level
        gz = (coords[idx, 2] - lo[2]) >> level
        slot = gx + nx * (gy + ny * gz)
        slab = np.empty((cvals.shape[1], nx * ny * nz), np.float32)
        slab[:, slot] = cvals[idx].T
        bricks_lower.append((int(lo[0]), int(lo[1]), int(lo[2])))
        bricks_level.append(level)
        bricks_dims.append((nx, ny, nz))
        slabs.append(slab)
        return len(bricks_level) - 1

    def node_box(idx: np.ndarray):
        w = (np.int64(1) << clev[idx])[:, None]
        lo = coords[idx].min(axis=0)
        hi = (coords[idx] + w).max(axis=0)
        return lo, hi

    def build(idx: np.ndarray) -> int:
        lo, hi = node_box(idx)
        lmin = int(clev[idx].min())
        lmax = int(clev[idx].max())
        extent = hi - lo
        node = tree.add() if tree is not None else -1
        if tree is not None:
            tree.box_lo[node] = tuple(float(v) for v in lo)
            tree.box_hi[node] = tuple(float(v) for v in hi)
            tree.max_half[node] = 0.5 * float(2**lmax)

        w = 1 << lmax
        filled = lmin == lmax and len(idx) * (w**3) == int(np.prod(extent))
        dims = extent >> lmax
        fits = bool(np.all(dims <= maxw))
        if filled and fits:
            b = emit_brick(idx, lo, lmax, dims)
            if tree is not None:
                tree.axis[node] = -1
                tree.brick_start[node] = b
                tree.brick_count[node] = 1
            return node

        # split along the longest axis at the rounded midpoint
        axis = int(np.argmax(extent))  # argmax returns the first max: x, y, z tie order
        wc = w
        a_lo, a_hi = int(lo[axis]), int(hi[axis])
        mid2 = a_lo + a_hi  # 2 * midpoint, exact
        plane = ((mid2 + wc) // (2 * wc)) * wc  # round half up to a multiple of wc
        if not (a_lo < plane < a_hi):
            k_lo = a_lo // wc + 1
            k_hi = (a_hi - 1) // wc
            if k_lo > k_hi:
                # no interior multiple on the longest axis: per-cell leaves
                first = None
                for t in range(len(idx)):
                    one = idx[t : t + 1]
                    l1 = int(clev[one][0])
                    b = emit_brick(one, coords[one][0], l1, np.array([1, 1, 1]))
                    if first is None:
                        first = b
                if tree is not None:
                    tree.axis[node] = -1
                    tree.brick_start[node] = first
                    tree.brick_count[node] = len(idx)
                return node
            k_mid = (mid2 + wc) // (2 * wc)
            plane = int(np.clip(k_mid, k_lo, k_hi)) * wc

        left_mask = coords[idx, axis] < plane
        left = build(idx[left_mask])
        right = build(idx[~left_mask])
        if tree is not None:
            tree.axis[node] = axis
            tree.pos[node] = float(plane)
            tree.left[node] = left
            tree.right[node] = right
        return node

    old_limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old_limit, 100000))
    try:
        build(np.arange(len(cl), dtype=np.int64))
    finally:
        sys.setrecursionlimit(old_limit)

    model = AmrModel(
        field_names,
        np.asarray(bricks_lower, np.int32).reshape(-1, 3),
        np.asarray(bricks_level, np.int32),
        np.asarray(bricks_dims, np.int32).reshape(-1, 3),
        np.concatenate(slabs, axis=1) if slabs else np.zeros((len(field_names), 0), np.float32),
    )
    return model, (tree.done() if tree is not None else None)


@dataclass
class BrickStats:
    n_cells: int
    n_bricks: int
    cells_per_level: dict[int, int] = field(default_factory=dict)
    bricks_per_level: dict[int, int] = field(default_factory=dict)
    min_dim: int = 0
    max_dim: int = 0
    mean_dim: float = 0.0


def brick_stats(model: AmrModel) -> BrickStats:
    stats = BrickStats(n_cells=model.n_cells, n_bricks=model.n_bricks)
    if model.n_bricks == 0:
        return stats
    counts = model.brick_dims.prod(axis=1, dtype=np.int64)
    for lev in np.unique(model.brick_level):
        mask = model.brick_level == lev
        stats.bricks_per_level[int(lev)] = int(mask.sum())
        stats.cells_per_level[int(lev)] = int(counts[mask].sum())
    stats.min_dim = int(model.brick_dims.min())
    stats.max_dim = int(model.brick_dims.max())
    stats.mean_dim = float(model.brick_dims.mean())
    return stats
