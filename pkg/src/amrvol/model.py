"""Core AMR domain types: cells, bricks, boxes, and the level/coordinate conventions.

Level 0 is the finest level; a cell at level l has width 2**l world units and its
integer anchor coordinates are multiples of 2**l. World units equal finest-cell units.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "LevelCoord",
    "Cell",
    "Box3",
    "CellList",
    "Brick",
    "AmrModel",
    "CellValidationReport",
    "cell_bounds",
    "cell_support",
    "brick_support",
    "validate_cells",
]


class LevelCoord(NamedTuple):
    """Integer lattice anchor (finest-level units) plus refinement level."""

    i: int
    j: int
    k: int
    level: int

    @property
    def width(self) -> float:
        return float(2 ** self.level)


@dataclass(frozen=True)
class Cell:
    """One AMR sample: anchor coordinate and one scalar per field."""

    coord: LevelCoord
    values: tuple[float, ...] = (0.0,)

    @property
    def width(self) -> float:
        return self.coord.width

    @property
    def center(self) -> np.ndarray:
        half = 0.5 * self.width
        return np.array(
            [self.coord.i + half, self.coord.j + half, self.coord.k + half]
        )


class Box3:
    """Axis-aligned box, world units. Empty boxes have lo > hi."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)

    @staticmethod
    def empty() -> "Box3":
        return Box3(np.full(3, np.inf), np.full(3, -np.inf))

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def is_empty(self) -> bool:
        return bool(np.any(self.lo > self.hi))

    @property
    def volume(self) -> float:
        if self.is_empty:
            return 0.0
        return float(np.prod(self.extent))

    def contains(self, p) -> bool:
        """Half-open containment [lo, hi): the canonical point-lookup rule."""
        p = np.asarray(p)
        return bool(np.all(p >= self.lo) and np.all(p < self.hi))

    def contains_closed(self, p) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.lo) and np.all(p <= self.hi))

    def overlaps_interior(self, other: "Box3") -> bool:
        """True when the open interiors intersect (shared faces don't count)."""
        return bool(np.all(self.lo < other.hi) and np.all(self.hi > other.lo))

    def union(self, other: "Box3") -> "Box3":
        return Box3(np.minimum(self.lo, other.lo), np.maximum(self.hi, other.hi))

    def intersection(self, other: "Box3") -> "Box3":
        return Box3(np.maximum(self.lo, other.lo), np.minimum(self.hi, other.hi))

    def expanded(self, margin: float) -> "Box3":
        return Box3(self.lo - margin, self.hi + margin)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Box3)
            and np.array_equal(self.lo, other.lo)
            and np.array_equal(self.hi, other.hi)
        )

    def __repr__(self) -> str:
        return f"Box3({self.lo.tolist()}, {self.hi.tolist()})"


class CellList:
    """Columnar cell storage: anchors, levels, and per-field float32 values.

    Behaves like a sequence of Cell. values has shape (n_cells, n_fields).
    """

    def __init__(self, i, j, k, level, values, field_names=("value",)):
        self.i = np.ascontiguousarray(i, dtype=np.int32)
        self.j = np.ascontiguousarray(j, dtype=np.int32)
        self.k = np.ascontiguousarray(k, dtype=np.int32)
        self.level = np.ascontiguousarray(level, dtype=np.int32)
        values = np.asarray(values, dtype=np.float32)
        if values.ndim == 1:
            values = values[:, None]
        self.values = np.ascontiguousarray(values)
        self.field_names = tuple(field_names)
        n = len(self.i)
        if not (len(self.j) == len(self.k) == len(self.level) == len(self.values) == n):
            raise ValueError("cell array lengths disagree")
        if self.values.shape[1] != len(self.field_names):
            raise ValueError("value columns do not match field names")

    @staticmethod
    def from_cells(cells: Sequence[Cell], field_names=("value",)) -> "CellList":
        n = len(cells)
        i = np.empty(n, np.int32)
        j = np.empty(n, np.int32)
        k = np.empty(n, np.int32)
        lev = np.empty(n, np.int32)
        vals = np.empty((n, len(field_names)), np.float32)
        for idx, c in enumerate(cells):
            i[idx], j[idx], k[idx], lev[idx] = c.coord
            vals[idx] = c.values
        return CellList(i, j, k, lev, vals, field_names)

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    def widths(self) -> np.ndarray:
        return np.exp2(self.level.astype(np.float64))

    def centers(self) -> np.ndarray:
        half = 0.5 * self.widths()
        return np.stack(
            [self.i + half, self.j + half, self.k + half], axis=1
        )

    def bounds(self) -> Box3:
        if len(self) == 0:
            return Box3.empty()
        w = 2 ** self.level.astype(np.int64)
        lo = [self.i.min(), self.j.min(), self.k.min()]
        hi = [
            (self.i + w).max(),
            (self.j + w).max(),
            (self.k + w).max(),
        ]
        return Box3(lo, hi)

    def permuted(self, order) -> "CellList":
        return CellList(
            self.i[order],
            self.j[order],
            self.k[order],
            self.level[order],
            self.values[order],
            self.field_names,
        )

    def __len__(self) -> int:
        return len(self.i)

    def __getitem__(self, idx: int) -> Cell:
        return Cell(
            LevelCoord(int(self.i[idx]), int(self.j[idx]), int(self.k[idx]), int(self.level[idx])),
            tuple(float(v) for v in self.values[idx]),
        )

    def __iter__(self) -> Iterator[Cell]:
        for idx in range(len(self)):
            yield self[idx]


@dataclass
class Brick:
    """Axis-aligned grid of same-level cells; scalar slots in x-fastest order."""

    lower: LevelCoord
    dims: tuple[int, int, int]
    values: np.ndarray  # (n_fields, N*M*K) float32

    @property
    def level(self) -> int:
        return self.lower.level

    @property
    def cell_width(self) -> float:
        return self.lower.width

    @property
    def n_cells(self) -> int:
        n, m, k = self.dims
        return n * m * k

    @property
    def box(self) -> Box3:
        w = 2 ** self.lower.level
        lo = np.array([self.lower.i, self.lower.j, self.lower.k], dtype=np.float64)
        return Box3(lo, lo + np.array(self.dims, dtype=np.float64) * w)

    def slot(self, x: int, y: int, z: int) -> int:
        n, m, _ = self.dims
        return x + n * (y + m * z)

    def cell_value(self, x: int, y: int, z: int, field: int = 0) -> float:
        return float(self.values[field, self.slot(x, y, z)])

    def cell(self, x: int, y: int, z: int) -> Cell:
        w = 2 ** self.lower.level
        coord = LevelCoord(
            self.lower.i + x * w, self.lower.j + y * w, self.lower.k + z * w, self.lower.level
        )
        return Cell(coord, tuple(float(self.values[f, self.slot(x, y, z)]) for f in range(self.values.shape[0])))


class AmrModel:
    """Brick-partitioned AMR model: flat per-brick metadata plus packed scalars.

    Scalars are stored as one flat float32 array per field; brick b owns slots
    [offset[b], offset[b] + n_cells(b)) in x-fastest order. Immutable by convention.
    """

    def __init__(self, field_names, brick_lower, brick_level, brick_dims, scalars):
        self.field_names = tuple(field_names)
        self.brick_lower = np.ascontiguousarray(brick_lower, dtype=np.int32).reshape(-1, 3)
        self.brick_level = np.ascontiguousarray(brick_level, dtype=np.int32)
        self.brick_dims = np.ascontiguousarray(brick_dims, dtype=np.int32).reshape(-1, 3)
        counts = self.brick_dims.prod(axis=1, dtype=np.int64)
        self.brick_offset = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self.scalars = np.ascontiguousarray(scalars, dtype=np.float32).reshape(len(self.field_names), -1)
        if self.scalars.shape[1] != self.brick_offset[-1]:
            raise ValueError("scalar array length does not match brick dims")
        self._cell_list: CellList | None = None

    @property
    def n_bricks(self) -> int:
        return len(self.brick_level)

    @property
    def n_cells(self) -> int:
        return int(self.brick_offset[-1])

    @property
    def n_fields(self) -> int:
        return len(self.field_names)

    def field_index(self, name: str) -> int:
        return self.field_names.index(name)

    def brick_width(self, b: int) -> float:
        return float(2 ** int(self.brick_level[b]))

    def brick_box(self, b: int) -> Box3:
        w = 2 ** int(self.brick_level[b])
        lo = self.brick_lower[b].astype(np.float64)
        return Box3(lo, lo + self.brick_dims[b].astype(np.float64) * w)

    def brick(self, b: int) -> Brick:
        lo = self.brick_lower[b]
        coord = LevelCoord(int(lo[0]), int(lo[1]), int(lo[2]), int(self.brick_level[b]))
        s, e = self.brick_offset[b], self.brick_offset[b + 1]
        return Brick(coord, tuple(int(d) for d in self.brick_dims[b]), self.scalars[:, s:e])

    @property
    def bounds(self) -> Box3:
        box = Box3.empty()
        for b in range(self.n_bricks):
            box = box.union(self.brick_box(b))
        return box

    def value_range(self, field: int = 0) -> tuple[float, float]:
        if self.n_cells == 0:
            return (0.0, 0.0)
        col = self.scalars[field]
        return (float(col.min()), float(col.max()))

    def cell_list(self) -> CellList:
        """All cells in canonical order: ascending brick id, x-fastest within a brick."""
        if self._cell_list is not None:
            return self._cell_list
        n = self.n_cells
        i = np.empty(n, np.int32)
        j = np.empty(n, np.int32)
        k = np.empty(n, np.int32)
        lev = np.empty(n, np.int32)
        for b in range(self.n_bricks):
            s, e = int(self.brick_offset[b]), int(self.brick_offset[b + 1])
            w = 2 ** int(self.brick_level[b])
            nx, ny, nz = (int(d) for d in self.brick_dims[b])
            gz, gy, gx = np.meshgrid(
                np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij"
            )
            i[s:e] = self.brick_lower[b, 0] + gx.ravel() * w
            j[s:e] = self.brick_lower[b, 1] + gy.ravel() * w
            k[s:e] = self.brick_lower[b, 2] + gz.ravel() * w
            lev[s:e] = self.brick_level[b]
        self._cell_list = CellList(i, j, k, lev, self.scalars.T.copy(), self.field_names)
        return self._cell_list

    @staticmethod
    def empty(field_names=("value",)) -> "AmrModel":
        f = len(tuple(field_names))
        return AmrModel(
            field_names,
            np.zeros((0, 3), np.int32),
            np.zeros(0, np.int32),
            np.zeros((0, 3), np.int32),
            np.zeros((f, 0), np.float32),
        )


def cell_bounds(cell: Cell) -> Box3:
    """World bounds [anchor, anchor + width) of a cell."""
    c = cell.coord
    w = 2 ** c.level
    lo = np.array([c.i, c.j, c.k], dtype=np.float64)
    return Box3(lo, lo + w)


def cell_support(cell: Cell) -> Box3:
    """Where the cell's hat weight is nonzero: bounds dilated by half a width."""
    return cell_bounds(cell).expanded(0.5 * cell.width)


def brick_support(brick: Brick) -> Box3:
    """Brick bounds dilated by half the brick's cell width on every face."""
    return brick.box.expanded(0.5 * brick.cell_width)


@dataclass
class CellValidationReport:
    """Outcome of validate_cells. Indices refer to the input sequence order."""

    n_cells: int
    alignment: list[int] = field(default_factory=list)
    overlaps: list[tuple[int, int]] = field(default_factory=list)
    duplicates: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.alignment or self.overlaps or self.duplicates)

    def summary(self) -> str:
        if self.ok:
            return f"{self.n_cells} cells, no violations"
        return (
            f"{self.n_cells} cells: {len(self.alignment)} misaligned, "
            f"{len(self.overlaps)} overlapping pairs, {len(self.duplicates)} duplicates"
        )


def _as_cell_list(cells) -> CellList:
    if isinstance(cells, CellList):
        return cells
    return CellList.from_cells(list(cells))


def validate_cells(cells) -> CellValidationReport:
    """Check alignment, overlap, and duplicate rules. Holes and any-size level
    jumps are allowed. Never raises; returns a structured report."""
    cl = _as_cell_list(cells)
    n = len(cl)
    report = CellValidationReport(n_cells=n)
    if n == 0:
        return report

    i64 = cl.i.astype(np.int64)
    j64 = cl.j.astype(np.int64)
    k64 = cl.k.astype(np.int64)
    lev = cl.level.astype(np.int64)
    w = np.int64(1) << np.maximum(lev, 0)

    mask = (w - 1).astype(np.int64)
    misaligned = ((i64 & mask) != 0) | ((j64 & mask) != 0) | ((k64 & mask) != 0) | (lev < 0)
    report.alignment = list(np.nonzero(misaligned)[0].astype(int))

    # Duplicates: identical (i,j,k,level).
    keys = np.stack([i64, j64, k64, lev], axis=1)
    order = np.lexsort(keys.T[::-1])
    sk = keys[order]
    same = np.all(sk[1:] == sk[:-1], axis=1)
    for t in np.nonzero(same)[0]:
        a, b = int(order[t]), int(order[t + 1])
        report.duplicates.append((min(a, b), max(a, b)))

    # Overlaps. Aligned cells map to octree nodes, so a pair overlaps iff one
    # node is an ancestor of the other; check each cell against coarser keys.
    aligned_idx = np.nonzero(~misaligned)[0]
    table: dict[tuple[int, int, int, int], int] = {}
    for idx in aligned_idx:
        key = (int(i64[idx] >> lev[idx]), int(j64[idx] >> lev[idx]), int(k64[idx] >> lev[idx]), int(lev[idx]))
        if key not in table:
            table[key] = int(idx)
    if len(aligned_idx):
        levels_present = sorted(set(int(l) for l in lev[aligned_idx]))
        for idx in aligned_idx:
            li = int(lev[idx])
            for lc in levels_present:
                if lc <= li:
                    continue
                key = (int(i64[idx] >> lc), int(j64[idx] >> lc), int(k64[idx] >> lc), lc)
                other = table.get(key)
                if other is not None:
                    report.overlaps.append((min(int(idx), other), max(int(idx), other)))

    # Misaligned cells break the octree argument; sweep them against everything.
    mis_idx = np.nonzero(misaligned)[0]
    if len(mis_idx):
        lo = np.stack([i64, j64, k64], axis=1).astype(np.float64)
        hi = lo + w[:, None].astype(np.float64)
        for idx in mis_idx:
            inter = np.all(lo[idx] < hi, axis=1) & np.all(hi[idx] > lo, axis=1)
            inter[idx] = False
            for other in np.nonzero(inter)[0]:
                pair = (min(int(idx), int(other)), max(int(idx), int(other)))
                if pair not in report.overlaps:
                    report.overlaps.append(pair)

    report.overlaps = sorted(set(report.overlaps))
    # A duplicate pair is also an overlap by box test; report it only as duplicate.
    dup = set(report.duplicates)
    report.overlaps = [p for p in report.overlaps if p not in dup]
    return report
