"""Transfer functions and the software BVH over region boxes.

The BVH supports ordered next-region queries along rays and half-open point
queries. Volume BVHs contain only regions whose transfer-function max opacity
is strictly positive; iso BVHs only regions whose value range brackets the
iso value. Inactive regions are absent from the structure, not flagged.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from numba import njit

if TYPE_CHECKING:
    from .regions import RegionSet

__all__ = [
    "TransferFunction",
    "RegionBvh",
    "RayInterval",
    "max_opacity",
    "build_volume_bvh",
    "build_iso_bvh",
    "build_all_regions_bvh",
    "next_region",
    "point_query",
    "iterate_intervals",
    "restart_epsilon",
    "RAMP_SIZE",
]

RAMP_SIZE = 256


class TransferFunction:
    """Piecewise-linear RGBA ramp of 256 entries over a value domain.

    Values outside the domain clamp to the end entries. Channels are in [0,1].
    """

    def __init__(self, domain, rgba):
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"transfer function domain must satisfy lo < hi, got {domain}")
        rgba = np.asarray(rgba, np.float64)
        if rgba.shape != (RAMP_SIZE, 4):
            raise ValueError(f"ramp must have shape (256, 4), got {rgba.shape}")
        if rgba.min() < 0.0 or rgba.max() > 1.0:
            raise ValueError("ramp channels must lie in [0, 1]")
        self.domain = (lo, hi)
        self.rgba = np.ascontiguousarray(rgba)

    def sample(self, value: float) -> np.ndarray:
        lo, hi = self.domain
        t = (float(value) - lo) / (hi - lo)
        t = min(max(t, 0.0), 1.0)
        x = t * (RAMP_SIZE - 1)
        i = int(x)
        if i >= RAMP_SIZE - 1:
            return self.rgba[RAMP_SIZE - 1].copy()
        f = x - i
        return (1.0 - f) * self.rgba[i] + f * self.rgba[i + 1]

    def max_opacity(self, vmin: float, vmax: float) -> float:
        return max_opacity(self, (vmin, vmax))

    @staticmethod
    def grayscale(domain, max_alpha: float = 1.0) -> "TransferFunction":
        ramp = np.linspace(0.0, 1.0, RAMP_SIZE)
        rgba = np.stack([ramp, ramp, ramp, max_alpha * ramp], axis=1)
        return TransferFunction(domain, rgba)

    @staticmethod
    def constant_alpha(domain, alpha: float, color=(1.0, 1.0, 1.0)) -> "TransferFunction":
        rgba = np.empty((RAMP_SIZE, 4))
        rgba[:, 0], rgba[:, 1], rgba[:, 2] = color
        rgba[:, 3] = alpha
        return TransferFunction(domain, rgba)

    def to_dict(self) -> dict:
        return {"domain": list(self.domain), "rgba": self.rgba.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "TransferFunction":
        return TransferFunction(d["domain"], d["rgba"])


def max_opacity(tf: TransferFunction, value_range) -> float:
    """Exact maximum alpha of the ramp over [vmin, vmax] (conservative for
    any denser sampling). Out-of-domain parts clamp to the end entries."""
    vmin, vmax = float(value_range[0]), float(value_range[1])
    if vmin > vmax:
        raise ValueError("value range must satisfy min <= max")
    lo, hi = tf.domain
    scale = (RAMP_SIZE - 1) / (hi - lo)
    x0 = min(max((vmin - lo) * scale, 0.0), RAMP_SIZE - 1.0)
    x1 = min(max((vmax - lo) * scale, 0.0), RAMP_SIZE - 1.0)
    alpha = tf.rgba[:, 3]

    def at(x: float) -> float:
        i = int(x)
        if i >= RAMP_SIZE - 1:
            return float(alpha[RAMP_SIZE - 1])
        f = x - i
        return float((1.0 - f) * alpha[i] + f * alpha[i + 1])

    m = max(at(x0), at(x1))
    k0 = int(np.ceil(x0))
    k1 = int(np.floor(x1))
    if k0 <= k1:
        m = max(m, float(alpha[k0 : k1 + 1].max()))
    return m


@dataclass
class RayInterval:
    t_in: float
    t_out: float
    region: int


class RegionBvh:
    """Binary BVH over a subset of region boxes (median split on centroids of
    the longest axis, leaves hold 1-4 regions). Leaf primitives are indices
    into the full region set."""

    def __init__(self, node_lo, node_hi, node_left, node_right, node_start, node_count, prims, region_lo, region_hi, build_ms):
        self.node_lo = node_lo
        self.node_hi = node_hi
        self.node_left = node_left
        self.node_right = node_right
        self.node_start = node_start
        self.node_count = node_count
        self.prims = prims
        self.region_lo = region_lo  # full (R,3) region corner arrays
        self.region_hi = region_hi
        self.build_ms = build_ms

    @property
    def n_active(self) -> int:
        return len(self.prims)

    @property
    def is_empty(self) -> bool:
        return len(self.prims) == 0

    def kernel_args(self):
        return (
            self.node_lo, self.node_hi, self.node_left, self.node_right,
            self.node_start, self.node_count, self.prims,
            self.region_lo, self.region_hi,
        )


_LEAF_SIZE = 4


def _build_box_bvh(active: np.ndarray, region_lo: np.ndarray, region_hi: np.ndarray) -> RegionBvh:
    t0 = time.perf_counter()
    n = len(active)
    node_lo, node_hi = [], []
    node_left, node_right, node_start, node_count = [], [], [], []
    out_prims: list[int] = []

    lo = region_lo[active]
    hi = region_hi[active]
    cen = 0.5 * (lo + hi)

    def rec(sel: np.ndarray) -> int:
        node = len(node_left)
        node_lo.append(lo[sel].min(axis=0))
        node_hi.append(hi[sel].max(axis=0))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        if len(sel) <= _LEAF_SIZE:
            node_start[node] = len(out_prims)
            node_count[node] = len(sel)
            out_prims.extend(active[sel])
            return node
        c = cen[sel]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        order = np.lexsort((active[sel], c[:, axis]))
        half = len(sel) // 2
        l = rec(sel[order[:half]])
        r = rec(sel[order[half:]])
        node_left[node] = l
        node_right[node] = r
        return node

    if n:
        import sys

        old = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old, 10000))
        try:
            rec(np.arange(n))
        finally:
            sys.setrecursionlimit(old)
    ms = (time.perf_counter() - t0) * 1000.0
    if not n:
        # one dummy node marking emptiness keeps kernel arrays non-degenerate
        node_lo.append(np.full(3, np.inf))
        node_hi.append(np.full(3, -np.inf))
        node_left.append(-1)
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
    return RegionBvh(
        np.ascontiguousarray(node_lo, np.float64),
        np.ascontiguousarray(node_hi, np.float64),
        np.asarray(node_left, np.int32),
        np.asarray(node_right, np.int32),
        np.asarray(node_start, np.int64),
        np.asarray(node_count, np.int32),
        np.asarray(out_prims, np.int32),
        np.ascontiguousarray(region_lo, np.float64),
        np.ascontiguousarray(region_hi, np.float64),
        ms,
    )


def build_volume_bvh(regions: "RegionSet", tf: TransferFunction, field: int = 0) -> RegionBvh:
    """BVH over regions with strictly positive max opacity under tf."""
    n = len(regions)
    active = np.array(
        [r for r in range(n) if max_opacity(tf, regions.value_range[r, field]) > 0.0],
        dtype=np.int64,
    )
    return _build_box_bvh(active, regions.lo, regions.hi)


def build_iso_bvh(regions: "RegionSet", iso_value: float, field: int = 0) -> RegionBvh:
    """BVH over regions whose value range brackets the iso value."""
    rng = regions.value_range[:, field]
    active = np.nonzero((rng[:, 0] <= iso_value) & (iso_value <= rng[:, 1]))[0]
    return _build_box_bvh(active, regions.lo, regions.hi)


def build_all_regions_bvh(regions: "RegionSet") -> RegionBvh:
    """BVH retaining every region; the point-lookup index and the unpruned
    reference structure for space-skipping neutrality checks."""
    return _build_box_bvh(np.arange(len(regions), dtype=np.int64), regions.lo, regions.hi)


# ---------------------------------------------------------------------------
# Traversal kernels (shared with the renderer)


@njit(cache=True, inline="always")
def _slab(lo0, lo1, lo2, hi0, hi1, hi2, ox, oy, oz, dx, dy, dz):
    """Ray/box overlap interval; (inf, -inf) on miss. Zero-direction axes use
    the half-open containment rule."""
    tmin = -np.inf
    tmax = np.inf
    for axis in range(3):
        if axis == 0:
            o, d, lo, hi = ox, dx, lo0, hi0
        elif axis == 1:
            o, d, lo, hi = oy, dy, lo1, hi1
        else:
            o, d, lo, hi = oz, dz, lo2, hi2
        if d == 0.0:
            if o < lo or o >= hi:
                return np.inf, -np.inf
        else:
            inv = 1.0 / d
            t0 = (lo - o) * inv
            t1 = (hi - o) * inv
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tmin:
                tmin = t0
            if t1 < tmax:
                tmax = t1
            if tmin > tmax:
                return np.inf, -np.inf
    return tmin, tmax


@njit(cache=True)
def _bvh_next_hit(node_lo, node_hi, node_left, node_right, node_start, node_count, prims, region_lo, region_hi, ox, oy, oz, dx, dy, dz, t_start, t_max):
    """Closest active region along the ray with entry >= t_start.

    Returns (region, entry, exit) clipped to [t_start, t_max];
    region == -1 when nothing is hit.
    """
    best_r = -1
    best_in = np.inf
    best_out = np.inf
    if len(prims) == 0:
        return best_r, best_in, best_out
    stack = np.empty(128, np.int32)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        n_in, n_out = _slab(
            node_lo[node, 0], node_lo[node, 1], node_lo[node, 2],
            node_hi[node, 0], node_hi[node, 1], node_hi[node, 2],
            ox, oy, oz, dx, dy, dz,
        )
        lo_t = n_in if n_in > t_start else t_start
        hi_t = n_out if n_out < t_max else t_max
        if lo_t >= hi_t or lo_t > best_in:
            continue
        if node_left[node] < 0:
            s = node_start[node]
            for t in range(node_count[node]):
                r = prims[s + t]
                r_in, r_out = _slab(
                    region_lo[r, 0], region_lo[r, 1], region_lo[r, 2],
                    region_hi[r, 0], region_hi[r, 1], region_hi[r, 2],
                    ox, oy, oz, dx, dy, dz,
                )
                c_in = r_in if r_in > t_start else t_start
                c_out = r_out if r_out < t_max else t_max
                if c_in < c_out and (c_in < best_in or (c_in == best_in and r < best_r)):
                    best_r = r
                    best_in = c_in
                    best_out = c_out
        else:
            # near child first: pop order is LIFO, push far child first
            l = node_left[node]
            r = node_right[node]
            l_in, _ = _slab(
                node_lo[l, 0], node_lo[l, 1], node_lo[l, 2],
                node_hi[l, 0], node_hi[l, 1], node_hi[l, 2],
                ox, oy, oz, dx, dy, dz,
            )
            r_in, _ = _slab(
                node_lo[r, 0], node_lo[r, 1], node_lo[r, 2],
                node_hi[r, 0], node_hi[r, 1], node_hi[r, 2],
                ox, oy, oz, dx, dy, dz,
            )
            if l_in <= r_in:
                stack[top] = r
                top += 1
                stack[top] = l
                top += 1
            else:
                stack[top] = l
                top += 1
                stack[top] = r
                top += 1
    return best_r, best_in, best_out


@njit(cache=True)
def _bvh_point_query(node_lo, node_hi, node_left, node_right, node_start, node_count, prims, region_lo, region_hi, px, py, pz):
    """Region whose half-open box contains the point, else -1."""
    if len(prims) == 0:
        return -1
    stack = np.empty(128, np.int32)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        node = stack[top]
        if (
            px < node_lo[node, 0] or px >= node_hi[node, 0]
            or py < node_lo[node, 1] or py >= node_hi[node, 1]
            or pz < node_lo[node, 2] or pz >= node_hi[node, 2]
        ):
            continue
        if node_left[node] < 0:
            s = node_start[node]
            for t in range(node_count[node]):
                r = prims[s + t]
                if (
                    px >= region_lo[r, 0] and px < region_hi[r, 0]
                    and py >= region_lo[r, 1] and py < region_hi[r, 1]
                    and pz >= region_lo[r, 2] and pz < region_hi[r, 2]
                ):
                    return r
        else:
            stack[top] = node_right[node]
            top += 1
            stack[top] = node_left[node]
            top += 1
    return -1


def restart_epsilon(t_out: float) -> float:
    """Advance applied after each region so the next query starts past it."""
    return max(1e-7, 1e-7 * t_out)


def next_region(bvh: RegionBvh, origin, direction, t_start: float, t_max: float) -> Optional[RayInterval]:
    """Closest active region with entry >= t_start, clipped to [t_start, t_max]."""
    o = np.asarray(origin, np.float64)
    d = np.asarray(direction, np.float64)
    r, t_in, t_out = _bvh_next_hit(
        *bvh.kernel_args(), o[0], o[1], o[2], d[0], d[1], d[2], t_start, t_max
    )
    if r < 0:
        return None
    return RayInterval(float(t_in), float(t_out), int(r))


def point_query(bvh: RegionBvh, p) -> Optional[int]:
    p = np.asarray(p, np.float64)
    r = _bvh_point_query(*bvh.kernel_args(), p[0], p[1], p[2])
    return None if r < 0 else int(r)


def iterate_intervals(bvh: RegionBvh, origin, direction, t_start: float, t_max: float):
    """Yield successive disjoint ascending RayIntervals along the ray."""
    t = t_start
    while True:
        hit = next_region(bvh, origin, direction, t, t_max)
        if hit is None:
            return
        yield hit
        t = hit.t_out + restart_epsilon(hit.t_out)
        if t >= t_max:
            return
