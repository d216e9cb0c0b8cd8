"""Ray-marching renderer over region-decomposed AMR volumes.

Per region, rays are subdivided at a global sample lattice offset by a
per-pixel hash; each sub-interval contributes one midpoint sample whose
opacity is corrected by interval length, so the accumulated opacity of a
uniform medium does not depend on how space was carved into regions.
Pixels are independent and the whole frame is deterministic for a fixed
seed. Color channels in the output are alpha-premultiplied.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from numba import njit, prange, uint64

from .accel import RegionBvh, TransferFunction, _bvh_next_hit, _bvh_point_query, build_iso_bvh, build_volume_bvh
from .bricks import SplitTree
from .model import AmrModel
from .regions import RegionSet
from .sampling import EPS_WEIGHT, _accumulate_bricks, _collect_bricks, _gradient_bricks

__all__ = [
    "Camera",
    "MarchParams",
    "FrameStats",
    "Frame",
    "Scene",
    "build_scene",
    "make_intervals",
    "opacity_correct",
    "shade",
    "pixel_rho",
    "integrate_ray",
    "iso_intersect",
    "render_frame",
    "GRADIENT_MODES",
    "ISO_COLOR",
]

GRADIENT_MODES = {"none": 0, "analytic": 1, "central": 2, "clampedCentral": 3}

# fixed surface albedo for implicit iso-surfaces
ISO_COLOR = (0.83, 0.83, 0.86)

_T_FAR = 1.0e30


@dataclass
class Camera:
    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    fov_y: float = 40.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        self.position = np.asarray(self.position, np.float64)
        self.forward = np.asarray(self.forward, np.float64)
        self.up = np.asarray(self.up, np.float64)
        if not 0.0 < self.fov_y < 180.0:
            raise ValueError(f"vertical fov must be in (0, 180), got {self.fov_y}")
        f = self.forward / np.linalg.norm(self.forward)
        r = np.cross(f, self.up)
        n = np.linalg.norm(r)
        if n < 1e-12:
            raise ValueError("forward and up are parallel")

    def basis(self):
        """Orthonormal (right, true-up, forward) frame."""
        f = self.forward / np.linalg.norm(self.forward)
        r = np.cross(f, self.up)
        r /= np.linalg.norm(r)
        u = np.cross(r, f)
        return r, u, f

    def ray(self, x: int, y: int):
        """Pinhole ray through pixel center (x right, y down)."""
        r, u, f = self.basis()
        th = math.tan(math.radians(self.fov_y) * 0.5)
        aspect = self.width / self.height
        sx = (2.0 * (x + 0.5) / self.width - 1.0) * th * aspect
        sy = (1.0 - 2.0 * (y + 0.5) / self.height) * th
        d = f + sx * r + sy * u
        return self.position.copy(), d / np.linalg.norm(d)


@dataclass
class MarchParams:
    samples_per_cell: float = 2.0
    rate_scale: float = 1.0
    early_term_threshold: float = 0.98
    seed: int = 0
    gradient_mode: str = "analytic"
    clip_planes: Sequence = ()  # each (normal(3,), offset); keeps dot(n, x) <= offset

    def __post_init__(self):
        if self.samples_per_cell <= 0:
            raise ValueError("samples_per_cell must be positive")
        if not 0.0 < self.early_term_threshold <= 1.0:
            raise ValueError("early_term_threshold must be in (0, 1]")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"unknown gradient mode {self.gradient_mode!r}")
        if len(self.clip_planes) > 6:
            raise ValueError("at most 6 clip planes are supported")

    def plane_array(self) -> np.ndarray:
        out = np.zeros((len(self.clip_planes), 4))
        for i, (n, c) in enumerate(self.clip_planes):
            out[i, :3] = np.asarray(n, np.float64)
            out[i, 3] = float(c)
        return out


@dataclass
class FrameStats:
    ms: float
    regions: int
    samples: int
    bvh_rebuild_ms: float = 0.0

    def to_dict(self) -> dict:
        return {
            "ms": self.ms,
            "regions": self.regions,
            "samples": self.samples,
            "bvhRebuildMs": self.bvh_rebuild_ms,
        }


@dataclass
class Frame:
    width: int
    height: int
    rgba: np.ndarray  # (height, width, 4) uint8
    stats: FrameStats


@dataclass
class Scene:
    """Immutable render inputs: model arrays, regions, and built hierarchies."""

    model: AmrModel
    regions: RegionSet
    volume_bvh: RegionBvh
    field: int = 0
    iso_bvh: Optional[RegionBvh] = None
    iso_value: Optional[float] = None
    tree: Optional[SplitTree] = None  # enables the cell-location sampling path
    field_values: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        self.field_values = np.ascontiguousarray(self.model.scalars[self.field])


def build_scene(model: AmrModel, regions: RegionSet, tf: TransferFunction, field: int = 0, iso_value: Optional[float] = None, tree: Optional[SplitTree] = None) -> Scene:
    vb = build_volume_bvh(regions, tf, field)
    ib = build_iso_bvh(regions, iso_value, field) if iso_value is not None else None
    return Scene(model, regions, vb, field, ib, iso_value, tree)


# ---------------------------------------------------------------------------
# Small pure helpers (mirrored inside the kernels)


def make_intervals(t_in: float, t_out: float, dt: float, rho: float):
    """Split [t_in, t_out] at global lattice points dt*(k + rho) strictly
    inside; always yields at least one interval."""
    if not t_in < t_out:
        raise ValueError("require t_in < t_out")
    if dt <= 0.0:
        raise ValueError("require dt > 0")
    out = []
    prev = t_in
    k = math.floor(t_in / dt - rho) + 1
    while True:
        tk = dt * (k + rho)
        if tk >= t_out:
            break
        if tk > prev:
            out.append((prev, tk))
            prev = tk
        k += 1
    out.append((prev, t_out))
    return out


def opacity_correct(alpha: float, s: float, s1: float) -> float:
    """Opacity resampled from base step s1 to actual step s."""
    return 1.0 - (1.0 - alpha) ** (s / s1)


def shade(color, gradient, ray_dir):
    """Headlight shading: ambient 0.2 plus 0.8 times |cos| to the ray."""
    color = np.asarray(color, np.float64)
    g = np.asarray(gradient, np.float64)
    d = np.asarray(ray_dir, np.float64)
    n = np.linalg.norm(g)
    if n == 0.0:
        return 0.2 * color
    d = d / np.linalg.norm(d)
    return color * (0.2 + 0.8 * abs(float(g @ d)) / n)


_MASK64 = (1 << 64) - 1


def pixel_rho(pixel: int, seed: int) -> float:
    """Deterministic per-pixel lattice offset in [0, 1)."""
    z = (pixel ^ seed) & _MASK64
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    z = z ^ (z >> 31)
    return (z >> 11) * (1.0 / 9007199254740992.0)


# ---------------------------------------------------------------------------
# Kernels


@njit(cache=True, inline="always")
def _rho_hash(pixel, seed):
    z = uint64(pixel) ^ uint64(seed)
    z = z + uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    z = z ^ (z >> uint64(31))
    return (z >> uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def _tf_eval(tf_lo, tf_hi, tf_rgba, v):
    t = (v - tf_lo) / (tf_hi - tf_lo)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    x = t * 255.0
    i = int(x)
    if i >= 255:
        return tf_rgba[255, 0], tf_rgba[255, 1], tf_rgba[255, 2], tf_rgba[255, 3]
    f = x - i
    g = 1.0 - f
    return (
        g * tf_rgba[i, 0] + f * tf_rgba[i + 1, 0],
        g * tf_rgba[i, 1] + f * tf_rgba[i + 1, 1],
        g * tf_rgba[i, 2] + f * tf_rgba[i + 1, 2],
        g * tf_rgba[i, 3] + f * tf_rgba[i + 1, 3],
    )


@njit(cache=True, inline="always")
def _restart(t_out):
    e = 1e-7 * t_out
    return t_out + (e if e > 1e-7 else 1e-7)


@njit(cache=True)
def _clip_ray(planes, ox, oy, oz, dx, dy, dz, tmin, tmax):
    """Shrink [tmin, tmax] to the half-spaces dot(n, x) <= c."""
    for i in range(len(planes)):
        nx, ny, nz, c = planes[i, 0], planes[i, 1], planes[i, 2], planes[i, 3]
        nd = nx * dx + ny * dy + nz * dz
        no = nx * ox + ny * oy + nz * oz
        if nd > 0.0:
            t = (c - no) / nd
            if t < tmax:
                tmax = t
        elif nd < 0.0:
            t = (c - no) / nd
            if t > tmin:
                tmin = t
        else:
            if no > c:
                return 1.0, 0.0
    return tmin, tmax


@njit(cache=True)
def _shade_factor(gx, gy, gz, dx, dy, dz):
    n = math.sqrt(gx * gx + gy * gy + gz * gz)
    if n == 0.0:
        return 0.2
    return 0.2 + 0.8 * abs(gx * dx + gy * dy + gz * dz) / n


@njit(cache=True)
def _sample_gradient(grad_mode, px, py, pz, rid, ids, val, reg_lo, reg_hi, reg_finest, roff, rids, anlo, anhi, anl, anr, ans, anc, aprims, blo, blev, bdims, boff, vals):
    """Gradient at a shaded sample, per the selected mode."""
    if grad_mode == 1:
        num, den, dnx, dny, dnz, ddx, ddy, ddz = _gradient_bricks(
            ids, blo, blev, bdims, boff, vals, px, py, pz
        )
        if den <= EPS_WEIGHT:
            return 0.0, 0.0, 0.0
        d2 = den * den
        return (
            (dnx * den - num * ddx) / d2,
            (dny * den - num * ddy) / d2,
            (dnz * den - num * ddz) / d2,
        )
    h = 0.5 * reg_finest[rid]
    gx = gy = gz = 0.0
    for a in range(3):
        qpx, qpy, qpz = px, py, pz
        qmx, qmy, qmz = px, py, pz
        if a == 0:
            qpx, qmx = px + h, px - h
        elif a == 1:
            qpy, qmy = py + h, py - h
        else:
            qpz, qmz = pz + h, pz - h
        if grad_mode == 3:
            # clamp both offsets into the current region box
            lo0, lo1, lo2 = reg_lo[rid, 0], reg_lo[rid, 1], reg_lo[rid, 2]
            hi0, hi1, hi2 = reg_hi[rid, 0], reg_hi[rid, 1], reg_hi[rid, 2]
            qpx = min(max(qpx, lo0), hi0)
            qpy = min(max(qpy, lo1), hi1)
            qpz = min(max(qpz, lo2), hi2)
            qmx = min(max(qmx, lo0), hi0)
            qmy = min(max(qmy, lo1), hi1)
            qmz = min(max(qmz, lo2), hi2)
            np_, dp = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, qpx, qpy, qpz)
            nm, dm = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, qmx, qmy, qmz)
            if dp > EPS_WEIGHT and dm > EPS_WEIGHT:
                if a == 0:
                    span = qpx - qmx
                elif a == 1:
                    span = qpy - qmy
                else:
                    span = qpz - qmz
                if span > 0.0:
                    g = (np_ / dp - nm / dm) / span
                    if a == 0:
                        gx = g
                    elif a == 1:
                        gy = g
                    else:
                        gz = g
        else:
            # central: relocate each offset through the all-regions index
            fp = 0.0
            okp = False
            rp = _bvh_point_query(anlo, anhi, anl, anr, ans, anc, aprims, reg_lo, reg_hi, qpx, qpy, qpz)
            if rp >= 0:
                np_, dp = _accumulate_bricks(rids[roff[rp]:roff[rp + 1]], blo, blev, bdims, boff, vals, qpx, qpy, qpz)
                if dp > EPS_WEIGHT:
                    fp = np_ / dp
                    okp = True
            fm = 0.0
            okm = False
            rm = _bvh_point_query(anlo, anhi, anl, anr, ans, anc, aprims, reg_lo, reg_hi, qmx, qmy, qmz)
            if rm >= 0:
                nm, dm = _accumulate_bricks(rids[roff[rm]:roff[rm + 1]], blo, blev, bdims, boff, vals, qmx, qmy, qmz)
                if dm > EPS_WEIGHT:
                    fm = nm / dm
                    okm = True
            if okp and okm:
                g = (fp - fm) / (2.0 * h)
            elif okp:
                g = (fp - val) / h
            elif okm:
                g = (val - fm) / h
            else:
                g = 0.0
            if a == 0:
                gx = g
            elif a == 1:
                gy = g
            else:
                gz = g
    return gx, gy, gz


@njit(cache=True)
def _volume_ray(vnlo, vnhi, vnl, vnr, vns, vnc, vprims, anlo, anhi, anl, anr, ans, anc, aprims, reg_lo, reg_hi, roff, rids, reg_finest, blo, blev, bdims, boff, vals, tf_lo, tf_hi, tf_rgba, ox, oy, oz, dx, dy, dz, tmin, tmax, rho, spc, rate, early, grad_mode, use_tree, tx_axis, tx_l, tx_r, tx_bs, tx_bc, tx_blo, tx_bhi, tx_mh, buf):
    """Front-to-back integration of one ray; returns premultiplied RGBA plus
    the number of regions traversed and intervals sampled.

    With use_tree the per-sample brick set comes from a split-tree descent
    instead of the region's list; both gathers produce identical floats, so
    the flag changes cost only.
    """
    acc_r = acc_g = acc_b = acc_a = 0.0
    n_regions = 0
    n_samples = 0
    t = tmin
    while acc_a < early:
        rid, t_in, t_out = _bvh_next_hit(
            vnlo, vnhi, vnl, vnr, vns, vnc, vprims, reg_lo, reg_hi,
            ox, oy, oz, dx, dy, dz, t, tmax,
        )
        if rid < 0:
            break
        n_regions += 1
        fw = reg_finest[rid]
        dt = fw / (spc * rate)
        s1 = fw / spc
        ids = rids[roff[rid]:roff[rid + 1]]
        prev = t_in
        k = math.floor(t_in / dt - rho) + 1.0
        done = False
        while not done:
            tk = dt * (k + rho)
            k += 1.0
            if tk >= t_out:
                tk = t_out
                done = True
            elif tk <= prev:
                continue
            s = tk - prev
            mid = 0.5 * (prev + tk)
            prev = tk
            n_samples += 1
            px = ox + mid * dx
            py = oy + mid * dy
            pz = oz + mid * dz
            if use_tree:
                nb = _collect_bricks(tx_axis, tx_l, tx_r, tx_bs, tx_bc, tx_blo, tx_bhi, tx_mh, px, py, pz, buf)
                num, den = _accumulate_bricks(buf[:nb], blo, blev, bdims, boff, vals, px, py, pz)
            else:
                num, den = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, px, py, pz)
            if den > EPS_WEIGHT:
                v = num / den
                cr, cg, cb, ca = _tf_eval(tf_lo, tf_hi, tf_rgba, v)
                if ca > 0.0:
                    alpha = 1.0 - (1.0 - ca) ** (s / s1)
                    if grad_mode != 0:
                        gx, gy, gz = _sample_gradient(
                            grad_mode, px, py, pz, rid, ids, v, reg_lo, reg_hi,
                            reg_finest, roff, rids, anlo, anhi, anl, anr, ans,
                            anc, aprims, blo, blev, bdims, boff, vals,
                        )
                        f = _shade_factor(gx, gy, gz, dx, dy, dz)
                        cr *= f
                        cg *= f
                        cb *= f
                    w = alpha * (1.0 - acc_a)
                    acc_r += w * cr
                    acc_g += w * cg
                    acc_b += w * cb
                    acc_a += w
                    if acc_a >= early:
                        break
        t = _restart(t_out)
        if t >= tmax:
            break
    return acc_r, acc_g, acc_b, acc_a, n_regions, n_samples


@njit(cache=True)
def _iso_ray(inlo, inhi, inl, inr, ins, inc, iprims, reg_lo, reg_hi, roff, rids, reg_finest, blo, blev, bdims, boff, vals, ox, oy, oz, dx, dy, dz, tmin, tmax, rho, spc, rate, iso):
    """First iso-surface root along the ray, refined by 16 bisection steps.

    Returns (found, t_hit, gx, gy, gz).
    """
    t = tmin
    while True:
        rid, t_in, t_out = _bvh_next_hit(
            inlo, inhi, inl, inr, ins, inc, iprims, reg_lo, reg_hi,
            ox, oy, oz, dx, dy, dz, t, tmax,
        )
        if rid < 0:
            return False, 0.0, 0.0, 0.0, 0.0
        fw = reg_finest[rid]
        dt = fw / (spc * rate)
        ids = rids[roff[rid]:roff[rid + 1]]
        prev_t = t_in
        num, den = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, ox + t_in * dx, oy + t_in * dy, oz + t_in * dz)
        prev_ok = den > EPS_WEIGHT
        prev_f = num / den - iso if prev_ok else 0.0
        k = math.floor(t_in / dt - rho) + 1.0
        done = False
        while not done:
            tk = dt * (k + rho)
            k += 1.0
            if tk >= t_out:
                tk = t_out
                done = True
            elif tk <= prev_t:
                continue
            num, den = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, ox + tk * dx, oy + tk * dy, oz + tk * dz)
            ok = den > EPS_WEIGHT
            f = num / den - iso if ok else 0.0
            if prev_ok and ok and ((prev_f <= 0.0 and f >= 0.0) or (prev_f >= 0.0 and f <= 0.0)) and not (prev_f == 0.0 and f == 0.0):
                lo_t, hi_t = prev_t, tk
                flo = prev_f
                for _ in range(16):
                    mid = 0.5 * (lo_t + hi_t)
                    num, den = _accumulate_bricks(ids, blo, blev, bdims, boff, vals, ox + mid * dx, oy + mid * dy, oz + mid * dz)
                    fm = num / den - iso if den > EPS_WEIGHT else 0.0
                    if (flo <= 0.0 and fm <= 0.0) or (flo >= 0.0 and fm >= 0.0):
                        lo_t = mid
                        flo = fm
                    else:
                        hi_t = mid
                t_hit = 0.5 * (lo_t + hi_t)
                px = ox + t_hit * dx
                py = oy + t_hit * dy
                pz = oz + t_hit * dz
                num, den, dnx, dny, dnz, ddx, ddy, ddz = _gradient_bricks(
                    ids, blo, blev, bdims, boff, vals, px, py, pz
                )
                if den > EPS_WEIGHT:
                    d2 = den * den
                    return True, t_hit, (dnx * den - num * ddx) / d2, (dny * den - num * ddy) / d2, (dnz * den - num * ddz) / d2
                return True, t_hit, 0.0, 0.0, 0.0
            prev_t = tk
            prev_f = f
            prev_ok = ok
        t = _restart(t_out)
        if t >= tmax:
            return False, 0.0, 0.0, 0.0, 0.0


@njit(cache=True, parallel=True)
def _render_kernel(out, px_regions, px_samples, width, height, cpos, cright, cup, cfwd, tan_half, aspect, planes, vnlo, vnhi, vnl, vnr, vns, vnc, vprims, inlo, inhi, inl, inr, ins, inc, iprims, anlo, anhi, anl, anr, ans, anc, aprims, reg_lo, reg_hi, roff, rids, reg_finest, blo, blev, bdims, boff, vals, tf_lo, tf_hi, tf_rgba, spc, rate, early, seed, grad_mode, iso_on, iso_value, iso_r, iso_g, iso_b, use_tree, tx_axis, tx_l, tx_r, tx_bs, tx_bc, tx_blo, tx_bhi, tx_mh):
    n_pix = width * height
    for pix in prange(n_pix):
        buf = np.empty(1024 if use_tree else 1, np.int32)
        x = pix % width
        y = pix // width
        sx = (2.0 * (x + 0.5) / width - 1.0) * tan_half * aspect
        sy = (1.0 - 2.0 * (y + 0.5) / height) * tan_half
        dx = cfwd[0] + sx * cright[0] + sy * cup[0]
        dy = cfwd[1] + sx * cright[1] + sy * cup[1]
        dz = cfwd[2] + sx * cright[2] + sy * cup[2]
        inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
        dx *= inv
        dy *= inv
        dz *= inv
        ox, oy, oz = cpos[0], cpos[1], cpos[2]
        rho = _rho_hash(pix, seed)
        tmin, tmax = _clip_ray(planes, ox, oy, oz, dx, dy, dz, 0.0, _T_FAR)
        if tmin >= tmax:
            out[y, x, 0] = 0
            out[y, x, 1] = 0
            out[y, x, 2] = 0
            out[y, x, 3] = 0
            px_regions[pix] = 0
            px_samples[pix] = 0
            continue
        t_end = tmax
        hit = False
        hx = hy = hz = 0.0
        if iso_on:
            hit, t_hit, hx, hy, hz = _iso_ray(
                inlo, inhi, inl, inr, ins, inc, iprims, reg_lo, reg_hi, roff,
                rids, reg_finest, blo, blev, bdims, boff, vals,
                ox, oy, oz, dx, dy, dz, tmin, tmax, rho, spc, rate, iso_value,
            )
            if hit:
                t_end = t_hit
        r, g, b, a, nreg, nsmp = _volume_ray(
            vnlo, vnhi, vnl, vnr, vns, vnc, vprims, anlo, anhi, anl, anr, ans,
            anc, aprims, reg_lo, reg_hi, roff, rids, reg_finest, blo, blev,
            bdims, boff, vals, tf_lo, tf_hi, tf_rgba,
            ox, oy, oz, dx, dy, dz, tmin, t_end, rho, spc, rate, early, grad_mode,
            use_tree, tx_axis, tx_l, tx_r, tx_bs, tx_bc, tx_blo, tx_bhi, tx_mh, buf,
        )
        if hit:
            f = _shade_factor(hx, hy, hz, dx, dy, dz)
            w = 1.0 - a
            r += w * iso_r * f
            g += w * iso_g * f
            b += w * iso_b * f
            a = 1.0
        out[y, x, 0] = np.uint8(min(max(r, 0.0), 1.0) * 255.0 + 0.5)
        out[y, x, 1] = np.uint8(min(max(g, 0.0), 1.0) * 255.0 + 0.5)
        out[y, x, 2] = np.uint8(min(max(b, 0.0), 1.0) * 255.0 + 0.5)
        out[y, x, 3] = np.uint8(min(max(a, 0.0), 1.0) * 255.0 + 0.5)
        px_regions[pix] = nreg
        px_samples[pix] = nsmp


def _bvh_args(bvh: Optional[RegionBvh], fallback: RegionBvh):
    src = bvh if bvh is not None else fallback
    return src.kernel_args()[:7]


_DUMMY_TREE = (
    np.full(1, -1, np.int32), np.zeros(1, np.int32), np.zeros(1, np.int32),
    np.zeros(1, np.int32), np.zeros(1, np.int32),
    np.zeros((1, 3), np.float64), np.zeros((1, 3), np.float64),
    np.zeros(1, np.float64),
)


def _tree_args(tree: Optional[SplitTree]):
    if tree is None:
        return _DUMMY_TREE
    return (
        tree.axis, tree.left, tree.right, tree.brick_start, tree.brick_count,
        tree.box_lo, tree.box_hi, tree.max_half,
    )


def _scene_args(scene: Scene):
    reg = scene.regions
    return (
        np.ascontiguousarray(reg.lo), np.ascontiguousarray(reg.hi),
        reg.brick_off, reg.brick_ids, reg.finest_width,
        scene.model.brick_lower, scene.model.brick_level,
        scene.model.brick_dims, scene.model.brick_offset, scene.field_values,
    )


def integrate_ray(origin, direction, scene: Scene, tf: TransferFunction, params: MarchParams, pixel: int = 0, t_range=(0.0, _T_FAR)):
    """Volume-integrate a single ray; returns (rgba float64[4], stats dict)."""
    o = np.asarray(origin, np.float64)
    d = np.asarray(direction, np.float64)
    d = d / np.linalg.norm(d)
    planes = params.plane_array()
    tmin, tmax = _clip_ray(planes, o[0], o[1], o[2], d[0], d[1], d[2], float(t_range[0]), float(t_range[1]))
    if tmin >= tmax:
        return np.zeros(4), {"regions": 0, "samples": 0}
    rho = pixel_rho(pixel, params.seed)
    ab = scene.regions.point_index
    r, g, b, a, nreg, nsmp = _volume_ray(
        *_bvh_args(scene.volume_bvh, ab), *ab.kernel_args()[:7], *_scene_args(scene),
        tf.domain[0], tf.domain[1], tf.rgba,
        o[0], o[1], o[2], d[0], d[1], d[2], tmin, tmax, rho,
        params.samples_per_cell, params.rate_scale,
        params.early_term_threshold, GRADIENT_MODES[params.gradient_mode],
        False, *_DUMMY_TREE, np.empty(1, np.int32),
    )
    return np.array([r, g, b, a]), {"regions": int(nreg), "samples": int(nsmp)}


def iso_intersect(origin, direction, iso_bvh: RegionBvh, scene: Scene, iso_value: float, t_range=(0.0, _T_FAR), params: Optional[MarchParams] = None, pixel: int = 0):
    """First iso crossing along the ray, or None: (t_hit, gradient[3])."""
    if params is None:
        params = MarchParams()
    o = np.asarray(origin, np.float64)
    d = np.asarray(direction, np.float64)
    d = d / np.linalg.norm(d)
    rho = pixel_rho(pixel, params.seed)
    found, t_hit, gx, gy, gz = _iso_ray(
        *iso_bvh.kernel_args()[:7], *_scene_args(scene),
        o[0], o[1], o[2], d[0], d[1], d[2],
        float(t_range[0]), float(t_range[1]), rho,
        params.samples_per_cell, params.rate_scale, float(iso_value),
    )
    if not found:
        return None
    return float(t_hit), np.array([gx, gy, gz])


def render_frame(scene: Scene, camera: Camera, tf: TransferFunction, params: MarchParams, use_celllocation: bool = False) -> Frame:
    """Render a full frame; deterministic for fixed inputs and seed.

    use_celllocation samples through the retained split tree instead of the
    region brick lists (the benchmark baseline); output pixels are identical.
    """
    if camera.width < 1 or camera.height < 1:
        raise ValueError("image must be at least 1x1 pixel")
    if use_celllocation and scene.tree is None:
        raise ValueError("cell-location sampling requires a scene built with the split tree")
    t0 = time.perf_counter()
    w, h = camera.width, camera.height
    out = np.empty((h, w, 4), np.uint8)
    px_regions = np.empty(w * h, np.int64)
    px_samples = np.empty(w * h, np.int64)
    right, up, fwd = camera.basis()
    ab = scene.regions.point_index
    iso_on = scene.iso_bvh is not None and scene.iso_value is not None
    _render_kernel(
        out, px_regions, px_samples, w, h,
        camera.position, right, up, fwd,
        math.tan(math.radians(camera.fov_y) * 0.5), w / h,
        params.plane_array(),
        *_bvh_args(scene.volume_bvh, ab),
        *_bvh_args(scene.iso_bvh, ab),
        *ab.kernel_args()[:7],
        *_scene_args(scene),
        tf.domain[0], tf.domain[1], tf.rgba,
        params.samples_per_cell, params.rate_scale,
        params.early_term_threshold, np.uint64(params.seed & _MASK64),
        GRADIENT_MODES[params.gradient_mode],
        iso_on, float(scene.iso_value) if iso_on else 0.0,
        ISO_COLOR[0], ISO_COLOR[1], ISO_COLOR[2],
        use_celllocation, *_tree_args(scene.tree if use_celllocation else None),
    )
    ms = (time.perf_counter() - t0) * 1000.0
    stats = FrameStats(ms, int(px_regions.sum()), int(px_samples.sum()))
    return Frame(w, h, out, stats)
