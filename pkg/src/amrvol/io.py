"""Cell-list serialization, synthetic AMR generators, structured import, images.

.exacells layout (all little-endian):
  magic "EXAC" | version u32 | field count u32 | per field: name length u32 + UTF-8
  | cell count u64 | i[] i32 | j[] i32 | k[] i32 | level[] u8 | per field: value[] f32
"""
from __future__ import annotations

import io as _stdio
import json
import struct
from dataclasses import dataclass, field as _dc_field

import numpy as np
from PIL import Image

from .model import Box3, CellList

__all__ = [
    "ExaCellsError",
    "save_cells",
    "load_cells",
    "SyntheticSpec",
    "AnalyticField",
    "make_field",
    "generate_synthetic",
    "import_structured",
    "write_png",
    "encode_png",
    "save_artifact",
    "load_artifact",
]

MAGIC = b"EXAC"
VERSION = 1


class ExaCellsError(Exception):
    """Structured parse failure: message plus the byte offset it occurred at."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


def save_cells(path, cells: CellList) -> None:
    cells = cells if isinstance(cells, CellList) else CellList.from_cells(list(cells))
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", cells.n_fields))
        for name in cells.field_names:
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(struct.pack("<Q", len(cells)))
        f.write(cells.i.astype("<i4").tobytes())
        f.write(cells.j.astype("<i4").tobytes())
        f.write(cells.k.astype("<i4").tobytes())
        f.write(cells.level.astype("<u1").tobytes())
        for fi in range(cells.n_fields):
            f.write(np.ascontiguousarray(cells.values[:, fi]).astype("<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise ExaCellsError(f"truncated file: missing {what}", self.pos)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        nbytes = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(nbytes, what), dtype=dtype).copy()


def load_cells(path) -> CellList:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise ExaCellsError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    version = r.u32("version")
    if version != VERSION:
        raise ExaCellsError(f"unsupported version {version}", 4)
    n_fields = r.u32("field count")
    names = []
    for fi in range(n_fields):
        ln = r.u32(f"name length of field {fi}")
        names.append(r.take(ln, f"name of field {fi}").decode("utf-8"))
    n = r.u64("cell count")
    i = r.array("<i4", n, "i[]")
    j = r.array("<i4", n, "j[]")
    k = r.array("<i4", n, "k[]")
    lev = r.array("<u1", n, "level[]")
    values = np.empty((n, n_fields), np.float32)
    for fi, name in enumerate(names):
        values[:, fi] = r.array("<f4", n, f"values[{name}]")
    if r.pos != len(data):
        raise ExaCellsError(f"{len(data) - r.pos} trailing bytes after values", r.pos)
    return CellList(i, j, k, lev.astype(np.int32), values, names)


# ---------------------------------------------------------------------------
# Synthetic models


class AnalyticField:
    """Closed-form scalar field with values and gradients at arbitrary points."""

    def value(self, p: np.ndarray) -> np.ndarray:  # (n,3) -> (n,)
        raise NotImplementedError

    def gradient(self, p: np.ndarray) -> np.ndarray:  # (n,3) -> (n,3)
        raise NotImplementedError


class RampField(AnalyticField):
    """f(p) = dot(axis, p) + offset; constant gradient."""

    def __init__(self, direction=(1.0, 0.0, 0.0), offset=0.0):
        self.direction = np.asarray(direction, np.float64)
        self.offset = float(offset)

    def value(self, p):
        return p @ self.direction + self.offset

    def gradient(self, p):
        return np.broadcast_to(self.direction, p.shape).copy()


class ConstantField(AnalyticField):
    def __init__(self, c=1.0):
        self.c = float(c)

    def value(self, p):
        return np.full(len(p), self.c)

    def gradient(self, p):
        return np.zeros_like(p)


class GaussianField(AnalyticField):
    """Radial Gaussian bump: amp * exp(-|p-center|^2 / (2 sigma^2))."""

    def __init__(self, center, sigma, amp=1.0):
        self.center = np.asarray(center, np.float64)
        self.sigma = float(sigma)
        self.amp = float(amp)

    def value(self, p):
        d2 = np.sum((p - self.center) ** 2, axis=1)
        return self.amp * np.exp(-d2 / (2 * self.sigma**2))

    def gradient(self, p):
        d = p - self.center
        v = self.value(p)
        return -d * (v / self.sigma**2)[:, None]


class OctaveField(AnalyticField):
    """Turbulence-like sum of random-direction sinusoids, one per octave."""

    def __init__(self, seed: int, octaves: int = 4, base_freq: float = 0.05, amp: float = 1.0):
        rng = np.random.default_rng(seed)
        self.waves = []
        for o in range(octaves):
            k = rng.normal(size=3)
            k *= base_freq * (2.0**o) * 2 * np.pi / np.linalg.norm(k)
            phase = rng.uniform(0, 2 * np.pi)
            self.waves.append((k, phase, amp * 0.5**o))

    def value(self, p):
        out = np.zeros(len(p))
        for k, phase, a in self.waves:
            out += a * np.sin(p @ k + phase)
        return out

    def gradient(self, p):
        out = np.zeros_like(p, dtype=np.float64)
        for k, phase, a in self.waves:
            out += (a * np.cos(p @ k + phase))[:, None] * k
        return out


@dataclass
class SyntheticSpec:
    """Recipe for a deterministic synthetic AMR model.

    extent is in finest-cell units and must be a multiple of 2**max_level per
    axis. Refinement: a cell splits into 8 children one level finer wherever
    |grad f(center)| * width >= threshold (0 always fires, inf never fires).
    holes remove emitted cells whose center falls inside any (cx,cy,cz,r)
    sphere; refine_spheres force refinement to level 0 inside them, which
    manufactures >1-level jumps next to coarse neighbors.
    """

    field: str = "gaussian"
    extent: tuple[int, int, int] = (32, 32, 32)
    max_level: int = 3
    threshold: float = 0.05
    seed: int = 0
    holes: tuple = ()
    refine_spheres: tuple = ()
    field_name: str = "value"
    field_params: dict = _dc_field(default_factory=dict)


def make_field(spec: SyntheticSpec) -> AnalyticField:
    center = np.asarray(spec.extent, np.float64) / 2
    scale = float(min(spec.extent))
    kind = spec.field
    params = dict(spec.field_params)
    if kind == "gaussian":
        return GaussianField(
            params.pop("center", center), params.pop("sigma", scale / 5), **params
        )
    if kind == "ramp":
        return RampField(**params)
    if kind == "constant":
        return ConstantField(**params)
    if kind == "octaves":
        return OctaveField(seed=spec.seed, **params)
    raise ValueError(f"unknown field kind {kind!r}")


def _in_spheres(centers: np.ndarray, spheres) -> np.ndarray:
    hit = np.zeros(len(centers), bool)
    for cx, cy, cz, r in spheres:
        d2 = np.sum((centers - np.array([cx, cy, cz])) ** 2, axis=1)
        hit |= d2 < r * r
    return hit


def generate_synthetic(spec: SyntheticSpec) -> CellList:
    """Top-down octree refinement from max_level down to level 0."""
    fld = make_field(spec)
    ext = np.asarray(spec.extent, np.int64)
    top = 1 << spec.max_level
    if np.any(ext % top) or np.any(ext <= 0):
        raise ValueError(f"extent {spec.extent} must be positive multiples of {top}")

    grid = ext // top
    gi, gj, gk = np.meshgrid(
        np.arange(grid[0]), np.arange(grid[1]), np.arange(grid[2]), indexing="ij"
    )
    i = (gi.ravel() * top).astype(np.int64)
    j = (gj.ravel() * top).astype(np.int64)
    k = (gk.ravel() * top).astype(np.int64)

    out_i, out_j, out_k, out_l = [], [], [], []
    for level in range(spec.max_level, 0, -1):
        w = 1 << level
        centers = np.stack([i, j, k], axis=1).astype(np.float64) + w / 2
        g = np.linalg.norm(fld.gradient(centers), axis=1)
        fire = g * w >= spec.threshold
        if spec.refine_spheres:
            fire |= _in_spheres(centers, spec.refine_spheres)
        keep = ~fire
        out_i.append(i[keep]); out_j.append(j[keep]); out_k.append(k[keep])
        out_l.append(np.full(keep.sum(), level, np.int64))
        # split firing cells into 8 children one level finer
        ii, jj, kk = i[fire], j[fire], k[fire]
        h = w // 2
        off = np.array(
            [(a, b, c) for c in (0, h) for b in (0, h) for a in (0, h)], np.int64
        )
        i = (ii[:, None] + off[:, 0]).ravel()
        j = (jj[:, None] + off[:, 1]).ravel()
        k = (kk[:, None] + off[:, 2]).ravel()
    out_i.append(i); out_j.append(j); out_k.append(k)
    out_l.append(np.zeros(len(i), np.int64))

    i = np.concatenate(out_i)
    j = np.concatenate(out_j)
    k = np.concatenate(out_k)
    lev = np.concatenate(out_l)
    centers = np.stack([i, j, k], 1).astype(np.float64) + (2.0**lev)[:, None] / 2
    if spec.holes:
        keep = ~_in_spheres(centers, spec.holes)
        i, j, k, lev, centers = i[keep], j[keep], k[keep], lev[keep], centers[keep]
    values = fld.value(centers).astype(np.float32)
    return CellList(i, j, k, lev, values, (spec.field_name,))


# ---------------------------------------------------------------------------
# Structured-grid import


def import_structured(values: np.ndarray, tolerance: float = 0.0, field_name: str = "value") -> CellList:
    """One level-0 cell per voxel, then bottom-up 2x2x2 coarsening while the
    spread of covered *original* values stays <= tolerance; merged value is the
    mean of covered voxels. Ragged (non-power-of-two) edges stay at the level
    they reached."""
    values = np.asarray(values, np.float64)
    if values.ndim != 3 or min(values.shape) < 1:
        raise ValueError("values must be a non-empty 3-d array")

    out_i, out_j, out_k, out_l, out_v = [], [], [], [], []

    def emit(mask, level, means):
        idx = np.argwhere(mask)
        if len(idx) == 0:
            return
        w = 1 << level
        out_i.append(idx[:, 0] * w)
        out_j.append(idx[:, 1] * w)
        out_k.append(idx[:, 2] * w)
        out_l.append(np.full(len(idx), level, np.int64))
        out_v.append(means[mask])

    def pool(a, op):
        s = a.shape
        r = a.reshape(s[0] // 2, 2, s[1] // 2, 2, s[2] // 2, 2)
        return op(r, axis=(1, 3, 5))

    vmin = values.copy()
    vmax = values.copy()
    vmean = values.copy()
    alive = np.ones(values.shape, bool)
    level = 0
    while min(vmean.shape) >= 2 and alive.any():
        dims = np.array(vmean.shape)
        even = (dims // 2) * 2
        ragged = np.zeros(tuple(dims), bool)
        ragged[even[0] :, :, :] = True
        ragged[:, even[1] :, :] = True
        ragged[:, :, even[2] :] = True
        emit(alive & ragged, level, vmean)

        a = alive[: even[0], : even[1], : even[2]]
        # dead slots get sentinel ranges so their parents never merge
        c_min = np.where(a, vmin[: even[0], : even[1], : even[2]], np.inf)
        c_max = np.where(a, vmax[: even[0], : even[1], : even[2]], -np.inf)
        c_mean = vmean[: even[0], : even[1], : even[2]]

        all8 = pool(a, np.all)
        p_min = pool(c_min, np.min)
        p_max = pool(c_max, np.max)
        p_mean = pool(c_mean, np.mean)
        mergeable = all8 & ((p_max - p_min) <= tolerance)

        up = np.repeat(np.repeat(np.repeat(mergeable, 2, 0), 2, 1), 2, 2)
        emit(a & ~up, level, c_mean)

        vmin, vmax, vmean, alive = p_min, p_max, p_mean, mergeable
        level += 1
    emit(alive, level, vmean)

    i = np.concatenate(out_i) if out_i else np.zeros(0, np.int64)
    j = np.concatenate(out_j) if out_j else np.zeros(0, np.int64)
    k = np.concatenate(out_k) if out_k else np.zeros(0, np.int64)
    lev = np.concatenate(out_l) if out_l else np.zeros(0, np.int64)
    v = np.concatenate(out_v) if out_v else np.zeros(0)
    return CellList(i, j, k, lev, v.astype(np.float32), (field_name,))


def write_png(path, rgba: np.ndarray) -> None:
    """Write an (H, W, 4) uint8 array as PNG."""
    rgba = np.ascontiguousarray(rgba, np.uint8)
    Image.fromarray(rgba, "RGBA").save(path, format="PNG")


def encode_png(rgba: np.ndarray) -> bytes:
    """PNG-encode an (H, W, 4) uint8 array in memory."""
    rgba = np.ascontiguousarray(rgba, np.uint8)
    buf = _stdio.BytesIO()
    Image.fromarray(rgba, "RGBA").save(buf, format="PNG")
    return buf.getvalue()


ARTIFACT_VERSION = 1


def save_artifact(path, model, regions, tree=None) -> None:
    """Persist a built model + regions (+ optional split tree) as one file."""
    arrays = {
        "meta": np.frombuffer(
            json.dumps(
                {
                    "version": ARTIFACT_VERSION,
                    "field_names": list(model.field_names),
                    "has_tree": tree is not None,
                }
            ).encode(),
            dtype=np.uint8,
        ),
        "m_lower": model.brick_lower,
        "m_level": model.brick_level,
        "m_dims": model.brick_dims,
        "m_scalars": model.scalars,
        "r_lo": regions.lo,
        "r_hi": regions.hi,
        "r_off": regions.brick_off,
        "r_ids": regions.brick_ids,
        "r_range": regions.value_range,
        "r_finest": regions.finest_width,
    }
    if tree is not None:
        arrays.update(
            t_axis=tree.axis, t_pos=tree.pos, t_left=tree.left,
            t_right=tree.right, t_bstart=tree.brick_start,
            t_bcount=tree.brick_count, t_blo=tree.box_lo, t_bhi=tree.box_hi,
            t_mh=tree.max_half,
        )
    np.savez(path, **arrays)


def load_artifact(path):
    """Load (model, regions, tree_or_None) written by save_artifact."""
    from .bricks import SplitTree
    from .model import AmrModel
    from .regions import RegionSet

    try:
        data = np.load(path, allow_pickle=False)
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != ARTIFACT_VERSION:
            raise ExaCellsError(f"unsupported artifact version {meta.get('version')}", 0)
        names = tuple(meta["field_names"])
        model = AmrModel(
            names, data["m_lower"], data["m_level"], data["m_dims"], data["m_scalars"]
        )
        regions = RegionSet(
            data["r_lo"], data["r_hi"], data["r_off"], data["r_ids"],
            data["r_range"], data["r_finest"], names,
        )
        tree = None
        if meta.get("has_tree"):
            tree = SplitTree(
                data["t_axis"], data["t_pos"], data["t_left"], data["t_right"],
                data["t_bstart"], data["t_bcount"], data["t_blo"],
                data["t_bhi"], data["t_mh"],
            )
        return model, regions, tree
    except (KeyError, ValueError, OSError) as exc:
        raise ExaCellsError(f"unreadable artifact: {exc}", 0) from None
