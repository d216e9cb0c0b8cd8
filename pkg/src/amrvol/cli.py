"""Offline command-line front end: build artifacts from cell lists, render
frames, run the orbit benchmark, and launch the streaming service.

Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import socket
import sys

import numpy as np

from . import io as avio
from .accel import TransferFunction
from .bench import run_bench, write_csv, write_figure
from .bricks import BrickBuildParams, InvalidCellsError, build_bricks
from .regions import build_regions, region_stats
from .render import GRADIENT_MODES, Camera, MarchParams, build_scene, render_frame

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA"]


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; our contract reserves 2 for data
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _vec3(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _resolution(text: str) -> tuple:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("resolution must be positive")
    return w, h


def _plane(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError(f"expected nx,ny,nz,offset, got {text!r}")
    try:
        vals = [float(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None
    return (vals[0], vals[1], vals[2]), vals[3]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amrvol", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build bricks + regions from an .exacells file")
    b.add_argument("input", help="input .exacells path")
    b.add_argument("output", help="output artifact path (.npz)")
    b.add_argument("--max-brick-width", type=int, default=32)
    b.add_argument("--no-tree", action="store_true", help="skip retaining the split tree")

    i = sub.add_parser("info", help="print statistics of a built artifact")
    i.add_argument("artifact")

    r = sub.add_parser("render", help="render one frame from an artifact")
    r.add_argument("artifact")
    r.add_argument("-o", "--output", default="frame.png")
    r.add_argument("--pos", type=_vec3, default=None, help="camera position x,y,z")
    r.add_argument("--look", type=_vec3, default=None, help="look-at point x,y,z")
    r.add_argument("--up", type=_vec3, default=(0.0, 1.0, 0.0))
    r.add_argument("--fov", type=float, default=40.0)
    r.add_argument("--res", type=_resolution, default=(512, 512))
    r.add_argument("--tf", default=None, help="transfer function JSON path")
    r.add_argument("--field", default=None, help="field name or index")
    r.add_argument("--iso", type=float, default=None)
    r.add_argument("--rate-scale", type=float, default=1.0)
    r.add_argument("--gradient", choices=sorted(GRADIENT_MODES), default="analytic")
    r.add_argument("--clip", type=_plane, action="append", default=[],
                   help="clip plane nx,ny,nz,offset (repeatable, up to 6)")
    r.add_argument("--seed", type=int, default=0)

    be = sub.add_parser("bench", help="orbit benchmark, CSV + figure")
    be.add_argument("artifact")
    be.add_argument("-o", "--output", default="bench.csv")
    be.add_argument("--mode", choices=["region", "celllocation"], default="region")
    be.add_argument("--views", type=int, default=12)
    be.add_argument("--res", type=_resolution, default=(512, 512))
    be.add_argument("--tf", default=None)
    be.add_argument("--field", default=None)
    be.add_argument("--rate-scale", type=float, default=1.0)
    be.add_argument("--gradient", choices=sorted(GRADIENT_MODES), default="none")
    be.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("serve", help="run the frame-streaming service")
    s.add_argument("artifact")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=9876)
    return p


def _field_index(model, name) -> int:
    if name is None:
        return 0
    if name in model.field_names:
        return model.field_names.index(name)
    try:
        idx = int(name)
    except ValueError:
        raise ValueError(f"unknown field {name!r}; have {model.field_names}") from None
    if not 0 <= idx < len(model.field_names):
        raise ValueError(f"field index {idx} out of range")
    return idx


def _load_tf(path, model, field: int) -> TransferFunction:
    if path is None:
        lo, hi = model.value_range(field)
        if not lo < hi:
            lo, hi = lo - 0.5, hi + 0.5
        return TransferFunction.grayscale((lo, hi))
    with open(path) as fh:
        return TransferFunction.from_dict(json.load(fh))


def _default_camera(regions, width: int, height: int, fov: float) -> Camera:
    from .bench import orbit_cameras

    cam = orbit_cameras(regions.bounds, 1, width, height, fov)[0]
    return cam


def _print_stats(model, regions, file=None) -> None:
    file = file or sys.stdout
    st = region_stats(regions)
    rows = [
        ("cells", model.n_cells),
        ("bricks", model.n_bricks),
        ("regions", st.n_regions),
        ("bricks/region (by count)", f"{st.bricks_per_region_by_count:.3f}"),
        ("bricks/region (by volume)", f"{st.bricks_per_region_by_volume:.3f}"),
        ("max bricks in a region", st.max_bricks_per_region),
    ]
    for label, value in rows:
        print(f"{label:>26}: {value}", file=file)


def cmd_build(args) -> int:
    cells = avio.load_cells(args.input)
    params = BrickBuildParams(
        max_brick_width=args.max_brick_width, keep_split_tree=not args.no_tree
    )
    model, tree = build_bricks(cells, params)
    regions = build_regions(model)
    avio.save_artifact(args.output, model, regions, tree)
    _print_stats(model, regions)
    return EXIT_OK


def cmd_info(args) -> int:
    model, regions, tree = avio.load_artifact(args.artifact)
    _print_stats(model, regions)
    print(f"{'fields':>26}: {', '.join(model.field_names)}")
    print(f"{'split tree':>26}: {'yes' if tree is not None else 'no'}")
    return EXIT_OK


def cmd_render(args) -> int:
    model, regions, tree = avio.load_artifact(args.artifact)
    field = _field_index(model, args.field)
    tf = _load_tf(args.tf, model, field)
    w, h = args.res
    if args.pos is not None:
        look = args.look if args.look is not None else tuple(regions.bounds.center)
        fwd = np.asarray(look, np.float64) - np.asarray(args.pos, np.float64)
        cam = Camera(np.asarray(args.pos, np.float64), fwd, np.asarray(args.up, np.float64), args.fov, w, h)
    else:
        cam = _default_camera(regions, w, h, args.fov)
    scene = build_scene(model, regions, tf, field, iso_value=args.iso, tree=tree)
    params = MarchParams(
        rate_scale=args.rate_scale, seed=args.seed,
        gradient_mode=args.gradient, clip_planes=args.clip,
    )
    frame = render_frame(scene, cam, tf, params)
    frame.stats.bvh_rebuild_ms = scene.volume_bvh.build_ms + (
        scene.iso_bvh.build_ms if scene.iso_bvh is not None else 0.0
    )
    avio.write_png(args.output, frame.rgba)
    stats_path = args.output.rsplit(".", 1)[0] + ".stats.json"
    with open(stats_path, "w") as fh:
        json.dump(frame.stats.to_dict(), fh, indent=2)
    print(json.dumps(frame.stats.to_dict()))
    return EXIT_OK


def cmd_bench(args) -> int:
    model, regions, tree = avio.load_artifact(args.artifact)
    use_cellloc = args.mode == "celllocation"
    if use_cellloc and tree is None:
        raise ValueError("artifact has no split tree; rebuild without --no-tree")
    field = _field_index(model, args.field)
    tf = _load_tf(args.tf, model, field)
    scene = build_scene(model, regions, tf, field, tree=tree)
    params = MarchParams(rate_scale=args.rate_scale, seed=args.seed, gradient_mode=args.gradient)
    w, h = args.res
    rows, _ = run_bench(scene, tf, params, args.views, w, h, use_cellloc)
    write_csv(args.output, rows)
    fig_path = args.output.rsplit(".", 1)[0] + ".png"
    write_figure(fig_path, rows, f"{args.mode} sampling, {w}x{h}, {args.views} views")
    mean = sum(r.ms for r in rows) / len(rows)
    print(f"mean {mean:.1f} ms over {len(rows)} views ({args.mode}); csv: {args.output}; figure: {fig_path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    model, regions, tree = avio.load_artifact(args.artifact)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((args.host, args.port))
    except OSError as exc:
        print(f"cannot bind {args.host}:{args.port}: {exc}", file=sys.stderr)
        return EXIT_DATA
    finally:
        probe.close()

    import uvicorn

    from .service import make_app

    app = make_app(model, regions, tree)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


_COMMANDS = {
    "build": cmd_build,
    "info": cmd_info,
    "render": cmd_render,
    "bench": cmd_bench,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except InvalidCellsError as exc:
        print(f"invalid cells:\n{exc.report.summary()}", file=sys.stderr)
        return EXIT_DATA
    except avio.ExaCellsError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"missing file: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, json.JSONDecodeError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
