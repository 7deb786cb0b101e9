"""Command line interface: ``hexrecon {synth,carve,train,render,eval}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import DataError, HexReconError, NumericalError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cmd_synth(args) -> int:
    from .harness import generate_synthetic, save_scene

    scene, _ = generate_synthetic(args.shape, args.views, args.res, args.seed)
    save_scene(scene, args.out)
    print(f"wrote {len(scene)} views of a {args.shape} to {args.out}")
    return EXIT_OK


def _cmd_carve(args) -> int:
    from .carving import carve, init_coarse_mesh
    from .harness import export_mesh, load_scene

    scene = load_scene(args.scene)
    grid = carve(scene.masks, scene.cameras, res=args.res, dilation_px=args.dilation)
    if args.dump:
        grid.dump(args.dump)
    mesh = init_coarse_mesh(grid, args.target_vertices)
    export_mesh(mesh, args.out)
    print(f"hull {int(grid.occupancy.sum())} voxels -> mesh V={mesh.n_vertices} F={mesh.n_faces} "
          f"written to {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .harness import export_mesh, load_mesh, load_scene
    from .shader import save_checkpoint
    from .training import TrainConfig, format_config, load_config, train, write_log

    cfg = load_config(args.config) if args.config else TrainConfig()
    scene = load_scene(args.scene)
    mesh = load_mesh(args.init)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))

    def checkpoint(it, m, p):
        if it in cfg.remesh_iters:
            export_mesh(m, out / f"mesh_{it:04d}.ply")
            save_checkpoint(p, out / f"shader_{it:04d}.bin")

    res = train(scene, mesh, cfg, callback=checkpoint)
    export_mesh(res.mesh, out / "mesh.ply")
    save_checkpoint(res.params, out / "shader.bin")
    write_log(res.log, out / "log.csv")
    print(f"trained {cfg.total_iters} iterations; final mesh V={res.mesh.n_vertices} in {out}")
    return EXIT_OK


def _cmd_render(args) -> int:
    from .harness import load_mesh, render_view
    from .harness.scene import load_cameras, write_png
    from .shader import load_checkpoint

    cams = load_cameras(Path(args.scene) / "cameras.json")
    if args.camera_index not in cams:
        raise DataError(f"camera index {args.camera_index} not in {args.scene}/cameras.json")
    mesh = load_mesh(args.mesh)
    params = load_checkpoint(args.params)
    rgb, cov = render_view(mesh, params, cams[args.camera_index])
    write_png(args.out, np.round(rgb * 255).astype(np.uint8))
    if args.coverage:
        write_png(args.coverage, np.round(cov * 255).astype(np.uint8))
    print(f"rendered view {args.camera_index} to {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from .harness import chamfer, load_mesh, load_scene, psnr, render_view
    from .shader import load_checkpoint

    scene = load_scene(args.scene)
    mesh = load_mesh(args.mesh)
    gt = load_mesh(args.gt) if args.gt else scene.gt_mesh
    if gt is not None:
        print(f"chamfer {chamfer(mesh, gt, args.samples, args.seed):.6f}")
    if args.params:
        params = load_checkpoint(args.params)
        _, test = scene.split(args.holdout)
        held = {v.index for v in test.views}
        vals = []
        for v in scene.views:
            p = psnr(render_view(mesh, params, v.camera)[0], v.image, v.mask)
            vals.append(p)
            print(f"view {v.index:4d} psnr {p:.3f}" + (" (held out)" if v.index in held else ""))
        print(f"mean psnr {np.mean(vals):.3f}")
        if held:
            print(f"held-out mean psnr {np.mean([p for v, p in zip(scene.views, vals) if v.index in held]):.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hexrecon", description="Multi-view mesh reconstruction with a neural shader.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("--shape", choices=["sphere", "torus", "blob"], default="sphere")
    s.add_argument("--views", type=int, default=24)
    s.add_argument("--res", type=int, default=128, help="image width and height in pixels")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True, help="output scene directory")
    s.set_defaults(func=_cmd_synth)

    s = sub.add_parser("carve", help="visual hull and coarse mesh from scene masks")
    s.add_argument("--scene", required=True)
    s.add_argument("--res", type=int, default=128, help="voxels per axis")
    s.add_argument("--dilation", type=int, default=1, help="mask dilation radius in pixels")
    s.add_argument("--target-vertices", type=int, default=2500)
    s.add_argument("--dump", help="write the occupancy bitset (plus a .txt header) here")
    s.add_argument("--out", required=True, help="output mesh (.ply or .obj)")
    s.set_defaults(func=_cmd_carve)

    s = sub.add_parser("train", help="optimize mesh and shader against a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--init", required=True, help="initial mesh")
    s.add_argument("--config", help="key = value training config (defaults if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("render", help="render one scene camera")
    s.add_argument("--mesh", required=True)
    s.add_argument("--params", required=True, help="shader checkpoint (.bin with .json sidecar)")
    s.add_argument("--scene", required=True, help="scene directory holding cameras.json")
    s.add_argument("--camera-index", type=int, required=True)
    s.add_argument("--out", required=True, help="output PNG")
    s.add_argument("--coverage", help="optional coverage PNG")
    s.set_defaults(func=_cmd_render)

    s = sub.add_parser("eval", help="Chamfer distance and per-view PSNR")
    s.add_argument("--mesh", required=True)
    s.add_argument("--gt", help="ground-truth mesh (defaults to the scene's gt.ply)")
    s.add_argument("--scene", required=True)
    s.add_argument("--params", help="shader checkpoint; enables PSNR")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--holdout", type=float, default=0.1)
    s.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (HexReconError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
