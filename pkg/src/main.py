"""
Main entry point for the voxup toolkit.
Voxelize meshes, build GT masks, partition views, render, benchmark and selftest.
"""

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from . import __version__
from .anchor import anchor_cascade, apply_mask, upsample_traditional
from .config import config, log
from .errors import MissingInputError, UsageError, VoxupError
from .fixtures import fixture, load_scene_dir, stitch_scenes
from .membench import DEFAULT_CONFIGS, bench_all, bench_table, default_memory_model
from .mesh_io import TriangleMesh, normalize_mesh, read_mesh
from .models import CameraModel, StitchCase, StitchCheckReport
from .orchestrator import SelftestOrchestrator
from .partition import cull_voxels, make_tiles, random_cameras, splat_world_margin, tile_frustum, tile_stats
from .render import render_full, render_tile, save_image, stitch_check
from .sparse_voxel import load_grid, save_grid, save_mask
from .tools import ArtifactWriter, CameraFileTool, camera_files, memory_model_files
from .voxelizer import voxelize_surface


class VoxupArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting, so errors come out as JSON."""

    def error(self, message: str):
        raise UsageError(message)


# --- Input helpers ---

def _load_mesh(args, writer: ArtifactWriter) -> TriangleMesh:
    if getattr(args, "fixture", None):
        return fixture(args.fixture).mesh
    if not args.input:
        raise UsageError("one of --in or --fixture is required")
    writer.record_input(args.input)
    mesh, report = read_mesh(args.input)
    if report.degenerate_dropped:
        log("mesh_io", f"dropped {report.degenerate_dropped} degenerate triangles", "WARNING")
    return normalize_mesh(mesh)


def _load_grid(path: str, writer: ArtifactWriter):
    writer.record_input(path)
    return load_grid(path)


def _cameras(args, writer: ArtifactWriter, count: int) -> List[CameraModel]:
    """Cameras from --camera/--cameras JSON, or seeded orbit cameras written next to the outputs."""
    path = getattr(args, "camera", None) or getattr(args, "cameras", None)
    if path:
        writer.record_input(path)
        return camera_files.load(path)
    size = getattr(args, "size", None)
    cams = random_cameras(count, args.seed, width=size, height=size)
    writer.write_text("cameras.json", CameraFileTool.dumps(cams))
    return cams


def _pick_camera(args, writer: ArtifactWriter) -> CameraModel:
    cams = _cameras(args, writer, 1)
    if not 0 <= args.camera_index < len(cams):
        raise UsageError(f"--camera-index must be in [0, {len(cams) - 1}]")
    return cams[args.camera_index]


def _splat_radius(args) -> float:
    return config.render.splat_radius_px if args.splat_radius is None else args.splat_radius


# --- Subcommands ---

def cmd_voxelize(args, writer: ArtifactWriter) -> Dict[str, Any]:
    mesh = _load_mesh(args, writer)
    with writer.timed("voxelize"):
        grid = voxelize_surface(mesh, args.res, threads=args.threads)
    out = writer.write_with(args.out, lambda p: save_grid(grid, p))
    return {"resolution": grid.resolution, "voxels": len(grid), "output": str(out)}


def cmd_upsample(args, writer: ArtifactWriter) -> Dict[str, Any]:
    grid = _load_grid(args.input, writer)
    with writer.timed("upsample"):
        up = upsample_traditional(grid)
    out = writer.write_with(args.out, lambda p: save_grid(up, p))
    return {"resolution": up.resolution, "voxels": len(up), "output": str(out)}


def cmd_anchor(args, writer: ArtifactWriter) -> Dict[str, Any]:
    mesh = _load_mesh(args, writer)
    with writer.timed("anchor"):
        levels = anchor_cascade(mesh, args.res, levels=args.levels, threads=args.threads)
    report = levels[0].report

    outputs = {"report": str(writer.write_json(args.report, report))}
    if args.levels > 1:
        outputs["levels"] = str(writer.write_json(
            Path(args.report).with_suffix(".levels.json"),
            [lvl.report.model_dump() for lvl in levels],
        ))
    if args.timings:
        for lvl in levels:
            writer.timings.update({f"anchor.r{lvl.resolution}.{k}": v for k, v in lvl.report.timings.items()})
    first = levels[0]
    if args.mask:
        outputs["mask"] = str(writer.write_with(args.mask, lambda p: save_mask(first.mask, p)))
    if args.pruned:
        pruned = apply_mask(first.candidates, first.mask)
        outputs["pruned"] = str(writer.write_with(args.pruned, lambda p: save_grid(pruned, p)))
    return {**report.model_dump(), "outputs": outputs}


def cmd_partition(args, writer: ArtifactWriter) -> Dict[str, Any]:
    grid = _load_grid(args.input, writer)
    camera = _pick_camera(args, writer)
    radius = _splat_radius(args)
    margin = int(math.ceil(radius)) if args.margin is None else args.margin
    world = splat_world_margin(camera, radius)
    with writer.timed("partition"):
        report = tile_stats(grid, camera, args.grid, margin, world, foreground=args.foreground,
                            seed=args.seed, steps=args.steps, threads=args.threads)
    out = writer.write_json(args.stats, report)
    return {
        "tiles": len(report.tiles),
        "global_kept_count": report.global_kept_count,
        "max_tile_kept_count": report.max_tile_kept_count,
        "output": str(out),
    }


def cmd_render(args, writer: ArtifactWriter) -> Dict[str, Any]:
    grid = _load_grid(args.input, writer)
    camera = _pick_camera(args, writer)
    radius = _splat_radius(args)
    with writer.timed("render"):
        if args.tile is None:
            image = render_full(grid, camera, radius)
        else:
            margin = int(math.ceil(radius)) if args.margin is None else args.margin
            tiles = make_tiles(camera, args.grid, margin)
            if not 0 <= args.tile < len(tiles):
                raise UsageError(f"--tile must be in [0, {len(tiles) - 1}]")
            tile = tiles[args.tile]
            culled = cull_voxels(grid, tile_frustum(camera, tile, splat_world_margin(camera, radius)))
            image = render_tile(culled.grid, camera, tile, radius)
    out = writer.write_with(args.out, lambda p: save_image(image, p))
    return {"width": image.width, "height": image.height, "origin": list(image.origin),
            "covered_pixels": image.coverage, "output": str(out)}


def cmd_stitch_check(args, writer: ArtifactWriter) -> Dict[str, Any]:
    scenes = load_scene_dir(Path(args.scenes)) if args.scenes else stitch_scenes()
    if not scenes:
        raise MissingInputError(f"{args.scenes}/*.obj")
    cameras = _cameras(args, writer, args.count)
    radius = _splat_radius(args)
    margin = int(math.ceil(radius)) if args.margin is None else args.margin

    cases = []
    with writer.timed("stitch_check"):
        for name, mesh in scenes.items():
            grid = voxelize_surface(mesh, args.res, threads=args.threads)
            for i, camera in enumerate(cameras):
                world = splat_world_margin(camera, radius) if args.world_margin is None else args.world_margin
                diff = stitch_check(grid, [camera], args.grid, margin, radius, world, threads=args.threads)[0]
                cases.append(StitchCase(scene=name, camera=i, grid_n=args.grid, margin_px=margin,
                                        splat_radius_px=radius, world_margin=world, differing_pixels=diff))
    exact = sum(c.differing_pixels == 0 for c in cases)
    report = StitchCheckReport(cases=cases, exact_cases=exact, total_cases=len(cases))
    out = writer.write_json(args.report, report)
    return {"exact_cases": exact, "total_cases": len(cases), "output": str(out)}


def cmd_bench(args, writer: ArtifactWriter) -> Dict[str, Any]:
    mesh = _load_mesh(args, writer)
    cameras = _cameras(args, writer, config.selftest.bench_cameras)
    if args.model:
        writer.record_input(args.model)
        model = memory_model_files.load(args.model)
    else:
        model = default_memory_model()
    if args.budget is not None:
        model = model.model_copy(update={"budget_bytes": args.budget})

    with writer.timed("bench"):
        reports = bench_all(mesh, args.res, cameras, model, configs=args.configs, levels=args.levels,
                            splat_radius_px=args.splat_radius, threads=args.threads)
    table = bench_table(reports)
    out = writer.write_json(args.out, [r.model_dump() for r in reports])
    outputs = {"reports": str(out)}
    if args.csv:
        outputs["table"] = str(writer.write_text(args.csv, table.to_csv()))
    return {"table": json.loads(table.to_json(orient="index")), "outputs": outputs}


def cmd_selftest(args, writer: ArtifactWriter) -> Dict[str, Any]:
    report = SelftestOrchestrator(writer, profile=args.profile).run(args.seed, args.threads)
    return {
        "passed": report.passed,
        "groups": {g.group: g.passed for g in report.groups},
        "errors": report.errors,
        "report": str(writer.path("selftest.json")),
    }


COMMANDS = {
    "voxelize": cmd_voxelize,
    "upsample": cmd_upsample,
    "anchor": cmd_anchor,
    "partition": cmd_partition,
    "render": cmd_render,
    "stitch-check": cmd_stitch_check,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    parser = VoxupArgumentParser(
        prog="voxup",
        description="voxup: surface-anchored voxel upsampling and view-domain partitioning toolkit",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Example usage:
  voxup voxelize --in bunny.obj --res 64 --out bunny64.svox
  voxup anchor --fixture torus_thin --res 64 --report report.json --mask torus.vmsk
  voxup --seed 7 stitch-check --grid 4 --report check.json
  voxup selftest --profile quick

Output paths are relative to --out-dir unless absolute.
        """,
    )
    parser.add_argument("--version", action="version", version=f"voxup {__version__}")
    parser.add_argument("--seed", type=int, default=config.run.seed, help="Global seed (default: VOXUP_SEED or 0)")
    parser.add_argument("--threads", type=int, default=config.run.threads, help="Worker threads (default: 1)")
    parser.add_argument("--out-dir", type=str, default=config.paths.output_dir,
                        help="Output directory (default: VOXUP_OUT_DIR or ./data/output)")

    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def mesh_source(p):
        p.add_argument("--in", dest="input", type=str, help="Input mesh (.obj or .vmsh)")
        p.add_argument("--fixture", type=str, help="Bundled fixture name instead of --in")

    def camera_source(p):
        p.add_argument("--camera", type=str, help="Camera JSON (default: a seeded orbit camera)")
        p.add_argument("--camera-index", type=int, default=0, help="Camera to use from the JSON list")
        p.add_argument("--size", type=int, default=None, help="Image size of generated cameras")

    def splat(p):
        p.add_argument("--splat-radius", type=float, default=None, help="Splat radius in pixels (default: 3)")

    p = sub.add_parser("voxelize", help="Conservative surface voxelization")
    mesh_source(p)
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--out", type=str, required=True, help="Output grid (.svox)")

    p = sub.add_parser("upsample", help="Traditional 8-child upsampling of a grid")
    p.add_argument("--in", dest="input", type=str, required=True)
    p.add_argument("--out", type=str, required=True)

    p = sub.add_parser("anchor", help="GT mask and redundancy report for R -> 2R")
    mesh_source(p)
    p.add_argument("--res", type=int, required=True)
    p.add_argument("--levels", type=int, default=1, help="Successive doublings (default: 1)")
    p.add_argument("--report", type=str, default="anchor.json")
    p.add_argument("--mask", type=str, default=None, help="Write the GT mask (.vmsk)")
    p.add_argument("--pruned", type=str, default=None, help="Write the masked 2R grid (.svox)")
    p.add_argument("--timings", action="store_true", help="Record per-stage timings in the manifest")

    p = sub.add_parser("partition", help="Tile the view and cull voxels per tile")
    p.add_argument("--in", dest="input", type=str, required=True)
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--margin", type=int, default=None, help="Tile margin in pixels (default: ceil(splat radius))")
    p.add_argument("--stats", type=str, default="tiles.json")
    p.add_argument("--foreground", action="store_true", help="Restrict tiles to the projected voxel bounds")
    p.add_argument("--steps", type=int, default=0, help="Length of the sampled tile schedule")
    camera_source(p)
    splat(p)

    p = sub.add_parser("render", help="Render a grid, or one tile of it")
    p.add_argument("--in", dest="input", type=str, required=True)
    p.add_argument("--out", type=str, required=True, help="Output image (.png or .ppm)")
    p.add_argument("--tile", type=int, default=None)
    p.add_argument("--grid", type=int, default=1)
    p.add_argument("--margin", type=int, default=None)
    camera_source(p)
    splat(p)

    p = sub.add_parser("stitch-check", help="Compare stitched tile renders with full renders")
    p.add_argument("--grid", type=int, required=True)
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--world-margin", type=float, default=None, help="Override the culling margin")
    p.add_argument("--scenes", type=str, default=None, help="Directory of meshes (default: bundled scenes)")
    p.add_argument("--res", type=int, default=32)
    p.add_argument("--count", type=int, default=config.selftest.stitch_cameras, help="Generated cameras")
    p.add_argument("--report", type=str, default="stitch_check.json")
    camera_source(p)
    splat(p)

    p = sub.add_parser("bench", help="Modeled memory per training configuration")
    mesh_source(p)
    p.add_argument("--res", type=int, nargs="+", required=True)
    p.add_argument("--cameras", type=str, default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--model", type=str, default=None, help="Memory model JSON")
    p.add_argument("--budget", type=int, default=None, help="Flag configurations above this many bytes")
    p.add_argument("--configs", nargs="+", default=list(DEFAULT_CONFIGS))
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--out", type=str, default="bench.json")
    p.add_argument("--csv", type=str, default=None)
    splat(p)

    p = sub.add_parser("selftest", help="Run the invariant suite on the bundled fixtures")
    p.add_argument("--profile", choices=["quick", "full"], default="full")

    return parser


def _emit(payload: Dict[str, Any]):
    print(json.dumps(payload, indent=2))


def run(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        config.validate()
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
    except VoxupError as e:
        _emit({"error": e.to_dict()})
        return 2 if isinstance(e, UsageError) else 1

    writer = ArtifactWriter(args.out_dir)
    try:
        result = COMMANDS[args.command](args, writer)
        code = 0 if result.get("passed", True) else 1
        _emit(result)
        return code
    except VoxupError as e:
        log(args.command, e.message, "ERROR")
        _emit({"error": e.to_dict()})
        return 2 if isinstance(e, UsageError) else 1
    except KeyboardInterrupt:
        log(args.command, "interrupted by user", "WARNING")
        return 130
    except Exception as e:
        log(args.command, f"internal error: {e}", "ERROR")
        _emit({"error": {"code": "INTERNAL", "message": str(e)}})
        return 3
    finally:
        writer.write_manifest(args.command, argv, args.seed, args.threads)


def main():
    """Console-script entry point."""
    sys.exit(run())


if __name__ == "__main__":
    main()
