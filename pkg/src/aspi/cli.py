"""Command-line interface.

Subcommands cover the full pipeline: `simulate` renders a synthetic
acquisition, `calibrate` fits a mask model from three reference frames,
`reconstruct` recovers the confocal volume, `depthmap` and `psf` analyze it,
and `bench` measures reconstruction throughput. Every subcommand prints a
single machine-parsable ``key=value`` summary line to stdout on success.

Exit codes: 0 success, 1 runtime failure (bad data, violated invariants,
I/O problems; a diagnostic goes to stderr), 2 usage errors (argparse).
The worker thread count falls back to the ASPI_THREADS environment
variable when --threads is not given.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .bench import bench_reconstruction
from .calibration import AffineMap, MaskModel, fit_mask_model
from .forward_sim import (
    NoiseSpec,
    Scene,
    acquire_stack,
    base_camera_pattern,
    camera_shape,
    make_tilted_plane_scene,
    render_frame,
)
from .imaging_model import GeometryConfig, PatternSpec, ZGrid, threshold_mask
from .reconstructor import (
    SENTINEL,
    GeometryMasks,
    ModelMasks,
    VolumeStack,
    reconstruct_volume,
)
from .stack_io import read_stack, write_pgm, write_stack
from .volume_analysis import axial_psf, extract_depth_map, fwhm

__all__ = ["run_cli", "main"]


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("ASPI_THREADS", "1")))
    except ValueError:
        return 1


def _add_rig_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("pattern")
    g.add_argument("--proj-width", type=int, default=256, help="projector width, pixels")
    g.add_argument("--proj-height", type=int, default=256, help="projector height, pixels")
    g.add_argument("--period", type=int, default=30, help="slit period d, projector pixels")
    g.add_argument("--linewidth", type=int, default=2, help="slit linewidth w, projector pixels")
    g.add_argument("--shift-step", type=int, default=1, help="scan step, projector pixels")
    g.add_argument("--shifts", type=int, default=30, help="number of scan positions n")
    g = p.add_argument_group("geometry")
    g.add_argument("--theta-deg", type=float, default=25.0, help="projection tilt, degrees")
    g.add_argument("--z-step", type=float, default=1.0, help="depth section spacing, length units")
    g.add_argument("--pixel-pitch", type=float, default=1.0, help="camera pixel size, length units")
    g.add_argument("--magnification", type=float, default=1.0, help="camera pixels per projector pixel")
    g.add_argument("--shift-sign", type=int, choices=(1, -1), default=1,
                   help="mask shift direction for increasing depth")
    g = p.add_argument_group("depth grid")
    g.add_argument("--z0", type=float, default=0.0, help="depth of section 0")
    g.add_argument("--sections", type=int, default=100, help="number of depth sections K")


def _rig_from_args(args) -> tuple[PatternSpec, GeometryConfig, ZGrid]:
    spec = PatternSpec(
        proj_width=args.proj_width,
        proj_height=args.proj_height,
        period_d=args.period,
        linewidth_w=args.linewidth,
        shift_step=args.shift_step,
        num_shifts_n=args.shifts,
    )
    geom = GeometryConfig(
        tilt_theta=math.radians(args.theta_deg),
        z_step=args.z_step,
        camera_pixel_pitch=args.pixel_pitch,
        magnification=args.magnification,
        shift_sign=args.shift_sign,
    )
    grid = ZGrid(z0=args.z0, z_step=args.z_step, count=args.sections)
    return spec, geom, grid


def _rig_metadata(spec: PatternSpec, geom: GeometryConfig, grid: ZGrid) -> dict:
    return {
        "proj_width": spec.proj_width,
        "proj_height": spec.proj_height,
        "period_d": spec.period_d,
        "linewidth_w": spec.linewidth_w,
        "shift_step": spec.shift_step,
        "num_shifts_n": spec.num_shifts_n,
        "theta_rad": geom.tilt_theta,
        "z_step": geom.z_step,
        "pixel_pitch": geom.camera_pixel_pitch,
        "magnification": geom.magnification,
        "shift_sign": geom.shift_sign,
        "z0": grid.z0,
        "sections": grid.count,
    }


def _rig_from_metadata(meta: dict) -> tuple[PatternSpec, GeometryConfig, ZGrid]:
    try:
        spec = PatternSpec(
            proj_width=int(meta["proj_width"]),
            proj_height=int(meta["proj_height"]),
            period_d=int(meta["period_d"]),
            linewidth_w=int(meta["linewidth_w"]),
            shift_step=int(meta["shift_step"]),
            num_shifts_n=int(meta["num_shifts_n"]),
        )
        geom = GeometryConfig(
            tilt_theta=float(meta["theta_rad"]),
            z_step=float(meta["z_step"]),
            camera_pixel_pitch=float(meta["pixel_pitch"]),
            magnification=float(meta["magnification"]),
            shift_sign=int(meta["shift_sign"]),
        )
        grid = ZGrid(z0=float(meta["z0"]), z_step=float(meta["z_step"]), count=int(meta["sections"]))
    except KeyError as exc:
        raise ValueError(f"sidecar metadata missing key {exc.args[0]!r}") from exc
    return spec, geom, grid


def _parse_layer_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError as exc:
        raise ValueError(f"--layer-z expects comma-separated integers, got {text!r}") from exc


def _build_scene(args, spec, geom, grid) -> Scene:
    shape = camera_shape(spec, geom)
    noise = NoiseSpec(
        gaussian_sigma=args.noise_sigma,
        poisson_scale=args.poisson_scale,
        seed=args.seed,
    )
    if args.scene == "tilted":
        return make_tilted_plane_scene(
            grid, args.slope, np.ones(shape), z_start=args.z_start,
            haze_fraction=args.haze, noise=noise,
        )
    z_list = _parse_layer_list(args.layer_z)
    if not z_list:
        raise ValueError("--layer-z must name at least one section")
    layers = []
    if args.scene == "uniform":
        for z in z_list:
            layers.append((z, np.ones(shape)))
    else:  # bands: one horizontal stripe per layer
        bounds = np.linspace(0, shape[0], len(z_list) + 1).astype(int)
        for (z, r0, r1) in zip(z_list, bounds[:-1], bounds[1:]):
            band = np.zeros(shape)
            band[r0:r1, :] = 1.0
            layers.append((z, band))
    return Scene(layers=layers, haze_fraction=args.haze, noise=noise)


def _print_summary(**kv):
    print(" ".join(f"{key}={value}" for key, value in kv.items()))


def cmd_simulate(args) -> int:
    spec, geom, grid = _rig_from_args(args)
    scene = _build_scene(args, spec, geom, grid)
    acq = acquire_stack(scene, spec, geom, grid)
    meta = _rig_metadata(spec, geom, grid)
    meta.update(
        kind="acquisition",
        scene=args.scene,
        haze=args.haze,
        noise_sigma=args.noise_sigma,
        poisson_scale=args.poisson_scale,
        seed=args.seed,
    )
    write_stack(acq.frames, meta, args.out)
    h, w = acq.frame_shape
    _print_summary(kind="acquisition", frames=spec.num_shifts_n, width=w, height=h,
                   sections=grid.count, path=args.out)
    return 0


def cmd_calibrate(args) -> int:
    planes, _ = read_stack(args.refs)
    if planes.shape[0] != 3:
        raise ValueError(f"calibration needs exactly 3 reference planes, got {planes.shape[0]}")
    refs = [p.astype(np.float64) for p in planes]
    if args.normalize:
        refs = [r / r.max() if r.max() > 0 else r for r in refs]
    model = fit_mask_model(refs[0], refs[1], refs[2], (args.anchor_x, args.anchor_z))
    meta = {
        "kind": "mask-model",
        "lateral_dx": model.lateral_map.c,
        "lateral_dy": model.lateral_map.f,
        "axial_dx": model.axial_map.c,
        "axial_dy": model.axial_map.f,
        "anchor_x": model.anchors[0],
        "anchor_z": model.anchors[1],
        "lateral_residual_rms": model.lateral_residual_rms,
        "axial_residual_rms": model.axial_residual_rms,
    }
    write_stack(model.base_mask, meta, args.out)
    _print_summary(kind="mask-model",
                   lateral_dx=f"{model.lateral_map.c:.6f}", lateral_dy=f"{model.lateral_map.f:.6f}",
                   axial_dx=f"{model.axial_map.c:.6f}", axial_dy=f"{model.axial_map.f:.6f}",
                   path=args.out)
    return 0


def _load_model(path) -> MaskModel:
    planes, meta = read_stack(path)
    if meta.get("kind") != "mask-model":
        raise ValueError(f"{path} is not a mask-model file")
    return MaskModel(
        base_mask=planes[0].astype(np.float64),
        lateral_map=AffineMap.translation(float(meta["lateral_dx"]), float(meta["lateral_dy"])),
        axial_map=AffineMap.translation(float(meta["axial_dx"]), float(meta["axial_dy"])),
        anchors=(int(meta["anchor_x"]), int(meta["anchor_z"])),
        lateral_residual_rms=float(meta["lateral_residual_rms"]),
        axial_residual_rms=float(meta["axial_residual_rms"]),
    )


def cmd_reconstruct(args) -> int:
    frames, meta = read_stack(args.input)
    spec, geom, grid = _rig_from_metadata(meta)
    if frames.shape[0] != spec.num_shifts_n:
        raise ValueError(
            f"acquisition has {frames.shape[0]} frames but metadata declares "
            f"{spec.num_shifts_n} scan positions"
        )
    expected_shape = camera_shape(spec, geom)
    if frames.shape[1:] != expected_shape:
        raise ValueError(
            f"acquisition planes are {frames.shape[1:]} but the rig implies {expected_shape}"
        )
    threads = args.threads if args.threads is not None else _default_threads()
    if args.model:
        provider = ModelMasks(_load_model(args.model), grid, spec.num_shifts_n)
    else:
        provider = GeometryMasks(spec, geom, grid, threshold=args.threshold)
    volume = reconstruct_volume(frames.astype(np.float64), provider, grid,
                                floor=args.floor, threads=threads)
    out_meta = _rig_metadata(spec, geom, grid)
    out_meta.update(
        kind="volume",
        floor=volume.coverage_floor_used,
        sentinel=SENTINEL,
        masks_source=volume.masks_source,
    )
    write_stack(volume.sections, out_meta, args.out)
    sentinel_fraction = float(np.mean(volume.sections == SENTINEL))
    ambiguous = getattr(provider, "ambiguous", None)
    _print_summary(kind="volume", sections=grid.count,
                   floor=f"{volume.coverage_floor_used:.6g}",
                   sentinel_fraction=f"{sentinel_fraction:.6g}",
                   ambiguous="n/a" if ambiguous is None else str(bool(ambiguous)).lower(),
                   masks_source=volume.masks_source, path=args.out)
    return 0


def cmd_depthmap(args) -> int:
    planes, meta = read_stack(args.input)
    if meta.get("kind") != "volume":
        raise ValueError(f"{args.input} is not a volume file")
    grid = ZGrid(z0=float(meta["z0"]), z_step=float(meta["z_step"]), count=int(meta["sections"]))
    if planes.shape[0] != grid.count:
        raise ValueError(f"volume has {planes.shape[0]} planes, metadata declares {grid.count}")
    volume = VolumeStack(
        sections=planes.astype(np.float64),
        grid=grid,
        coverage_floor_used=float(meta.get("floor", "0") or 0),
    )
    dm = extract_depth_map(volume, min_confidence=args.min_confidence, refine=args.refine)
    out_meta = {
        "kind": "depthmap",
        "z0": grid.z0,
        "z_step": grid.z_step,
        "sections": grid.count,
        "refine": int(args.refine),
    }
    write_stack(dm.depth, out_meta, args.out)
    if args.confidence_out:
        write_stack(dm.confidence, {"kind": "confidence"}, args.confidence_out)
    if args.pgm:
        write_pgm(dm.depth, args.pgm, invalid_value=float(grid.z0))
    valid_fraction = float(np.mean(np.isfinite(dm.depth)))
    _print_summary(kind="depthmap", valid_fraction=f"{valid_fraction:.6g}", path=args.out)
    return 0


def cmd_psf(args) -> int:
    spec, geom, grid = _rig_from_args(args)
    shape = camera_shape(spec, geom)
    layer_z = args.layer_z if args.layer_z is not None else grid.count // 2
    scene = Scene(layers=[(layer_z, np.ones(shape))])
    pattern = render_frame(scene, 0, spec, geom, grid)
    mask = base_camera_pattern(spec, geom)
    if args.threshold:
        mask = threshold_mask(mask)
    probe_x = args.probe_x if args.probe_x is not None else (3 * shape[1]) // 4
    probe_y = args.probe_y if args.probe_y is not None else shape[0] // 2
    curve = axial_psf(pattern, mask, spec, geom, grid, (probe_x, probe_y))
    width = fwhm(curve)
    if args.out:
        with open(args.out, "w") as fh:
            for zv, rv in zip(curve.z, curve.response):
                fh.write(f"{float(zv)!r} {float(rv)!r}\n")
    _print_summary(kind="psf", fwhm_z=f"{width:.6g}",
                   fwhm_sections=f"{width / grid.z_step:.6g}",
                   probe_x=probe_x, probe_y=probe_y,
                   path=args.out if args.out else "-")
    return 0


def cmd_bench(args) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    report = bench_reconstruction(
        width=args.width, height=args.height, n=args.shifts,
        sections=args.sections, threads=threads, seed=args.seed,
    )
    print(report.summary())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspi",
        description="Virtual volumetric confocal imaging from one lateral slit-pattern scan.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a synthetic acquisition stack")
    _add_rig_args(p)
    p.add_argument("--scene", choices=("uniform", "bands", "tilted"), default="uniform")
    p.add_argument("--layer-z", default="0", help="comma-separated layer sections (uniform/bands)")
    p.add_argument("--slope", type=float, default=0.0, help="sections per pixel (tilted)")
    p.add_argument("--z-start", type=int, default=0, help="section of column 0 (tilted)")
    p.add_argument("--haze", type=float, default=0.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--poisson-scale", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("calibrate", help="fit a mask model from 3 reference planes")
    p.add_argument("--refs", required=True, help="stack with planes (x1z1, xNz1, x1zK)")
    p.add_argument("--anchor-x", type=int, required=True, help="scan index N of the second plane")
    p.add_argument("--anchor-z", type=int, required=True, help="section index K of the third plane")
    p.add_argument("--normalize", action="store_true", help="peak-normalize references before fitting")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("reconstruct", help="recover the confocal volume from an acquisition")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", help="mask-model file; omit to synthesize masks from geometry")
    p.add_argument("--threshold", action="store_true",
                   help="reduce the geometric mask to 1-pixel slits first")
    p.add_argument("--floor", type=float, default=None, help="coverage floor (default: derived)")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("depthmap", help="extract a depth map from a volume")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--confidence-out", default=None)
    p.add_argument("--min-confidence", type=float, default=None)
    p.add_argument("--refine", action="store_true", help="3-point parabolic sub-section refinement")
    p.add_argument("--pgm", default=None, help="also export a 16-bit PGM preview")
    p.set_defaults(func=cmd_depthmap)

    p = sub.add_parser("psf", help="axial response curve at a probe pixel")
    _add_rig_args(p)
    p.add_argument("--layer-z", type=int, default=None,
                   help="section of the probed uniform layer (default: mid grid)")
    p.add_argument("--probe-x", type=int, default=None)
    p.add_argument("--probe-y", type=int, default=None)
    p.add_argument("--threshold", action="store_true")
    p.add_argument("--out", default=None, help="write the curve as two-column text")
    p.set_defaults(func=cmd_psf)

    p = sub.add_parser("bench", help="reconstruction throughput benchmark")
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--height", type=int, default=2048)
    p.add_argument("--shifts", type=int, default=30)
    p.add_argument("--sections", type=int, default=100)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def run_cli(argv=None) -> int:
    """Parse and execute; returns the process exit status (0/1/2)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else 0
    try:
        return args.func(args) or 0
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())
