"""Virtual volumetric confocal imaging via axially-shifted slit-pattern illumination.

A slit-array pattern projected at a tilt slides laterally with depth, so a
single lateral scan encodes every depth section at once. This package
provides the synthetic forward model, mask calibration, the mask-multiply
volume reconstruction, axial-response / depth-map analysis, a binary stack
file format, and a benchmark harness, plus the `aspi` command-line tool.
"""

__version__ = "0.1.0"

from .errors import (
    AspiError,
    CoverageError,
    DegenerateInputError,
    EmptyMaskError,
    FwhmRangeError,
    StackFormatError,
)
from .imaging_model import (
    GeometryConfig,
    PatternSpec,
    ZGrid,
    axial_range,
    is_axially_ambiguous,
    magnify,
    make_slit_pattern,
    sample_row,
    shift_image,
    synthesize_mask,
    threshold_mask,
    validate_frame,
)
from .calibration import (
    AffineMap,
    MaskModel,
    estimate_translation,
    fit_mask_model,
    predict_mask,
    warp_frame,
)
from .forward_sim import (
    AcquisitionSet,
    NoiseSpec,
    Scene,
    acquire_stack,
    base_camera_pattern,
    camera_shape,
    make_tilted_plane_scene,
    render_frame,
    tilted_plane_sections,
)
from .reconstructor import (
    SENTINEL,
    CoverageReport,
    GeometryMasks,
    ModelMasks,
    PrecomputedMasks,
    VolumeStack,
    coverage_report,
    default_floor,
    reconstruct_section,
    reconstruct_volume,
)
from .volume_analysis import (
    AxialCurve,
    DepthMap,
    axial_psf,
    estimate_background,
    extract_depth_map,
    fwhm,
    predicted_fwhm_sections,
)
from .stack_io import read_stack, write_pgm, write_stack
from .bench import BenchReport, bench_reconstruction
from .cli import run_cli

__all__ = [
    "AspiError", "CoverageError", "DegenerateInputError", "EmptyMaskError",
    "FwhmRangeError", "StackFormatError",
    "PatternSpec", "GeometryConfig", "ZGrid",
    "validate_frame", "sample_row", "shift_image", "magnify",
    "make_slit_pattern", "axial_range", "is_axially_ambiguous",
    "synthesize_mask", "threshold_mask",
    "AffineMap", "MaskModel", "estimate_translation", "fit_mask_model",
    "predict_mask", "warp_frame",
    "NoiseSpec", "Scene", "AcquisitionSet", "camera_shape",
    "base_camera_pattern", "render_frame", "acquire_stack",
    "make_tilted_plane_scene", "tilted_plane_sections",
    "SENTINEL", "VolumeStack", "CoverageReport", "GeometryMasks",
    "ModelMasks", "PrecomputedMasks", "default_floor",
    "reconstruct_section", "reconstruct_volume", "coverage_report",
    "AxialCurve", "DepthMap", "axial_psf", "fwhm", "predicted_fwhm_sections",
    "estimate_background", "extract_depth_map",
    "read_stack", "write_stack", "write_pgm",
    "BenchReport", "bench_reconstruction",
    "run_cli",
]
