"""Slit-array pattern geometry and virtual-mask synthesis.

A periodic slit-array pattern is projected at a tilt angle with respect to
the detection axis, so the pattern seen by the camera slides laterally as a
function of depth. Everything downstream (simulation, calibration, and the
confocal reconstruction) is built on the two primitives in this module:
generating the pattern at a given lateral scan position, and translating a
mask image by the sub-pixel amount that corresponds to a given (scan, depth)
pair.

Conventions
-----------
* Images ("frames") are 2D float64 arrays indexed [row, column] = [y, x].
* Increasing depth section shifts the mask toward +x by default; the sign is
  configurable through ``GeometryConfig.shift_sign``.
* Content shifted in from outside the frame is zero (a pattern leaving the
  field of view goes dark, it does not wrap).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMaskError

__all__ = [
    "PatternSpec",
    "GeometryConfig",
    "ZGrid",
    "validate_frame",
    "sample_row",
    "shift_image",
    "magnify",
    "make_slit_pattern",
    "axial_range",
    "synthesize_mask",
    "threshold_mask",
    "is_axially_ambiguous",
]


def validate_frame(frame, name: str = "frame") -> np.ndarray:
    """Coerce to a float64 2D intensity image and check basic sanity.

    Raises ValueError if the array is not 2D with positive dimensions, or
    contains negative or non-finite values.
    """
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be a 2D image, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    if a.min() < 0:
        raise ValueError(f"{name} contains negative intensities")
    return a


@dataclass(frozen=True)
class PatternSpec:
    """Slit-array geometry on the projector.

    period_d is the column spacing between adjacent slits, linewidth_w the
    width of each slit, both in projector pixels. The lateral scan moves the
    pattern by shift_step pixels per step for num_shifts_n steps; the scan
    never exceeds one period (equality means the scan tiles the period).
    """

    proj_width: int
    proj_height: int
    period_d: int
    linewidth_w: int
    shift_step: int = 1
    num_shifts_n: int = 1

    def __post_init__(self):
        if self.proj_width < 1 or self.proj_height < 1:
            raise ValueError("projector dimensions must be >= 1")
        if not (1 <= self.linewidth_w <= self.period_d):
            raise ValueError(
                f"linewidth_w must satisfy 1 <= w <= period_d, got w={self.linewidth_w} d={self.period_d}"
            )
        if self.shift_step < 1 or self.num_shifts_n < 1:
            raise ValueError("shift_step and num_shifts_n must be >= 1")
        if self.num_shifts_n * self.shift_step > self.period_d:
            raise ValueError(
                f"scan span n*step = {self.num_shifts_n * self.shift_step} exceeds one period ({self.period_d})"
            )


@dataclass(frozen=True)
class GeometryConfig:
    """Projection tilt and the pixel-scale factors that derive the shear.

    tilt_theta is the angle between projection and detection paths, in
    radians. z_step and camera_pixel_pitch share one length unit;
    magnification converts projector pixels to camera pixels. shift_sign
    selects the direction the mask moves for increasing depth (+1 = +x).
    """

    tilt_theta: float
    z_step: float
    camera_pixel_pitch: float = 1.0
    magnification: float = 1.0
    shift_sign: int = 1

    def __post_init__(self):
        if not (0.0 < self.tilt_theta < math.pi / 2):
            raise ValueError(f"tilt_theta must lie in (0, pi/2), got {self.tilt_theta}")
        if self.z_step <= 0 or self.camera_pixel_pitch <= 0 or self.magnification <= 0:
            raise ValueError("z_step, camera_pixel_pitch and magnification must be > 0")
        if self.shift_sign not in (1, -1):
            raise ValueError("shift_sign must be +1 or -1")
        s = self.shear_px_per_section
        if not (math.isfinite(s) and s > 0):
            raise ValueError(f"derived shear must be finite and > 0, got {s}")

    @property
    def shear_px_per_section(self) -> float:
        """Mask displacement per z section, in camera pixels (always positive)."""
        return self.z_step * math.tan(self.tilt_theta) / self.camera_pixel_pitch

    @property
    def signed_shear(self) -> float:
        return self.shift_sign * self.shear_px_per_section


@dataclass(frozen=True)
class ZGrid:
    """Uniform depth sampling: section j sits at z0 + j*z_step, 0 <= j < count."""

    z0: float
    z_step: float
    count: int

    def __post_init__(self):
        if self.z_step <= 0:
            raise ValueError("z_step must be > 0")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    def z_values(self) -> np.ndarray:
        return self.z0 + self.z_step * np.arange(self.count, dtype=np.float64)

    def z_of(self, index: int) -> float:
        return self.z0 + self.z_step * index


def sample_row(row: np.ndarray, positions) -> np.ndarray:
    """Linearly interpolate a 1D signal at real-valued positions, zero outside.

    This is the single interpolation kernel used everywhere a frame is
    translated or probed, so that shifted masks and point probes of the same
    mask agree bit-for-bit at integer positions and to rounding at
    fractional ones.
    """
    row = np.asarray(row, dtype=np.float64)
    pos = np.asarray(positions, dtype=np.float64)
    n = row.shape[-1]
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = i0 + 1
    ok0 = (i0 >= 0) & (i0 < n)
    ok1 = (i1 >= 0) & (i1 < n)
    v0 = np.where(ok0, row[..., np.clip(i0, 0, n - 1)], 0.0)
    v1 = np.where(ok1, row[..., np.clip(i1, 0, n - 1)], 0.0)
    return (1.0 - frac) * v0 + frac * v1


def _shift_along_axis(a: np.ndarray, shift: float, axis: int) -> np.ndarray:
    """Translate a 2D array by `shift` along one axis with linear interpolation."""
    if shift == 0.0:
        return a.copy()
    n = a.shape[axis]
    pos = np.arange(n, dtype=np.float64) - shift
    i0 = np.floor(pos).astype(np.int64)
    frac = pos - i0
    i1 = i0 + 1
    ok0 = (i0 >= 0) & (i0 < n)
    ok1 = (i1 >= 0) & (i1 < n)
    v0 = np.take(a, np.clip(i0, 0, n - 1), axis=axis)
    v1 = np.take(a, np.clip(i1, 0, n - 1), axis=axis)
    if axis == 1:
        w0 = np.where(ok0, 1.0 - frac, 0.0)[None, :]
        w1 = np.where(ok1, frac, 0.0)[None, :]
    else:
        w0 = np.where(ok0, 1.0 - frac, 0.0)[:, None]
        w1 = np.where(ok1, frac, 0.0)[:, None]
    return w0 * v0 + w1 * v1


def shift_image(frame, dx: float, dy: float = 0.0) -> np.ndarray:
    """Translate an image by (dx, dy) with separable linear interpolation.

    out(y, x) = in(y - dy, x - dx); samples falling outside the input are
    zero. Integer shifts reproduce an exact column/row displacement with
    zero fill, with no interpolation error.
    """
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {a.shape}")
    out = _shift_along_axis(a, float(dx), axis=1)
    if dy != 0.0:
        out = _shift_along_axis(out, float(dy), axis=0)
    return out


def magnify(frame, factor: float) -> np.ndarray:
    """Rescale an image by a scalar factor with bilinear sampling.

    Output shape is round(shape * factor); border samples clamp to the edge
    pixel. factor == 1 returns an exact copy.
    """
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {a.shape}")
    if factor <= 0:
        raise ValueError("magnification factor must be > 0")
    if factor == 1.0:
        return a.copy()
    h_out = max(1, int(round(a.shape[0] * factor)))
    w_out = max(1, int(round(a.shape[1] * factor)))
    ys = np.arange(h_out, dtype=np.float64) / factor
    xs = np.arange(w_out, dtype=np.float64) / factor
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, a.shape[0] - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, a.shape[1] - 1)
    y1 = np.clip(y0 + 1, 0, a.shape[0] - 1)
    x1 = np.clip(x0 + 1, 0, a.shape[1] - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = (1 - fx) * a[np.ix_(y0, x0)] + fx * a[np.ix_(y0, x1)]
    bot = (1 - fx) * a[np.ix_(y1, x0)] + fx * a[np.ix_(y1, x1)]
    return (1 - fy) * top + fy * bot


def make_slit_pattern(spec: PatternSpec, shift_index: int) -> np.ndarray:
    """Binary slit-array pattern at the given lateral scan position.

    Column c is lit iff ((c - shift_index*shift_step) mod period_d) is less
    than linewidth_w; all rows are identical.
    """
    if not (0 <= shift_index < spec.num_shifts_n):
        raise ValueError(
            f"shift_index {shift_index} out of range [0, {spec.num_shifts_n})"
        )
    cols = np.arange(spec.proj_width, dtype=np.int64)
    on = ((cols - shift_index * spec.shift_step) % spec.period_d) < spec.linewidth_w
    row = on.astype(np.float64)
    return np.broadcast_to(row, (spec.proj_height, spec.proj_width)).copy()


def camera_period_px(spec: PatternSpec, geom: GeometryConfig) -> float:
    """Slit period as seen on the camera, in camera pixels."""
    return spec.period_d * geom.magnification


def axial_range(spec: PatternSpec, geom: GeometryConfig) -> float:
    """Depth span over which the mask shift stays within one slit period.

    The period, expressed as a camera-plane length, divided by tan(tilt).
    Beyond this range a section is indistinguishable from one a full period
    of shear away.
    """
    lateral_period = camera_period_px(spec, geom) * geom.camera_pixel_pitch
    return lateral_period / math.tan(geom.tilt_theta)


def is_axially_ambiguous(spec: PatternSpec, geom: GeometryConfig, grid: ZGrid) -> bool:
    """True when the grid spans more shear than one slit period can encode."""
    return grid.count * geom.shear_px_per_section > camera_period_px(spec, geom)


def synthesize_mask(
    base,
    x_shift: float,
    z_index: int,
    geom: GeometryConfig,
    grid: ZGrid,
) -> np.ndarray:
    """Virtual confocal mask at lateral shift x_shift and depth section z_index.

    The base mask is taken to live at section 0 of the grid; the output is
    the base translated along x by x_shift + z_index * shear (signed).
    Sub-pixel amounts use linear interpolation and content entering from
    outside the frame is zero.
    """
    a = np.asarray(base, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"base must be 2D, got shape {a.shape}")
    if not (0 <= z_index < grid.count):
        raise ValueError(f"z_index {z_index} out of range [0, {grid.count})")
    total = float(x_shift) + z_index * geom.signed_shear
    return shift_image(a, total)


def threshold_mask(mask, background_frac: float = 0.1) -> np.ndarray:
    """Reduce each slit of a mask to its single brightest column.

    Slits are located as connected runs of columns whose mean intensity
    exceeds background_frac times the peak of the column profile; within
    each run only the column of maximum mean intensity is kept (ties go to
    the lower column index), and that column is set to 1 over the full
    frame height. Idempotent on its own output.
    """
    a = validate_frame(mask, "mask")
    profile = a.mean(axis=0)
    peak = profile.max()
    if peak <= 0.0:
        raise EmptyMaskError("mask has no column with positive energy")
    above = profile > background_frac * peak
    out = np.zeros_like(a)
    w = a.shape[1]
    c = 0
    while c < w:
        if not above[c]:
            c += 1
            continue
        run_start = c
        while c < w and above[c]:
            c += 1
        best = run_start + int(np.argmax(profile[run_start:c]))
        out[:, best] = 1.0
    return out
