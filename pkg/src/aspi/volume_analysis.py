"""Axial response curves, FWHM measurement, and depth-map extraction.

The axial point spread function of the tilted-pattern rig at a pixel is the
cross-correlation between the imaged pattern and the virtual mask as the
mask slides with depth. For a slit of width w and a shear of s pixels per
section, that is the autocorrelation of a rectangle: a triangle whose full
width at half maximum spans w / s sections. `axial_psf` evaluates the sum
directly (no FFT), with the same interpolation kernel and the same float64
i-ascending accumulation as the reconstruction, so the curve matches a
reconstructed single-layer response to rounding error after peak
normalization.

Depth maps take the per-pixel argmax of the reconstructed sections (ties to
the lower section) with an optional 3-point parabolic refinement between
sections. The depth sentinel is NaN: depth values in z units may
legitimately be negative, so the volume's -1.0 sentinel cannot double here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, DegenerateInputError, FwhmRangeError
from .imaging_model import GeometryConfig, PatternSpec, ZGrid, sample_row
from .reconstructor import SENTINEL, VolumeStack, default_floor

__all__ = [
    "AxialCurve",
    "DepthMap",
    "axial_psf",
    "fwhm",
    "predicted_fwhm_sections",
    "estimate_background",
    "extract_depth_map",
]


@dataclass(frozen=True)
class AxialCurve:
    """Response versus depth, optionally normalized to peak 1."""

    z: np.ndarray
    response: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        r = np.asarray(self.response, dtype=np.float64)
        if z.ndim != 1 or z.shape != r.shape:
            raise ValueError("z and response must be 1D arrays of equal length")
        if z.size > 1 and not np.all(np.diff(z) > 0):
            raise ValueError("z values must be strictly increasing")
        if r.min() < 0:
            raise ValueError("responses must be >= 0")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "response", r)


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel recovered depth (NaN where undetermined) and peak intensity."""

    depth: np.ndarray
    confidence: np.ndarray
    grid: ZGrid


def predicted_fwhm_sections(linewidth_px: float, shear_px_per_section: float) -> float:
    """Rectangle-autocorrelation FWHM, in sections: linewidth / shear."""
    if linewidth_px <= 0 or shear_px_per_section <= 0:
        raise ValueError("linewidth and shear must be > 0")
    return linewidth_px / shear_px_per_section


def axial_psf(
    base_pattern,
    base_mask,
    spec: PatternSpec,
    geom: GeometryConfig,
    grid: ZGrid,
    probe: tuple[int, int],
    floor: float | None = None,
) -> AxialCurve:
    """Axial response at a probe pixel by direct summation over the scan.

    base_pattern is the camera image of the pattern on the object
    (the first acquired frame); base_mask is the virtual mask at section 0.
    For each section the mask is slid by the shear and correlated with the
    pattern over all scan steps at the probe pixel only. The probe must be
    illuminated above the coverage floor at every section. The curve is
    normalized to peak 1.
    """
    o = np.asarray(base_pattern, dtype=np.float64)
    m = np.asarray(base_mask, dtype=np.float64)
    if o.ndim != 2 or m.ndim != 2:
        raise ValueError("base_pattern and base_mask must be 2D")
    px, py = probe
    if not (0 <= py < o.shape[0] and 0 <= px < o.shape[1]):
        raise ValueError(f"probe {probe} outside frame {o.shape[::-1]}")
    if floor is None:
        floor = default_floor(m, spec.num_shifts_n)

    o_row = o[py]
    m_row = m[py % m.shape[0]]
    step_px = spec.shift_step * geom.magnification
    shear = geom.signed_shear
    scan = np.arange(spec.num_shifts_n, dtype=np.float64) * step_px

    o_vals = sample_row(o_row, px - scan)
    response = np.empty(grid.count, dtype=np.float64)
    for j in range(grid.count):
        m_vals = sample_row(m_row, px - scan - j * shear)
        den = 0.0
        acc = 0.0
        for i in range(spec.num_shifts_n):
            den += m_vals[i]
            acc += o_vals[i] * m_vals[i]
        if den < floor:
            raise CoverageError(
                f"probe {probe} below coverage floor at section {j} ({den:.3g} < {floor:.3g})"
            )
        response[j] = acc
    peak = response.max()
    if peak <= 0:
        raise DegenerateInputError("probe response is identically zero")
    return AxialCurve(z=grid.z_values(), response=response / peak, normalized=True)


def fwhm(curve: AxialCurve) -> float:
    """Full width at half maximum, crossings located by linear interpolation.

    The half level is half the global maximum. If the maximum is a plateau,
    the outermost crossings are used. Raises FwhmRangeError when either
    flank never falls below the half level inside the sampled range.
    """
    r = curve.response
    z = curve.z
    if r.size < 3:
        raise FwhmRangeError("curve too short to bracket half-maximum crossings")
    peak = float(r.max())
    if peak <= 0:
        raise ValueError("curve has no positive response")
    half = peak / 2.0
    peak_idx = np.flatnonzero(r == peak)
    left_peak, right_peak = int(peak_idx[0]), int(peak_idx[-1])

    i = left_peak
    while i > 0 and r[i - 1] >= half:
        i -= 1
    if i == 0:
        raise FwhmRangeError("left half-maximum crossing outside sampled range")
    z_left = z[i - 1] + (half - r[i - 1]) / (r[i] - r[i - 1]) * (z[i] - z[i - 1])

    i = right_peak
    last = r.size - 1
    while i < last and r[i + 1] >= half:
        i += 1
    if i == last:
        raise FwhmRangeError("right half-maximum crossing outside sampled range")
    z_right = z[i] + (r[i] - half) / (r[i] - r[i + 1]) * (z[i + 1] - z[i])
    return float(z_right - z_left)


def estimate_background(sections: np.ndarray) -> float:
    """Mean of the lowest-decile non-sentinel intensities of a volume."""
    vals = sections[sections != SENTINEL]
    if vals.size == 0:
        return 0.0
    q10 = np.percentile(vals, 10.0)
    low = vals[vals <= q10]
    return float(low.mean()) if low.size else 0.0


def extract_depth_map(
    volume: VolumeStack,
    min_confidence: float | None = None,
    refine: bool = False,
) -> DepthMap:
    """Per-pixel depth of the strongest section response.

    Sentinel-valued entries are skipped; argmax ties break toward lower z.
    Pixels whose peak falls under min_confidence (default: 5x the estimated
    background level) get a NaN depth but keep their measured peak as
    confidence. With refine=True, interior peaks with valid neighbors are
    sharpened by a 3-point parabolic fit across adjacent sections.
    """
    data = volume.sections
    grid = volume.grid
    k = data.shape[0]
    valid = data != SENTINEL
    ranked = np.where(valid, data, -np.inf)
    jbest = np.argmax(ranked, axis=0)
    peak = np.take_along_axis(ranked, jbest[None], axis=0)[0]
    any_valid = valid.any(axis=0)

    if min_confidence is None:
        min_confidence = 5.0 * estimate_background(data)
    keep = any_valid & (peak >= min_confidence)

    depth_sections = jbest.astype(np.float64)
    if refine and k >= 3:
        jm = np.clip(jbest - 1, 0, k - 1)
        jp = np.clip(jbest + 1, 0, k - 1)
        rm = np.take_along_axis(data, jm[None], axis=0)[0]
        rp = np.take_along_axis(data, jp[None], axis=0)[0]
        vm = np.take_along_axis(valid, jm[None], axis=0)[0]
        vp = np.take_along_axis(valid, jp[None], axis=0)[0]
        r0 = np.take_along_axis(data, jbest[None], axis=0)[0]
        interior = (jbest > 0) & (jbest < k - 1) & vm & vp
        denom = rm - 2.0 * r0 + rp
        concave = denom < 0
        safe = np.where(concave, denom, -1.0)
        delta = np.where(interior & concave, 0.5 * (rm - rp) / safe, 0.0)
        depth_sections = depth_sections + np.clip(delta, -0.5, 0.5)

    depth = np.where(keep, grid.z0 + depth_sections * grid.z_step, np.nan)
    confidence = np.where(any_valid, peak, 0.0)
    return DepthMap(depth=depth, confidence=confidence, grid=grid)
