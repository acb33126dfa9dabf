"""Virtual-confocal volume reconstruction from one lateral pattern scan.

Every depth section is recovered from the same acquisition by pointwise
multiplication with that section's mask bank:

    I_z(p) = sum_i O_i(p) * M_iz(p) / sum_i M_iz(p)

The numerator keeps only light that was modulated by the slit pattern at
depth z; the denominator normalizes the non-uniform illumination dose.
Pixels whose denominator falls below a floor were never usefully
illuminated at that depth; they carry the sentinel value -1.0 and are
excluded from downstream statistics. (With noisy inputs the quotient itself
can dip slightly below zero; the sentinel remains the exact value -1.0.)

Accumulation runs in float64 in fixed order i = 0..n-1 per pixel, so
results are bit-identical no matter how sections or row bands are
scheduled. Masks may be supplied per section as materialized arrays or
regenerated on the fly from geometry or from a calibrated model; the two
paths produce identical output. Masks that are constant along y may be
passed in compressed (n, 1, W) form, which broadcasts to the same values.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .calibration import MaskModel, predict_mask
from .forward_sim import base_camera_pattern
from .imaging_model import (
    GeometryConfig,
    PatternSpec,
    ZGrid,
    is_axially_ambiguous,
    synthesize_mask,
    threshold_mask,
)

__all__ = [
    "SENTINEL",
    "VolumeStack",
    "CoverageReport",
    "GeometryMasks",
    "ModelMasks",
    "PrecomputedMasks",
    "default_floor",
    "reconstruct_section",
    "reconstruct_volume",
    "coverage_report",
]

SENTINEL = -1.0

# Row-band height for the blocked inner loop; keeps the float64 accumulator
# resident in cache without changing per-pixel accumulation order.
_BLOCK_ROWS = 64


def default_floor(base_mask, n: int) -> float:
    """Denominator floor: 1e-3 of the base mask peak times the shift count."""
    return 1e-3 * float(np.max(base_mask)) * n


@dataclass(frozen=True)
class VolumeStack:
    """Reconstructed confocal sections bound to their depth grid."""

    sections: np.ndarray  # (K, H, W) float64; SENTINEL where coverage failed
    grid: ZGrid
    coverage_floor_used: float
    masks_source: str = ""

    def __post_init__(self):
        if self.sections.ndim != 3 or self.sections.shape[0] != self.grid.count:
            raise ValueError(
                f"sections shape {self.sections.shape} inconsistent with grid count {self.grid.count}"
            )


@dataclass(frozen=True)
class CoverageReport:
    """Per-section illumination denominators plus summary statistics."""

    coverage: np.ndarray  # (K, H, W)
    floor: float
    min_coverage: float
    mean_coverage: float
    sentinel_fraction: float
    ambiguous: bool | None = None

    def summary(self) -> str:
        amb = "n/a" if self.ambiguous is None else str(self.ambiguous).lower()
        return (
            f"min_coverage={self.min_coverage:.6g} mean_coverage={self.mean_coverage:.6g} "
            f"sentinel_fraction={self.sentinel_fraction:.6g} ambiguous={amb}"
        )


class GeometryMasks:
    """Mask provider that synthesizes each section's bank from geometry.

    The base camera-plane pattern is resampled once; per-(step, section)
    masks are pure x translations of it. Row-constant bases are compressed
    to a single row, which broadcasts to identical values. Set
    threshold=True to reduce the base to 1-pixel slits first.
    """

    def __init__(self, spec: PatternSpec, geom: GeometryConfig, grid: ZGrid,
                 base=None, threshold: bool = False):
        self.spec = spec
        self.geom = geom
        self.grid = grid
        base = base_camera_pattern(spec, geom) if base is None else np.asarray(base, dtype=np.float64)
        if threshold:
            base = threshold_mask(base)
        self.base = base
        if base.shape[0] > 1 and np.array_equal(base, np.broadcast_to(base[:1], base.shape)):
            self._rows = base[:1].copy()
        else:
            self._rows = base
        self._step_px = spec.shift_step * geom.magnification
        self.shift_count = spec.num_shifts_n
        self._thresholded = threshold

    @property
    def ambiguous(self) -> bool:
        return is_axially_ambiguous(self.spec, self.geom, self.grid)

    def section_masks(self, z_index: int) -> np.ndarray:
        out = np.empty((self.shift_count,) + self._rows.shape, dtype=np.float64)
        for i in range(self.shift_count):
            out[i] = synthesize_mask(self._rows, i * self._step_px, z_index, self.geom, self.grid)
        return out

    def describe(self) -> str:
        kind = "thresholded" if self._thresholded else "grayscale"
        return f"geometry({kind})"


class ModelMasks:
    """Mask provider backed by a calibrated mask model."""

    def __init__(self, model: MaskModel, grid: ZGrid, shift_count: int):
        self.model = model
        self.grid = grid
        self.shift_count = shift_count
        self.base = model.base_mask
        self.ambiguous = None

    def section_masks(self, z_index: int) -> np.ndarray:
        out = np.empty((self.shift_count,) + self.base.shape, dtype=np.float64)
        for i in range(self.shift_count):
            out[i] = predict_mask(self.model, i, z_index)
        return out

    def describe(self) -> str:
        return "calibrated-model"


class PrecomputedMasks:
    """Mask provider over already-materialized per-section banks."""

    def __init__(self, banks, grid: ZGrid):
        self.banks = [np.asarray(b, dtype=np.float64) for b in banks]
        if len(self.banks) != grid.count:
            raise ValueError(f"{len(self.banks)} mask banks for a {grid.count}-section grid")
        self.grid = grid
        self.shift_count = self.banks[0].shape[0]
        self.base = self.banks[0][0]
        self.ambiguous = None

    def section_masks(self, z_index: int) -> np.ndarray:
        return self.banks[z_index]

    def describe(self) -> str:
        return "precomputed"


def _as_frames(acq) -> np.ndarray:
    frames = getattr(acq, "frames", acq)
    frames = np.asarray(frames)
    if frames.ndim != 3:
        raise ValueError(f"expected (n, H, W) frames, got shape {frames.shape}")
    if frames.shape[0] == 0:
        raise ValueError("empty frame list")
    return frames


def _as_masks(masks, n: int, h: int, w: int) -> np.ndarray:
    m = np.asarray(masks, dtype=np.float64)
    if m.ndim != 3:
        raise ValueError(f"expected (n, H, W) masks, got shape {m.shape}")
    if m.shape[0] != n:
        raise ValueError(f"mask count {m.shape[0]} != frame count {n}")
    if m.shape[2] != w or m.shape[1] not in (1, h):
        raise ValueError(f"mask shape {m.shape[1:]} incompatible with frames ({h}, {w})")
    return m


def reconstruct_section(acq, masks, floor: float) -> tuple[np.ndarray, np.ndarray]:
    """Recover one confocal section; returns (section, coverage).

    acq is an AcquisitionSet or a raw (n, H, W) array; masks is the (n, H, W)
    or broadcastable (n, 1, W) bank for the target depth. Pixels whose
    coverage sum falls below `floor` carry SENTINEL in the section.
    """
    frames = _as_frames(acq)
    n, h, w = frames.shape
    m = _as_masks(masks, n, h, w)
    if not (floor > 0):
        raise ValueError(f"floor must be > 0, got {floor}")

    num = np.zeros((h, w), dtype=np.float64)
    den = np.zeros(m.shape[1:], dtype=np.float64)
    row_masks = m.shape[1] == 1
    prod = np.empty((min(_BLOCK_ROWS, h), w), dtype=np.float64)
    for r0 in range(0, h, _BLOCK_ROWS):
        r1 = min(r0 + _BLOCK_ROWS, h)
        pb = prod[: r1 - r0]
        nb = num[r0:r1]
        for i in range(n):
            mi = m[i] if row_masks else m[i, r0:r1]
            np.multiply(frames[i, r0:r1], mi, out=pb)
            nb += pb
    for i in range(n):
        den += m[i]

    coverage = np.ascontiguousarray(np.broadcast_to(den, (h, w)))
    covered = coverage >= floor
    section = np.full((h, w), SENTINEL, dtype=np.float64)
    np.divide(num, coverage, out=section, where=covered)
    return section, coverage


def _resolve_provider(acq, masks, grid: ZGrid):
    if isinstance(masks, MaskModel):
        return ModelMasks(masks, grid, acq.spec.num_shifts_n)
    if hasattr(masks, "section_masks"):
        return masks
    return PrecomputedMasks(masks, grid)


def reconstruct_volume(acq, masks, grid: ZGrid | None = None,
                       floor: float | None = None, threads: int = 1) -> VolumeStack:
    """Recover every section of the grid from one acquisition.

    masks may be a MaskModel, a mask provider (GeometryMasks / ModelMasks /
    PrecomputedMasks), or a sequence of per-section banks. Sections are
    independent; with threads > 1 they are computed concurrently with
    bit-identical results to the serial order.
    """
    if grid is None:
        grid = getattr(masks, "grid", None) or acq.grid
    provider = _resolve_provider(acq, masks, grid)
    if floor is None:
        floor = default_floor(provider.base, provider.shift_count)
    frames = _as_frames(acq)
    k = grid.count
    h, w = frames.shape[1:]
    sections = np.empty((k, h, w), dtype=np.float64)

    def work(j: int):
        section, _ = reconstruct_section(frames, provider.section_masks(j), floor)
        sections[j] = section

    if threads > 1 and k > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(k)))
    else:
        for j in range(k):
            work(j)
    return VolumeStack(
        sections=sections,
        grid=grid,
        coverage_floor_used=float(floor),
        masks_source=provider.describe(),
    )


def coverage_report(masks, floor: float | None = None, grid: ZGrid | None = None) -> CoverageReport:
    """Exact per-pixel illumination denominators for every section.

    masks is a provider or a sequence of per-section banks. The ambiguity
    flag is carried over from the provider when it knows its geometry
    (True when the grid spans more shear than one slit period encodes).
    """
    if hasattr(masks, "section_masks"):
        provider = masks
        grid = provider.grid
    else:
        banks = list(masks)
        if not banks:
            raise ValueError("empty mask list")
        if grid is None:
            grid = ZGrid(z0=0.0, z_step=1.0, count=len(banks))
        provider = PrecomputedMasks(banks, grid)
    if floor is None:
        floor = default_floor(provider.base, provider.shift_count)

    per_section = []
    for j in range(grid.count):
        bank = provider.section_masks(j)
        den = np.zeros(bank.shape[1:], dtype=np.float64)
        for i in range(bank.shape[0]):
            den += bank[i]
        per_section.append(den)
    # row-compressed providers yield (1, W) planes; the statistics are
    # identical to the broadcast (H, W) form
    coverage = np.stack(per_section)
    return CoverageReport(
        coverage=coverage,
        floor=float(floor),
        min_coverage=float(coverage.min()),
        mean_coverage=float(coverage.mean()),
        sentinel_fraction=float(np.mean(coverage < floor)),
        ambiguous=getattr(provider, "ambiguous", None),
    )
