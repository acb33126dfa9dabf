"""Mask calibration from three reference frames.

The lateral scan and the depth shear both move the projected pattern by a
fixed translation per step, so the full bank of virtual confocal masks can
be regenerated from a single base mask plus two displacement estimates: one
from a pair of masks at different scan positions, one from a pair at
different depths. The estimates are obtained by normalized cross-correlation
with parabolic sub-pixel refinement.

The affine maps are fitted as pure translations. Two frames of a periodic
pattern expose no other observable degrees of freedom, and the translation
is itself only determined modulo the slit period: anchor pairs MUST be
displaced by less than half a period (in camera pixels) or the estimate
aliases onto the wrong branch. Larger spans have to be chained through
intermediate pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import DegenerateInputError
from .imaging_model import shift_image

__all__ = [
    "AffineMap",
    "MaskModel",
    "estimate_translation",
    "fit_mask_model",
    "predict_mask",
    "warp_frame",
]

# Largest frame side still correlated by direct spatial summation; bigger
# frames go through the FFT. Both paths agree to well under 1e-6.
SPATIAL_LIMIT = 256

# Anchor displacements smaller than this are indistinguishable from "no
# displacement" and rejected as degenerate.
_MIN_ANCHOR_DISP = 1e-9


@dataclass(frozen=True)
class AffineMap:
    """Six-coefficient plane map (x, y) -> (a*x + b*y + c, d*x + e*y + f).

    The fitting code only ever produces pure translations, but the type
    keeps the full generality so richer fits can slot in later.
    """

    a: float
    b: float
    c: float
    d: float
    e: float
    f: float

    def __post_init__(self):
        if abs(self.det) < 1e-12:
            raise ValueError(f"affine map is singular (det = {self.det})")

    @property
    def det(self) -> float:
        return self.a * self.e - self.b * self.d

    @property
    def is_translation(self) -> bool:
        return (self.a, self.b, self.d, self.e) == (1.0, 0.0, 0.0, 1.0)

    @classmethod
    def identity(cls) -> "AffineMap":
        return cls(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineMap":
        return cls(1.0, 0.0, float(dx), 0.0, 1.0, float(dy))

    def apply(self, x, y):
        """Map point coordinates; accepts scalars or arrays."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return self.a * x + self.b * y + self.c, self.d * x + self.e * y + self.f

    def compose(self, other: "AffineMap") -> "AffineMap":
        """Map applying `other` first, then self."""
        return AffineMap(
            self.a * other.a + self.b * other.d,
            self.a * other.b + self.b * other.e,
            self.a * other.c + self.b * other.f + self.c,
            self.d * other.a + self.e * other.d,
            self.d * other.b + self.e * other.e,
            self.d * other.c + self.e * other.f + self.f,
        )

    def inverse(self) -> "AffineMap":
        det = self.det
        ia, ib = self.e / det, -self.b / det
        id_, ie = -self.d / det, self.a / det
        return AffineMap(
            ia, ib, -(ia * self.c + ib * self.f),
            id_, ie, -(id_ * self.c + ie * self.f),
        )


@dataclass(frozen=True)
class MaskModel:
    """Base mask plus per-step translations recovered from three references.

    lateral_map moves the mask by one scan step, axial_map by one depth
    section. The residuals are the RMS mismatch between each anchor frame
    and the base warped by the full fitted displacement.
    """

    base_mask: np.ndarray
    lateral_map: AffineMap
    axial_map: AffineMap
    anchors: tuple[int, int]
    lateral_residual_rms: float
    axial_residual_rms: float


def _ncc_surface_fft(na: np.ndarray, nb: np.ndarray) -> np.ndarray:
    cross_power = np.conj(np.fft.fft2(na)) * np.fft.fft2(nb)
    return np.fft.ifft2(cross_power).real


def _ncc_surface_spatial(na: np.ndarray, nb: np.ndarray) -> np.ndarray:
    h, w = na.shape
    tiled = np.tile(nb, (2, 2))
    sy, sx = tiled.strides
    view = as_strided(tiled, shape=(h, w, h, w), strides=(sy, sx, sy, sx))
    return np.einsum("vuyx,yx->vu", view, na)


def _parabolic_offset(cm: float, c0: float, cp: float) -> float:
    denom = cm - 2.0 * c0 + cp
    if denom >= 0.0:
        # flat or non-concave triple; no refinement possible
        return 0.0
    delta = 0.5 * (cm - cp) / denom
    return float(np.clip(delta, -0.5, 0.5))


def _wrap_signed(value: float, n: int) -> float:
    half = n / 2.0
    return ((value + half) % n) - half


def estimate_translation(frame_a, frame_b, method: str = "auto") -> tuple[float, float]:
    """Sub-pixel displacement (dx, dy) such that frame_b ~ frame_a shifted by it.

    The displacement maximizes the circular normalized cross-correlation of
    the two frames; the integer peak is refined per axis by a parabolic fit
    over its immediate neighbors. Results are wrapped into
    [-size/2, size/2) per axis, so displacements at or beyond half the frame
    (or half the pattern period, for periodic content) alias.

    method: 'auto' picks direct spatial summation for frames up to
    256x256 and the FFT beyond; 'spatial' / 'fft' force a path.
    """
    a = np.asarray(frame_a, dtype=np.float64)
    b = np.asarray(frame_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("frames must be 2D")
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    na = a - a.mean()
    nb = b - b.mean()
    sa = np.sqrt(np.mean(na * na))
    sb = np.sqrt(np.mean(nb * nb))
    if sa == 0.0 or sb == 0.0:
        raise DegenerateInputError("constant frame carries no displacement signal")

    h, w = a.shape
    if method == "auto":
        method = "spatial" if (h <= SPATIAL_LIMIT and w <= SPATIAL_LIMIT) else "fft"
    if method == "spatial":
        surf = _ncc_surface_spatial(na, nb)
    elif method == "fft":
        surf = _ncc_surface_fft(na, nb)
    else:
        raise ValueError(f"unknown method {method!r}")
    surf /= h * w * sa * sb

    iy, ix = np.unravel_index(int(np.argmax(surf)), surf.shape)
    dy = iy + _parabolic_offset(
        surf[(iy - 1) % h, ix], surf[iy, ix], surf[(iy + 1) % h, ix]
    )
    dx = ix + _parabolic_offset(
        surf[iy, (ix - 1) % w], surf[iy, ix], surf[iy, (ix + 1) % w]
    )
    return _wrap_signed(dx, w), _wrap_signed(dy, h)


def fit_mask_model(ref_x1z1, ref_xNz1, ref_x1zK, anchors: tuple[int, int]) -> MaskModel:
    """Fit per-step lateral and axial translations from three reference masks.

    ref_x1z1 is the base; ref_xNz1 sits N-1 scan steps away at the same
    depth; ref_x1zK sits K-1 depth sections away at the same scan position.
    Anchor displacements must stay under half a slit period (see module
    docstring) and must be nonzero.
    """
    n_anchor, k_anchor = anchors
    if n_anchor < 2 or k_anchor < 2:
        raise ValueError(f"anchors must be >= 2 steps/sections apart, got {anchors}")
    base = np.asarray(ref_x1z1, dtype=np.float64)

    dx_lat, dy_lat = estimate_translation(ref_x1z1, ref_xNz1)
    if float(np.hypot(dx_lat, dy_lat)) < _MIN_ANCHOR_DISP:
        raise DegenerateInputError("lateral anchor pair shows no displacement")
    dx_ax, dy_ax = estimate_translation(ref_x1z1, ref_x1zK)
    if float(np.hypot(dx_ax, dy_ax)) < _MIN_ANCHOR_DISP:
        raise DegenerateInputError("axial anchor pair shows no displacement")

    lat_res = float(
        np.sqrt(np.mean((shift_image(base, dx_lat, dy_lat) - np.asarray(ref_xNz1)) ** 2))
    )
    ax_res = float(
        np.sqrt(np.mean((shift_image(base, dx_ax, dy_ax) - np.asarray(ref_x1zK)) ** 2))
    )
    return MaskModel(
        base_mask=base.copy(),
        lateral_map=AffineMap.translation(dx_lat / (n_anchor - 1), dy_lat / (n_anchor - 1)),
        axial_map=AffineMap.translation(dx_ax / (k_anchor - 1), dy_ax / (k_anchor - 1)),
        anchors=(n_anchor, k_anchor),
        lateral_residual_rms=lat_res,
        axial_residual_rms=ax_res,
    )


def predict_mask(model: MaskModel, x_index: int, z_index: int) -> np.ndarray:
    """Mask at scan step x_index and depth section z_index.

    The lateral and axial per-step translations are accumulated into a
    single displacement and applied once, so repeated prediction does not
    stack interpolation blur. (0, 0) returns the base mask unchanged.
    """
    dx = x_index * model.lateral_map.c + z_index * model.axial_map.c
    dy = x_index * model.lateral_map.f + z_index * model.axial_map.f
    if dx == 0.0 and dy == 0.0:
        return model.base_mask.copy()
    return shift_image(model.base_mask, dx, dy)


def warp_frame(frame, amap: AffineMap) -> np.ndarray:
    """Apply an affine map to an image by inverse-mapped bilinear sampling.

    Pure translations delegate to shift_image so the two code paths cannot
    drift apart; general maps sample frame at amap^-1(x, y) with zero
    outside the input.
    """
    a = np.asarray(frame, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {a.shape}")
    if amap.is_translation:
        return shift_image(a, amap.c, amap.f)
    h, w = a.shape
    inv = amap.inverse()
    xx, yy = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    sx, sy = inv.apply(xx, yy)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros_like(a)
    for dy_c, dx_c, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yc = y0 + dy_c
        xc = x0 + dx_c
        ok = (yc >= 0) & (yc < h) & (xc >= 0) & (xc < w)
        vals = a[np.clip(yc, 0, h - 1), np.clip(xc, 0, w - 1)]
        out += np.where(ok, wgt * vals, 0.0)
    return out
