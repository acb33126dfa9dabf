"""Reconstruction throughput benchmark.

Synthesizes an acquisition in memory (no file I/O inside the timed region)
and measures how fast the mask-multiply reconstruction produces output
sections. Throughput is reported as output megapixels per second:
width * height * sections / wall time. Sections are streamed, checksummed in
section order with CRC32, and discarded, so the benchmark runs at constant
memory regardless of the section count; the checksum makes thread-count
determinism checkable. The timed region includes per-section mask synthesis
and checksumming, both part of producing verified output.
"""

from __future__ import annotations

import math
import time
import zlib
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .imaging_model import GeometryConfig, PatternSpec, ZGrid
from .reconstructor import GeometryMasks, default_floor, reconstruct_section

__all__ = ["BenchReport", "bench_reconstruction"]

# Synthetic rig used for all benchmark runs: one-pixel scan steps over one
# slit period, quarter-pixel shear per section.
_BENCH_SHEAR = 0.25
_BENCH_THETA = math.radians(25.0)


@dataclass(frozen=True)
class BenchReport:
    width: int
    height: int
    shifts: int
    sections: int
    threads: int
    wall_seconds: float
    megapixels_per_second: float
    per_section_seconds: float
    checksum: int

    def summary(self) -> str:
        return (
            f"megapixels_per_second={self.megapixels_per_second:.1f} "
            f"wall_seconds={self.wall_seconds:.3f} "
            f"per_section_seconds={self.per_section_seconds:.5f} "
            f"width={self.width} height={self.height} shifts={self.shifts} "
            f"sections={self.sections} threads={self.threads} "
            f"checksum={self.checksum:08x}"
        )


def bench_reconstruction(
    width: int,
    height: int,
    n: int,
    sections: int,
    threads: int = 1,
    seed: int = 1,
) -> BenchReport:
    """Time the reconstruction of `sections` planes from an n-frame scan."""
    if min(width, height, n, sections) < 1:
        raise ValueError("width, height, n and sections must be >= 1")
    threads = max(1, int(threads))

    period = max(16, n)  # scan of n unit steps must fit one period
    spec = PatternSpec(
        proj_width=width,
        proj_height=height,
        period_d=period,
        linewidth_w=max(1, period // 8),
        shift_step=1,
        num_shifts_n=n,
    )
    geom = GeometryConfig(
        tilt_theta=_BENCH_THETA,
        z_step=_BENCH_SHEAR / math.tan(_BENCH_THETA),
        camera_pixel_pitch=1.0,
        magnification=1.0,
    )
    grid = ZGrid(z0=0.0, z_step=geom.z_step, count=sections)

    rng = np.random.default_rng(seed)
    frames = rng.random((n, height, width), dtype=np.float32)
    provider = GeometryMasks(spec, geom, grid)
    floor = default_floor(provider.base, n)

    def work(j: int) -> np.ndarray:
        section, _ = reconstruct_section(frames, provider.section_masks(j), floor)
        return section

    crc = 0
    start = time.perf_counter()
    if threads == 1:
        for j in range(sections):
            crc = zlib.crc32(work(j), crc)
    else:
        # keep only a few sections in flight; checksum consumes them in order
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending = deque()
            for j in range(sections):
                pending.append(pool.submit(work, j))
                if len(pending) > threads + 2:
                    crc = zlib.crc32(pending.popleft().result(), crc)
            while pending:
                crc = zlib.crc32(pending.popleft().result(), crc)
    wall = time.perf_counter() - start

    out_mp = width * height * sections / 1e6
    return BenchReport(
        width=width,
        height=height,
        shifts=n,
        sections=sections,
        threads=threads,
        wall_seconds=wall,
        megapixels_per_second=out_mp / wall,
        per_section_seconds=wall / sections,
        checksum=crc,
    )
