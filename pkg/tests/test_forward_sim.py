import numpy as np
import pytest

from aspi import (
    NoiseSpec,
    PatternSpec,
    Scene,
    ZGrid,
    acquire_stack,
    base_camera_pattern,
    camera_shape,
    make_tilted_plane_scene,
    render_frame,
    synthesize_mask,
    tilted_plane_sections,
)
from conftest import geometry_with_shear, slit_coverage_constant


def rig(d=30, w=2, n=30, width=120, height=16, shear=1.0, sections=20):
    spec = PatternSpec(width, height, period_d=d, linewidth_w=w, shift_step=1,
                       num_shifts_n=n)
    geom = geometry_with_shear(shear)
    grid = ZGrid(z0=0.0, z_step=1.0, count=sections)
    return spec, geom, grid


def ones_scene(spec, geom, z_index=0, **kw):
    return Scene(layers=[(z_index, np.ones(camera_shape(spec, geom)))], **kw)


class TestRenderFrame:
    def test_single_unit_layer_equals_mask(self):
        spec, geom, grid = rig()
        scene = ones_scene(spec, geom, z_index=4)
        frame = render_frame(scene, 3, spec, geom, grid)
        mask = synthesize_mask(base_camera_pattern(spec, geom), 3.0, 4, geom, grid)
        assert np.array_equal(frame, mask)

    def test_disjoint_layers_superpose(self):
        spec, geom, grid = rig()
        shape = camera_shape(spec, geom)
        top = np.zeros(shape)
        top[:8] = 1.0
        bottom = np.zeros(shape)
        bottom[8:] = 0.7
        both = render_frame(Scene(layers=[(2, top), (9, bottom)]), 5, spec, geom, grid)
        only_a = render_frame(Scene(layers=[(2, top)]), 5, spec, geom, grid)
        only_b = render_frame(Scene(layers=[(9, bottom)]), 5, spec, geom, grid)
        assert np.allclose(both, only_a + only_b, atol=1e-15)

    def test_haze_halves_modulation_depth(self):
        spec, geom, grid = rig()
        clear = render_frame(ones_scene(spec, geom, 0), 0, spec, geom, grid)
        hazy = render_frame(ones_scene(spec, geom, 0, haze_fraction=0.5), 0, spec, geom, grid)
        window = (slice(None), slice(60, 90))  # one interior period
        mod = lambda f: f[window].max() - f[window].min()
        assert mod(hazy) == pytest.approx(0.5 * mod(clear), rel=1e-9)

    def test_modulation_strictly_decreasing_in_haze(self):
        spec, geom, grid = rig()
        window = (slice(None), slice(60, 90))
        depths = []
        for h in (0.0, 0.2, 0.4, 0.6, 0.8):
            f = render_frame(ones_scene(spec, geom, 0, haze_fraction=h), 0, spec, geom, grid)
            depths.append(f[window].max() - f[window].min())
        assert np.all(np.diff(depths) < 0)

    def test_reflectance_linearity(self):
        spec, geom, grid = rig()
        shape = camera_shape(spec, geom)
        rng = np.random.default_rng(3)
        refl = rng.random(shape)
        full = render_frame(Scene(layers=[(5, refl)]), 2, spec, geom, grid)
        half = render_frame(Scene(layers=[(5, 0.5 * refl)]), 2, spec, geom, grid)
        assert np.array_equal(half, 0.5 * full)  # power-of-two scale is exact

    def test_empty_scene_rejected(self):
        with pytest.raises(ValueError):
            Scene(layers=[])

    def test_layer_outside_grid_rejected(self):
        spec, geom, grid = rig(sections=5)
        scene = ones_scene(spec, geom, z_index=7)
        with pytest.raises(ValueError):
            render_frame(scene, 0, spec, geom, grid)

    def test_scene_shape_must_match_camera(self):
        spec, geom, grid = rig()
        scene = Scene(layers=[(0, np.ones((4, 4)))])
        with pytest.raises(ValueError):
            render_frame(scene, 0, spec, geom, grid)


class TestAcquireStack:
    def test_single_shift_equals_render_frame(self):
        spec, geom, grid = rig(n=1)
        scene = ones_scene(spec, geom, 2)
        acq = acquire_stack(scene, spec, geom, grid)
        assert acq.frames.shape[0] == 1
        assert np.array_equal(acq.frames[0], render_frame(scene, 0, spec, geom, grid))

    def test_seeded_noise_is_deterministic(self):
        spec, geom, grid = rig(n=6)
        noise = NoiseSpec(gaussian_sigma=0.05, poisson_scale=200.0, seed=42)
        a = acquire_stack(ones_scene(spec, geom, 1, noise=noise), spec, geom, grid)
        b = acquire_stack(ones_scene(spec, geom, 1, noise=noise), spec, geom, grid)
        assert np.array_equal(a.frames, b.frames)
        c = acquire_stack(ones_scene(spec, geom, 1, noise=NoiseSpec(0.05, 200.0, 43)),
                          spec, geom, grid)
        assert not np.array_equal(a.frames, c.frames)

    def test_frames_match_per_frame_renders_with_haze(self):
        spec, geom, grid = rig(n=8)
        scene = ones_scene(spec, geom, 3, haze_fraction=0.4)
        acq = acquire_stack(scene, spec, geom, grid)
        for i in (0, 3, 7):
            assert np.array_equal(acq.frames[i], render_frame(scene, i, spec, geom, grid))

    def test_full_coverage_sum_is_constant(self):
        spec, geom, grid = rig(d=10, w=2, n=10, width=80)
        acq = acquire_stack(ones_scene(spec, geom, 0), spec, geom, grid)
        total = acq.frames.sum(axis=0)
        expected = slit_coverage_constant(10, 2, 1, 10)
        assert expected == {2}
        interior = total[:, 12:]  # clear of the scan-vacated border
        assert np.allclose(interior, 2.0, atol=1e-12)

    def test_gaussian_noise_not_clipped(self):
        # zero-signal pixels keep symmetric read noise; clipping would bias
        # the out-of-band statistics the reconstruction tests measure
        spec, geom, grid = rig(n=4)
        shape = camera_shape(spec, geom)
        refl = np.zeros(shape)
        refl[:, :1] = 1.0
        scene = Scene(layers=[(0, refl)], noise=NoiseSpec(gaussian_sigma=0.1, seed=9))
        acq = acquire_stack(scene, spec, geom, grid)
        assert acq.frames.min() < 0


class TestSceneValidation:
    def test_layers_strictly_increasing(self):
        ones = np.ones((4, 4))
        with pytest.raises(ValueError):
            Scene(layers=[(3, ones), (3, ones)])
        with pytest.raises(ValueError):
            Scene(layers=[(5, ones), (2, ones)])

    def test_reflectance_range(self):
        with pytest.raises(ValueError):
            Scene(layers=[(0, 1.5 * np.ones((3, 3)))])
        with pytest.raises(ValueError):
            Scene(layers=[(0, -np.ones((3, 3)))])

    def test_haze_range(self):
        ones = np.ones((3, 3))
        with pytest.raises(ValueError):
            Scene(layers=[(0, ones)], haze_fraction=1.0)
        with pytest.raises(ValueError):
            Scene(layers=[(0, ones)], haze_fraction=-0.1)

    def test_noise_validation(self):
        with pytest.raises(ValueError):
            NoiseSpec(gaussian_sigma=-1.0)


class TestTiltedPlaneScene:
    grid = ZGrid(z0=0.0, z_step=1.0, count=12)

    def test_zero_slope_single_layer(self):
        scene = make_tilted_plane_scene(self.grid, 0.0, np.ones((4, 24)))
        assert len(scene.layers) == 1
        assert scene.layers[0][0] == 0

    def test_band_partition(self):
        width = 48
        slope = 12 / width
        refl = np.ones((4, width))
        scene = make_tilted_plane_scene(self.grid, slope, refl)
        assert len(scene.layers) == 12
        support = np.zeros(width, dtype=int)
        prev_end = 0
        for z_index, band in scene.layers:
            cols = np.flatnonzero(band[0])
            # contiguous, disjoint, ordered column bands
            assert np.array_equal(cols, np.arange(cols[0], cols[-1] + 1))
            assert cols[0] == prev_end
            prev_end = cols[-1] + 1
            support[cols] += 1
        assert prev_end == width
        assert np.all(support == 1)

    def test_ground_truth_is_the_constructed_ramp(self):
        width = 48
        slope = 12 / width
        secs = tilted_plane_sections(width, slope)
        assert np.array_equal(secs, np.floor(slope * np.arange(width)).astype(int))

    def test_out_of_grid_slope_rejected(self):
        with pytest.raises(ValueError):
            make_tilted_plane_scene(self.grid, 1.0, np.ones((4, 24)))
        with pytest.raises(ValueError):
            make_tilted_plane_scene(self.grid, -0.5, np.ones((4, 24)))

    def test_z_start_offset(self):
        scene = make_tilted_plane_scene(self.grid, 0.0, np.ones((4, 8)), z_start=5)
        assert scene.layers[0][0] == 5
