"""
Tests for projection, splat rendering, stitching and the image metrics.
"""

import math

import numpy as np
import pytest

from src.checks.reference import l1_reference, psnr_reference, ssim_reference
from src.errors import FormatError, MetricError, RenderError, TilingError
from src.models import PixelRect
from src.partition import cull_voxels, look_at, make_tiles, random_cameras, splat_world_margin, tile_frustum
from src.render import (
    RenderImage,
    constant_palette,
    coordinate_palette,
    crop,
    d_ssim,
    l1_loss,
    load_rgba,
    photometric_loss,
    project_point,
    psnr,
    render_full,
    render_tile,
    save_image,
    ssim,
    stitch,
    stitch_check,
    unproject,
)
from src.sparse_voxel import canonicalize, set_union
from src.voxelizer import voxelize_surface


class TestProjection:
    def test_origin_hits_principal_point(self, front_camera):
        u, v, depth = project_point(front_camera, (0.0, 0.0, 0.0))
        assert (u, v) == pytest.approx((front_camera.cx, front_camera.cy))
        assert depth == pytest.approx(2.0)

    def test_matches_pinhole_formula(self):
        rng = np.random.default_rng(42)
        camera = random_cameras(1, seed=4, width=200, height=100)[0]
        for point in rng.uniform(-0.5, 0.5, (20, 3)):
            cam = camera.R @ point + camera.t
            u, v, depth = project_point(camera, point)
            assert u == pytest.approx(camera.fx * cam[0] / cam[2] + camera.cx, abs=1e-9)
            assert v == pytest.approx(camera.fy * cam[1] / cam[2] + camera.cy, abs=1e-9)
            assert depth == pytest.approx(cam[2], abs=1e-12)

    def test_behind_camera(self, front_camera):
        assert project_point(front_camera, (0.0, 0.0, -3.0)) is None

    def test_unproject_inverts_project(self, front_camera):
        u, v, depth = project_point(front_camera, (0.1, -0.2, 0.3))
        np.testing.assert_allclose(unproject(front_camera, u, v, depth), [[0.1, -0.2, 0.3]], atol=1e-12)


class TestRasterizer:
    def test_single_splat(self, front_camera):
        grid = canonicalize([[32, 32, 32]], 64)
        image = render_full(grid, front_camera, 3.0)
        assert 20 <= image.coverage <= 36
        covered = image.rgba[..., 3] > 0
        assert np.all(image.depth[covered] == np.float32(image.depth[covered][0]))
        assert np.all(np.isinf(image.depth[~covered]))

    def test_nearer_voxel_wins(self, front_camera):
        near, far = [32, 32, 20], [32, 32, 40]
        grid = canonicalize([near, far], 64)
        image = render_full(grid, front_camera, 2.0)
        u, v, depth = project_point(front_camera, grid.world_centers()[0])
        px, py = int(math.floor(u)), int(math.floor(v))
        assert image.depth[py, px] == pytest.approx(depth, rel=1e-6)
        np.testing.assert_array_equal(image.rgba[py, px, :3], coordinate_palette(np.array([near]), 64)[0])

    def test_outside_depth_range_is_skipped(self, front_camera):
        camera = front_camera.model_copy(update={"far": 1.0})
        assert render_full(canonicalize([[32, 32, 32]], 64), camera, 3.0).coverage == 0

    def test_constant_palette(self, front_camera, sphere):
        image = render_full(voxelize_surface(sphere, 8), front_camera, 3.0, palette=constant_palette((9, 8, 7)))
        covered = image.rgba[..., 3] > 0
        np.testing.assert_array_equal(np.unique(image.rgba[covered][:, :3], axis=0), [[9, 8, 7]])

    def test_antipodal_views_cover_the_same_area(self, torus):
        # grid symmetric under the half turn about y that swaps the two eyes
        grid = voxelize_surface(torus, 32)
        turned = grid.coords * np.array([-1, 1, -1]) + np.array([31, 0, 31])
        symmetric = set_union(grid, canonicalize(turned, 32))
        front = look_at((0.0, 0.0, -2.0), width=128, height=128)
        back = look_at((0.0, 0.0, 2.0), width=128, height=128)
        covered = render_full(symmetric, front, 3.0).coverage
        assert covered > 0
        assert render_full(symmetric, back, 3.0).coverage == covered

    def test_small_radius_rejected(self, front_camera):
        with pytest.raises(RenderError):
            render_full(canonicalize([[0, 0, 0]], 4), front_camera, 0.25)

    def test_render_image_invariant(self):
        with pytest.raises(RenderError):
            RenderImage(np.zeros((2, 2, 4), dtype=np.uint8), np.ones((2, 2)))


class TestTiles:
    def test_tile_patch_origin(self, front_camera, sphere):
        grid = voxelize_surface(sphere, 16)
        tile = make_tiles(front_camera, 4, 3)[5]
        culled = cull_voxels(grid, tile_frustum(front_camera, tile, splat_world_margin(front_camera, 3.0)))
        patch = render_tile(culled.grid, front_camera, tile, 3.0)
        assert patch.rect == tile.expanded
        full = render_full(grid, front_camera, 3.0)
        np.testing.assert_array_equal(crop(patch, tile.core).rgba, crop(full, tile.core).rgba)

    @pytest.mark.parametrize("grid_n", [2, 3, 4])
    def test_stitch_is_bit_exact(self, grid_n, torus):
        grid = voxelize_surface(torus, 16)
        cameras = random_cameras(3, seed=21, width=64, height=64)
        for camera in cameras:
            diff = stitch_check(grid, [camera], grid_n, 3, 3.0, splat_world_margin(camera, 3.0))
            assert diff == [0]

    def test_undersized_margin_is_detected(self, front_camera):
        # projects just right of the vertical core boundary of a 2x2 tiling
        grid = canonicalize([[31, 32, 32]], 64)
        u, v, _ = project_point(front_camera, grid.world_centers()[0])
        assert 64.0 < u < 65.0 and 63.0 < v < 64.0
        assert stitch_check(grid, [front_camera], 2, 0, 3.0, 0.0, voxel_world_size=0.0)[0] > 0
        assert stitch_check(grid, [front_camera], 2, 3, 3.0, splat_world_margin(front_camera, 3.0)) == [0]

    def test_stitch_rejects_gaps(self, front_camera):
        tiles = make_tiles(front_camera, 2, 0)
        patches = [(t, RenderImage.background(t.expanded)) for t in tiles[:3]]
        with pytest.raises(TilingError):
            stitch(patches)

    def test_stitch_rejects_overlap(self, front_camera):
        tiles = make_tiles(front_camera, 2, 0)
        patches = [(t, RenderImage.background(t.expanded)) for t in tiles + tiles[:1]]
        with pytest.raises(TilingError):
            stitch(patches)


class TestMetrics:
    def setup_method(self):
        rng = np.random.default_rng(42)
        self.x = rng.random((32, 40, 3))
        self.y = rng.random((32, 40, 3))

    def test_identity(self):
        assert ssim(self.x, self.x) == 1.0
        assert l1_loss(self.x, self.x) == 0.0
        assert psnr(self.x, self.x) == 100.0
        assert d_ssim(self.x, self.x) == 0.0

    def test_against_references(self):
        assert ssim(self.x, self.y) == pytest.approx(ssim_reference(self.x, self.y), abs=1e-6)
        assert l1_loss(self.x, self.y) == pytest.approx(l1_reference(self.x, self.y), abs=1e-12)
        assert psnr(self.x, self.y) == pytest.approx(psnr_reference(self.x, self.y), abs=1e-9)

    def test_constant_offsets(self):
        gray = np.full((16, 16, 3), 0.25)
        assert l1_loss(gray, gray + 0.5) == pytest.approx(0.5)
        assert psnr(gray, gray + 0.1) == pytest.approx(20.0)

    def test_photometric_mix(self):
        expected = 0.8 * l1_loss(self.x, self.y) + 0.2 * d_ssim(self.x, self.y)
        assert photometric_loss(self.x, self.y) == pytest.approx(expected)

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            l1_loss(self.x, self.y[:-1])

    def test_ssim_needs_room_for_the_window(self):
        small = np.zeros((8, 8, 3))
        with pytest.raises(MetricError):
            ssim(small, small)


class TestImageFiles:
    def test_png_keeps_rgba(self, tmp_path, front_camera, sphere):
        image = render_full(voxelize_surface(sphere, 8), front_camera, 3.0)
        save_image(image, tmp_path / "out.png")
        np.testing.assert_array_equal(load_rgba(tmp_path / "out.png"), image.rgba)

    def test_ppm_drops_alpha(self, tmp_path, front_camera, sphere):
        image = render_full(voxelize_surface(sphere, 8), front_camera, 3.0)
        save_image(image, tmp_path / "out.ppm")
        np.testing.assert_array_equal(load_rgba(tmp_path / "out.ppm")[..., :3], image.rgba[..., :3])

    def test_unknown_extension(self, tmp_path, front_camera):
        image = RenderImage.background(PixelRect(x0=0, y0=0, w=4, h=4))
        with pytest.raises(FormatError):
            save_image(image, tmp_path / "out.jpg")
