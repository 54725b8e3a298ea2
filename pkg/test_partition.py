"""
Tests for cameras, tilings, tile sampling, frusta and culling.
"""

from collections import Counter

import numpy as np
import pytest

from src.errors import CameraError, TilingError
from src.models import PixelRect
from src.partition import (
    camera_frustum,
    camera_to_world,
    core_coverage,
    cull_tiles,
    cull_voxels,
    foreground_region,
    full_image_tile,
    look_at,
    make_tiles,
    random_cameras,
    sample_schedule,
    sample_tile,
    splat_world_margin,
    splitmix64,
    tile_frustum,
    tile_stats,
    world_to_camera,
)
from src.render import project, unproject
from src.voxelizer import voxelize_surface


class TestCameras:
    def test_look_at_centers_target(self, front_camera):
        np.testing.assert_allclose(front_camera.center, [0.0, 0.0, -2.0], atol=1e-12)
        cam = world_to_camera(front_camera, np.zeros((1, 3)))
        np.testing.assert_allclose(cam, [[0.0, 0.0, 2.0]], atol=1e-12)

    def test_world_up_is_image_up(self, front_camera):
        above = project(front_camera, np.array([[0.0, 0.2, 0.0]]))
        assert above.v[0] < front_camera.cy

    def test_round_trip(self):
        rng = np.random.default_rng(42)
        camera = random_cameras(1, seed=3)[0]
        points = rng.uniform(-1, 1, (100, 3))
        np.testing.assert_allclose(camera_to_world(camera, world_to_camera(camera, points)), points, atol=1e-12)

    def test_random_cameras_are_seeded(self):
        a = random_cameras(3, seed=11, width=64, height=64)
        b = random_cameras(3, seed=11, width=64, height=64)
        assert [c.model_dump() for c in a] == [c.model_dump() for c in b]
        for camera in a:
            assert np.linalg.norm(camera.center) == pytest.approx(2.0)

    def test_degenerate_up(self):
        with pytest.raises(CameraError):
            look_at((0.0, 2.0, 0.0), up=(0.0, 1.0, 0.0))


class TestTiling:
    def test_two_by_two_of_512(self):
        camera = look_at((0.0, 0.0, -2.0), width=512, height=512)
        tiles = make_tiles(camera, 2, 0)
        assert [(t.core.w, t.core.h) for t in tiles] == [(256, 256)] * 4
        assert all(t.expanded == t.core for t in tiles)

    def test_interior_tile_margin(self):
        camera = look_at((0.0, 0.0, -2.0), width=512, height=512)
        tiles = make_tiles(camera, 4, 16)
        interior = tiles[5]
        assert (interior.row, interior.col) == (1, 1)
        assert interior.expanded == PixelRect(x0=112, y0=112, w=160, h=160)
        corner = tiles[0]
        assert corner.expanded == PixelRect(x0=0, y0=0, w=144, h=144)

    def test_odd_size_split(self):
        camera = look_at((0.0, 0.0, -2.0), width=513, height=513)
        tiles = make_tiles(camera, 2, 0)
        assert sorted({t.core.w for t in tiles}) == [256, 257]
        assert tiles[0].core.w == 257

    @pytest.mark.parametrize("grid_n,margin", [(1, 0), (3, 2), (4, 16), (7, 5)])
    def test_cores_partition_image(self, grid_n, margin):
        camera = look_at((0.0, 0.0, -2.0), width=200, height=150)
        tiles = make_tiles(camera, grid_n, margin)
        assert np.all(core_coverage(tiles, 200, 150) == 1)
        widths = [t.core.w for t in tiles if t.row == 0]
        heights = [t.core.h for t in tiles if t.col == 0]
        assert max(widths) - min(widths) <= 1
        assert max(heights) - min(heights) <= 1

    def test_grid_larger_than_image(self):
        camera = look_at((0.0, 0.0, -2.0), width=4, height=4)
        with pytest.raises(TilingError):
            make_tiles(camera, 5, 0)

    def test_zero_sized_image(self, front_camera):
        camera = front_camera.model_copy(update={"width": 0, "height": 0})
        with pytest.raises(TilingError):
            make_tiles(camera, 1, 0)

    def test_region_tiling(self, front_camera):
        region = PixelRect(x0=10, y0=20, w=50, h=40)
        tiles = make_tiles(front_camera, 2, 3, region)
        assert sum(t.core.area for t in tiles) == region.area
        assert all(region.contains(t.core) for t in tiles)


class TestSampling:
    def test_splitmix_reference_value(self):
        assert splitmix64(0) == 0xE220A8397B1DCDAF

    def test_deterministic(self, front_camera):
        tiles = make_tiles(front_camera, 4, 0)
        assert sample_schedule(tiles, 42, 50) == sample_schedule(tiles, 42, 50)
        assert sample_schedule(tiles, 42, 50) != sample_schedule(tiles, 43, 50)

    def test_frequencies_are_uniform(self, front_camera):
        tiles = make_tiles(front_camera, 4, 0)
        steps = 100_000
        counts = Counter(sample_schedule(tiles, 42, steps))
        for tile in tiles:
            assert abs(counts[tile.index] / steps - 1 / 16) <= 0.02

    def test_empty_tile_list(self):
        with pytest.raises(TilingError):
            sample_tile([], 0, 0)


class TestFrustum:
    def test_full_tile_matches_intrinsics(self):
        for camera in random_cameras(4, seed=5, width=96, height=80):
            for margin in (0.0, 0.05):
                a = tile_frustum(camera, full_image_tile(camera), margin)
                b = camera_frustum(camera, margin)
                np.testing.assert_allclose(a.normals, b.normals, atol=1e-9)
                np.testing.assert_allclose(a.offsets, b.offsets, atol=1e-9)

    def test_inside_points_project_into_image(self, front_camera):
        rng = np.random.default_rng(42)
        points = rng.uniform(-3, 3, (20_000, 3))
        inside = camera_frustum(front_camera).contains(points)
        assert inside.sum() > 100
        proj = project(front_camera, points[inside])
        eps = 1e-9
        assert np.all((proj.u >= -eps) & (proj.u <= front_camera.width + eps))
        assert np.all((proj.v >= -eps) & (proj.v <= front_camera.height + eps))
        assert np.all((proj.depth >= front_camera.near - eps) & (proj.depth <= front_camera.far + eps))

    def test_tile_frustum_contains_its_pixels(self, front_camera):
        rng = np.random.default_rng(42)
        tile = make_tiles(front_camera, 4, 0)[6]
        frustum = tile_frustum(front_camera, tile)
        u = rng.uniform(tile.core.x0, tile.core.x1, 500)
        v = rng.uniform(tile.core.y0, tile.core.y1, 500)
        depth = rng.uniform(0.5, 5.0, 500)
        assert np.all(frustum.contains(unproject(front_camera, u, v, depth), tolerance=1e-9))

    def test_points_projecting_inside_are_inside(self, front_camera):
        rng = np.random.default_rng(42)
        points = rng.uniform(-3, 3, (100_000, 3))
        proj = project(front_camera, points)
        in_depth = proj.in_front & (proj.depth >= front_camera.near) & (proj.depth <= front_camera.far)
        for tile in [full_image_tile(front_camera)] + make_tiles(front_camera, 4, 8):
            rect = tile.expanded
            hits = in_depth & (proj.u >= rect.x0) & (proj.u <= rect.x1) & (proj.v >= rect.y0) & (proj.v <= rect.y1)
            assert hits.sum() > 0
            inside = tile_frustum(front_camera, tile).contains(points, tolerance=1e-9)
            assert not np.any(hits & ~inside), tile.index

    def test_negative_world_margin(self, front_camera):
        with pytest.raises(CameraError):
            tile_frustum(front_camera, full_image_tile(front_camera), -1.0)

    def test_splat_world_margin(self, front_camera):
        assert splat_world_margin(front_camera, 3.0) == pytest.approx(3.0 * front_camera.far / front_camera.fx)


class TestCulling:
    def test_tiles_never_keep_more_than_the_view(self, torus):
        grid = voxelize_surface(torus, 32)
        for camera in random_cameras(3, seed=9, width=128, height=128):
            world = splat_world_margin(camera, 3.0)
            full = cull_voxels(grid, camera_frustum(camera, world)).kept_count
            coarse = cull_tiles(grid, camera, make_tiles(camera, 2, 3), world)
            fine = cull_tiles(grid, camera, make_tiles(camera, 4, 3), world)
            assert max(r.kept_count for r in coarse) <= full
            assert max(r.kept_count for r in fine) <= max(r.kept_count for r in coarse)

    def test_tile_union_covers_global_cull(self, torus):
        grid = voxelize_surface(torus, 32)
        for camera in random_cameras(3, seed=9, width=128, height=128):
            world = splat_world_margin(camera, 3.0)
            whole = cull_voxels(grid, camera_frustum(camera, world)).grid
            for n in (2, 4):
                kept = [r.grid.keys() for r in cull_tiles(grid, camera, make_tiles(camera, n, 3), world)]
                union = np.unique(np.concatenate(kept))
                assert np.all(np.isin(whole.keys(), union)), n

    def test_threads_preserve_tile_order(self, sphere, front_camera):
        grid = voxelize_surface(sphere, 16)
        tiles = make_tiles(front_camera, 3, 2)
        serial = [r.kept_count for r in cull_tiles(grid, front_camera, tiles, 0.01)]
        threaded = [r.kept_count for r in cull_tiles(grid, front_camera, tiles, 0.01, threads=4)]
        assert serial == threaded

    def test_culled_grid_is_subset(self, sphere, front_camera):
        grid = voxelize_surface(sphere, 16)
        tile = make_tiles(front_camera, 2, 0)[0]
        result = cull_voxels(grid, tile_frustum(front_camera, tile))
        assert result.total_count == len(grid)
        assert 0 < result.kept_count < len(grid)
        assert np.all(grid.contains(result.grid.coords))


class TestTileStats:
    def test_report(self, sphere, front_camera):
        grid = voxelize_surface(sphere, 16)
        report = tile_stats(grid, front_camera, 2, 3, 0.02, seed=1, steps=10)
        assert len(report.tiles) == 4
        assert report.max_tile_kept_count <= report.global_kept_count
        assert len(report.sampled_schedule) == 10

    def test_foreground_region(self, sphere, front_camera):
        grid = voxelize_surface(sphere, 16)
        region = foreground_region(grid, front_camera, pad_px=2)
        proj = project(front_camera, grid.world_centers())
        assert region.x0 <= proj.u.min() and proj.u.max() <= region.x1
        assert region.y0 <= proj.v.min() and proj.v.max() <= region.y1
        assert region.area < front_camera.width * front_camera.height
