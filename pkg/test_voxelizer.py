"""
Tests for the conservative surface voxelizer.
"""

import numpy as np
import pytest

from src.errors import GridError, MeshError
from src.fixtures import all_fixtures, fixture
from src.mesh_io import TriangleMesh, make_primitive
from src.voxelizer import (
    parent_closure_violations,
    triangle_box_overlap,
    voxelize_dense_oracle,
    voxelize_surface,
)


class TestTriangleBoxOverlap:
    def test_touching_face_counts(self):
        # triangle lying in the plane x = 0.5, the +x face of the unit box
        tri = np.array([[0.5, -2.0, -2.0], [0.5, 2.0, -2.0], [0.5, 0.0, 2.0]])
        assert triangle_box_overlap(tri, np.zeros((1, 3)), 0.5)[0]

    def test_separated_by_edge_axis(self):
        # the AABBs overlap, but the triangle passes beyond the box corner
        tri = np.array([[1.2, 0.0, 0.0], [0.0, 1.2, 0.0], [1.2, 1.2, 0.0]])
        assert not triangle_box_overlap(tri, np.zeros((1, 3)), 0.5)[0]

    def test_result_independent_of_batch(self):
        rng = np.random.default_rng(42)
        tri = rng.uniform(-0.5, 0.5, (3, 3))
        centers = rng.uniform(-0.6, 0.6, (500, 3))
        batch = triangle_box_overlap(tri, centers, 0.05)
        single = [triangle_box_overlap(tri, c[None], 0.05)[0] for c in centers[:50]]
        np.testing.assert_array_equal(batch[:50], single)


class TestVoxelizeSurface:
    def test_aligned_plane_at_r8(self):
        grid = voxelize_surface(fixture("plane_aligned").mesh, 8)
        assert len(grid) == 128
        assert set(grid.coords[:, 2].tolist()) == {3, 4}

    def test_cube_shell_at_r4(self):
        assert len(voxelize_surface(make_primitive("cube"), 4)) == 56

    def test_face_on_grid_boundary(self):
        # square covering the whole x = -0.5 side of the unit box
        face = TriangleMesh(
            [[-0.5, -0.5, -0.5], [-0.5, 0.5, -0.5], [-0.5, 0.5, 0.5], [-0.5, -0.5, 0.5]],
            [[0, 1, 2], [0, 2, 3]],
        )
        grid = voxelize_surface(face, 4)
        assert len(grid) == 16
        assert set(grid.coords[:, 0].tolist()) == {0}
        np.testing.assert_array_equal(grid.coords, voxelize_dense_oracle(face, 4).coords)

    def test_single_triangle_inside_one_cell(self):
        mesh = TriangleMesh([[0.01, 0.01, 0.01], [0.05, 0.01, 0.01], [0.01, 0.05, 0.01]], [[0, 1, 2]])
        grid = voxelize_surface(mesh, 8)
        np.testing.assert_array_equal(grid.coords, [[4, 4, 4]])

    def test_empty_mesh(self):
        empty = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
        assert len(voxelize_surface(empty, 16)) == 0

    @pytest.mark.parametrize("resolution", [3, 2048, 48])
    def test_resolution_must_be_power_of_two_in_range(self, resolution):
        with pytest.raises(GridError):
            voxelize_surface(make_primitive("cube"), resolution)

    def test_unnormalized_mesh_rejected(self):
        with pytest.raises(MeshError):
            voxelize_surface(make_primitive("cube", size=2.0), 8)

    def test_threads_do_not_change_result(self, torus):
        one = voxelize_surface(torus, 32)
        four = voxelize_surface(torus, 32, threads=4)
        np.testing.assert_array_equal(one.coords, four.coords)


class TestOracleEquivalence:
    @pytest.mark.parametrize("name", sorted(all_fixtures()))
    def test_matches_dense_oracle(self, name):
        mesh = fixture(name).mesh
        for resolution in (4, 8):
            fast = voxelize_surface(mesh, resolution)
            dense = voxelize_dense_oracle(mesh, resolution)
            np.testing.assert_array_equal(fast.coords, dense.coords)

    def test_oracle_resolution_cap(self, sphere):
        with pytest.raises(GridError):
            voxelize_dense_oracle(sphere, 64)


class TestParentClosure:
    @pytest.mark.parametrize("name", ["sphere_s2", "torus_thin", "plane_tilted", "cluster"])
    def test_every_fine_voxel_has_a_coarse_parent(self, name):
        mesh = fixture(name).mesh
        for resolution in (8, 16):
            fine = voxelize_surface(mesh, 2 * resolution)
            coarse = voxelize_surface(mesh, resolution)
            assert len(parent_closure_violations(fine, coarse)) == 0

    def test_needs_factor_two(self, sphere):
        with pytest.raises(GridError):
            parent_closure_violations(voxelize_surface(sphere, 32), voxelize_surface(sphere, 8))
