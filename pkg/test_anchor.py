"""
Tests for upsampling, GT masks, the surrogate scorer and the mask losses.
"""

import math

import numpy as np
import pytest

from src.anchor import (
    CHILD_OFFSETS,
    aligned_target_mask,
    anchor_cascade,
    apply_mask,
    bce_loss,
    gt_mask,
    half_cell_diagonal,
    mask_metrics,
    point_mesh_distance,
    pruned_grid,
    redundancy_report,
    shuffled_alignment_roundtrip,
    surrogate_scores,
    upsample_traditional,
)
from src.errors import ContainmentError, GridError, LengthMismatchError
from src.fixtures import all_fixtures, fixture
from src.mesh_io import make_primitive
from src.sparse_voxel import SparseVoxelGrid, VoxelMask, canonicalize, shuffled_order
from src.voxelizer import voxelize_surface


class TestUpsample:
    def test_children_of_one_voxel(self):
        up = upsample_traditional(canonicalize([[1, 2, 3]], 4))
        assert up.resolution == 8
        np.testing.assert_array_equal(up.coords, np.array([2, 4, 6]) + CHILD_OFFSETS)

    def test_eight_children_each(self):
        rng = np.random.default_rng(42)
        grid = canonicalize(rng.integers(0, 16, (300, 3)), 16)
        up = upsample_traditional(grid)
        assert len(up) == 8 * len(grid)
        assert np.all(np.diff(up.keys()) > 0)

    def test_empty(self):
        assert len(upsample_traditional(SparseVoxelGrid.empty(8))) == 0

    def test_resolution_cap(self):
        with pytest.raises(GridError):
            upsample_traditional(SparseVoxelGrid.empty(4096))


class TestGtMask:
    @pytest.mark.parametrize("name", sorted(all_fixtures()))
    def test_containment_and_exact_recovery(self, name):
        mesh = fixture(name).mesh
        candidates = upsample_traditional(voxelize_surface(mesh, 16))
        truth = voxelize_surface(mesh, 32)
        mask = gt_mask(candidates, truth)
        assert mask.popcount == len(truth)
        np.testing.assert_array_equal(apply_mask(candidates, mask).coords, truth.coords)

    def test_missing_truth_voxel_raises(self):
        candidates = upsample_traditional(canonicalize([[0, 0, 0]], 4))
        truth = canonicalize([[0, 0, 0], [7, 7, 7]], 8)
        with pytest.raises(ContainmentError) as exc:
            gt_mask(candidates, truth)
        assert exc.value.missing == [[7, 7, 7]]

    def test_apply_mask_rejects_soft(self):
        grid = canonicalize([[0, 0, 0]], 4)
        with pytest.raises(GridError):
            apply_mask(grid, VoxelMask(np.array([0.7]), soft=True))

    def test_aligned_target_mask_follows_predicted_order(self, sphere):
        candidates = upsample_traditional(voxelize_surface(sphere, 8))
        truth = voxelize_surface(sphere, 16)
        order = shuffled_order(candidates, np.random.default_rng(3))
        mask = aligned_target_mask(candidates, truth, order)
        np.testing.assert_array_equal(mask.values, truth.contains(order))

    def test_shuffled_roundtrip_is_exact(self, torus):
        candidates = upsample_traditional(voxelize_surface(torus, 16))
        truth = voxelize_surface(torus, 32)
        expected = gt_mask(candidates, truth).values
        for i in range(5):
            trip = shuffled_alignment_roundtrip(candidates, truth, np.random.default_rng([42, i]))
            np.testing.assert_array_equal(trip.recovered_mask.values, expected)


class TestRedundancy:
    def test_aligned_plane_is_exactly_half(self):
        report = redundancy_report(fixture("plane_aligned").mesh, 16)
        assert report.redundancy_ratio == 0.5
        assert report.candidate_count == 8 * report.parent_count

    def test_closed_fixture_band(self):
        closed = [name for name, fx in all_fixtures().items() if fx.redundancy_band_applies]
        assert "cube" in closed and "plane_tilted" not in closed
        for name in closed:
            ratio = redundancy_report(fixture(name).mesh, 32).redundancy_ratio
            assert 0.45 <= ratio <= 0.80, name

    def test_cube_ratio_from_shell_counts(self):
        # one cell layer per face: 6R^2 - 12R + 8 surface cells at each resolution
        report = redundancy_report(fixture("cube").mesh, 32)
        assert (report.parent_count, report.surface_count) == (5768, 23816)
        assert report.redundancy_ratio == pytest.approx(1 - 23816 / 46144)

    def test_report_has_timings(self, sphere):
        report = redundancy_report(sphere, 8)
        assert set(report.timings) == {"voxelize_coarse_s", "upsample_s", "voxelize_fine_s", "gt_mask_s"}

    def test_cascade_levels_carry_timings(self, sphere):
        for lvl in anchor_cascade(sphere, 8, levels=2):
            assert set(lvl.report.timings) == {"voxelize_coarse_s", "upsample_s", "voxelize_fine_s", "gt_mask_s"}
            assert all(v >= 0.0 for v in lvl.report.timings.values())

    def test_cascade_levels_chain(self, sphere):
        levels = anchor_cascade(sphere, 8, levels=3)
        assert [lvl.resolution for lvl in levels] == [8, 16, 32]
        for lower, upper in zip(levels, levels[1:]):
            np.testing.assert_array_equal(upper.candidates.coords, upsample_traditional(lower.truth).coords)
        for lvl in levels:
            np.testing.assert_array_equal(apply_mask(lvl.candidates, lvl.mask).coords, lvl.truth.coords)

    def test_pruned_grid_equals_fine_voxelization(self, torus):
        np.testing.assert_array_equal(pruned_grid(torus, 16).coords, voxelize_surface(torus, 32).coords)


class TestSurrogate:
    def test_point_mesh_distance(self):
        cube = make_primitive("cube")
        points = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.9], [0.2, 0.1, 0.0], [0.7, 0.7, 0.0]])
        expected = [0.5, 0.4, 0.3, math.hypot(0.2, 0.2)]
        np.testing.assert_allclose(point_mesh_distance(points, cube), expected, atol=1e-12)

    def test_scores_are_probabilities(self, sphere):
        candidates = upsample_traditional(voxelize_surface(sphere, 8))
        scores = surrogate_scores(candidates, sphere, half_cell_diagonal(), 50.0)
        assert scores.soft
        assert len(scores) == len(candidates)
        assert scores.values.min() >= 0.0 and scores.values.max() <= 1.0

    def test_recall_on_sphere(self, sphere):
        candidates = upsample_traditional(voxelize_surface(sphere, 16))
        target = gt_mask(candidates, voxelize_surface(sphere, 32))
        metrics = mask_metrics(surrogate_scores(candidates, sphere, half_cell_diagonal(), 50.0), target)
        assert metrics.recall > 0.95

    def test_rejects_bad_parameters(self, sphere):
        with pytest.raises(GridError):
            surrogate_scores(voxelize_surface(sphere, 8), sphere, 0.0, 50.0)


class TestLosses:
    def test_bce_at_one_half(self):
        target = VoxelMask(np.array([1, 0, 1, 1, 0], dtype=bool))
        assert bce_loss(VoxelMask(np.full(5, 0.5), soft=True), target) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_bce_is_clipped(self):
        target = VoxelMask(np.array([True, False]))
        loss = bce_loss(VoxelMask(np.array([0.0, 1.0]), soft=True), target)
        assert np.isfinite(loss)
        assert loss == pytest.approx(-math.log(1e-7), rel=1e-6)

    def test_bce_of_exact_prediction_is_near_zero(self):
        target = VoxelMask(np.array([1, 0, 0, 1, 1], dtype=bool))
        pred = VoxelMask(target.values.astype(np.float64), soft=True)
        assert 0.0 < bce_loss(pred, target) < 1e-6

    def test_bce_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            bce_loss(VoxelMask(np.full(3, 0.5), soft=True), VoxelMask(np.ones(4, dtype=bool)))

    def test_metrics_with_ten_flips(self):
        # 100 positives among 1000, 10 positives predicted negative and 10 negatives predicted positive
        target = np.zeros(1000, dtype=bool)
        target[:100] = True
        pred = target.copy()
        pred[:10] = False
        pred[100:110] = True
        metrics = mask_metrics(VoxelMask(pred), VoxelMask(target))
        assert metrics.precision == pytest.approx(0.9)
        assert metrics.recall == pytest.approx(0.9)
        assert metrics.iou == pytest.approx(90 / 110)
        assert (metrics.true_positive, metrics.false_positive, metrics.false_negative) == (90, 10, 10)
        assert metrics.true_negative == 890

    def test_all_zero_prediction(self):
        target = np.zeros(50, dtype=bool)
        target[::5] = True
        metrics = mask_metrics(VoxelMask(np.zeros(50, dtype=bool)), VoxelMask(target))
        assert (metrics.precision, metrics.recall, metrics.iou) == (1.0, 0.0, 0.0)
        assert (metrics.true_positive, metrics.false_negative) == (0, 10)

    def test_empty_conventions(self):
        metrics = mask_metrics(VoxelMask(np.zeros(5, dtype=bool)), VoxelMask(np.zeros(5, dtype=bool)))
        assert (metrics.precision, metrics.recall, metrics.iou) == (1.0, 1.0, 1.0)
        empty = mask_metrics(VoxelMask(np.zeros(0, dtype=bool)), VoxelMask(np.zeros(0, dtype=bool)))
        assert empty.iou == 1.0
