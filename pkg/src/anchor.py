"""
Surface-anchoring pipeline.

Traditional upsampling turns every voxel at resolution R into its 8 children
at 2R. Most of those candidates are off-surface; the ground-truth mask marks
the ones that survive (the true 2R surface voxels), and a mask predictor is
supervised against it with binary cross-entropy. The predictor here is a
distance-logistic surrogate, so the supervision and evaluation path can be
exercised without training a network.
"""

import time
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
import trimesh
from scipy.spatial import cKDTree
from scipy.special import expit
from sklearn.metrics import confusion_matrix, jaccard_score, precision_score, recall_score

from .config import log
from .errors import ContainmentError, GridError, LengthMismatchError, MeshError
from .mesh_io import TriangleMesh
from .models import MaskMetrics, UpsampleReport
from .sparse_voxel import (
    MAX_RESOLUTION,
    SparseVoxelGrid,
    VoxelMask,
    apply_permutation,
    coords_to_keys,
    hash_align,
    inverse_permutation,
    membership_mask,
    missing_from,
    shuffled_order,
)
from .voxelizer import voxelize_surface

BCE_EPS = 1e-7

# offsets of the 8 children, in (dx, dy, dz) lexicographic order
CHILD_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)], dtype=np.int64
)


def upsample_traditional(grid: SparseVoxelGrid) -> SparseVoxelGrid:
    """Replace every voxel at R by its 8 children at 2R."""
    fine = 2 * grid.resolution
    if fine > MAX_RESOLUTION:
        raise GridError(f"Upsampling R={grid.resolution} would exceed resolution {MAX_RESOLUTION}")
    if len(grid) == 0:
        return SparseVoxelGrid.empty(fine)
    children = (2 * grid.coords.astype(np.int64))[:, None, :] + CHILD_OFFSETS[None, :, :]
    # children of distinct parents never collide, so sorting is all that is needed
    keys = np.sort(coords_to_keys(children.reshape(-1, 3), fine))
    return SparseVoxelGrid.from_keys(keys, fine)


def gt_mask(candidates: SparseVoxelGrid, truth: SparseVoxelGrid) -> VoxelMask:
    """Hard mask over the candidates: 1 where the candidate is a true surface voxel."""
    missing = missing_from(candidates, truth)
    if len(missing):
        raise ContainmentError(missing.coords)
    mask = VoxelMask(np.isin(candidates.keys(), truth.keys(), assume_unique=True))
    return mask


def apply_mask(grid: SparseVoxelGrid, mask: VoxelMask) -> SparseVoxelGrid:
    """Keep exactly the voxels whose mask entry is 1."""
    if mask.soft:
        raise GridError("apply_mask needs a hard mask; threshold soft scores first")
    mask.check_owner(grid)
    return SparseVoxelGrid(grid.resolution, grid.coords[mask.values])


def aligned_target_mask(
    candidates: SparseVoxelGrid, truth: SparseVoxelGrid, predicted_order
) -> VoxelMask:
    """Ground-truth mask reordered to match a predictor's own voxel order."""
    mask = gt_mask(candidates, truth)
    return apply_permutation(mask, hash_align(candidates, predicted_order))


def redundancy_report(mesh: TriangleMesh, resolution: int, threads: int = 1) -> UpsampleReport:
    """Voxelize at R and 2R, upsample R, and count how many candidates are on the surface."""
    timings = {}

    start = time.perf_counter()
    coarse = voxelize_surface(mesh, resolution, threads=threads)
    timings["voxelize_coarse_s"] = time.perf_counter() - start

    start = time.perf_counter()
    candidates = upsample_traditional(coarse)
    timings["upsample_s"] = time.perf_counter() - start

    start = time.perf_counter()
    truth = voxelize_surface(mesh, 2 * resolution, threads=threads)
    timings["voxelize_fine_s"] = time.perf_counter() - start

    start = time.perf_counter()
    mask = gt_mask(candidates, truth)
    timings["gt_mask_s"] = time.perf_counter() - start

    report = UpsampleReport.from_counts(resolution, len(coarse), mask.popcount, timings)
    log(
        "anchor",
        f"R={resolution}->{2 * resolution}: {report.candidate_count} candidates, "
        f"{report.surface_count} on surface, redundancy {report.redundancy_ratio:.2%}",
    )
    return report


@dataclass(frozen=True)
class AnchorLevel:
    """One doubling step of a multi-resolution GT-mask cascade."""

    resolution: int
    candidates: SparseVoxelGrid
    truth: SparseVoxelGrid
    mask: VoxelMask
    report: UpsampleReport


def anchor_cascade(
    mesh: TriangleMesh, base_resolution: int, levels: int = 2, threads: int = 1
) -> List[AnchorLevel]:
    """GT masks for `levels` successive doublings starting at base_resolution."""
    if levels < 1:
        raise GridError("levels must be >= 1")
    start = time.perf_counter()
    coarse = voxelize_surface(mesh, base_resolution, threads=threads)
    coarse_s = time.perf_counter() - start
    result = []
    for _ in range(levels):
        # each finer level reuses the previous truth as its coarse grid
        timings = {"voxelize_coarse_s": coarse_s}

        start = time.perf_counter()
        candidates = upsample_traditional(coarse)
        timings["upsample_s"] = time.perf_counter() - start

        start = time.perf_counter()
        truth = voxelize_surface(mesh, 2 * coarse.resolution, threads=threads)
        timings["voxelize_fine_s"] = time.perf_counter() - start

        start = time.perf_counter()
        mask = gt_mask(candidates, truth)
        timings["gt_mask_s"] = time.perf_counter() - start

        report = UpsampleReport.from_counts(coarse.resolution, len(coarse), mask.popcount, timings)
        coarse_s = 0.0
        result.append(AnchorLevel(coarse.resolution, candidates, truth, mask, report))
        coarse = truth
    return result


# --- Surrogate mask predictor ---

def point_mesh_distance(points: np.ndarray, mesh: TriangleMesh, chunk: int = 256) -> np.ndarray:
    """Exact distance from each point to the closest point on the mesh surface."""
    if mesh.is_empty:
        raise MeshError("Distance to an empty mesh is undefined")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        return np.zeros(0)

    corners = mesh.corners()
    tri_lo, tri_hi = corners.min(axis=1), corners.max(axis=1)
    used = mesh.vertices[np.unique(mesh.triangles)]
    # distance to the nearest mesh vertex bounds the surface distance from above
    upper, _ = cKDTree(used).query(points)

    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        box_lo, box_hi = block.min(axis=0), block.max(axis=0)
        gap = np.maximum(0.0, np.maximum(tri_lo - box_hi, box_lo - tri_hi))
        near = np.flatnonzero(np.linalg.norm(gap, axis=1) <= upper[start:start + chunk].max())

        n, m = len(block), len(near)
        query = np.repeat(block, m, axis=0)
        closest = trimesh.triangles.closest_point(np.tile(corners[near], (n, 1, 1)), query)
        dist = np.linalg.norm(closest - query, axis=1).reshape(n, m)
        out[start:start + chunk] = dist.min(axis=1)
    return out


def surrogate_scores(
    candidates: SparseVoxelGrid, mesh: TriangleMesh, tau: float, beta: float
) -> VoxelMask:
    """score(v) = sigmoid(beta * (tau - d(v) / cell_size)), tau in cell units."""
    if tau <= 0 or beta <= 0:
        raise GridError(f"tau and beta must be positive (got tau={tau}, beta={beta})")
    if mesh.is_empty:
        raise MeshError("Surrogate scores need a non-empty mesh")
    if len(candidates) == 0:
        return VoxelMask(np.zeros(0), soft=True)
    d = point_mesh_distance(candidates.world_centers(), mesh)
    return VoxelMask(expit(beta * (tau - d / candidates.cell_size)), soft=True)


def half_cell_diagonal() -> float:
    """Half the cell diagonal in cell units: every point of a cell is this close to its center."""
    return float(np.sqrt(3.0) / 2.0)


# --- Supervision and evaluation ---

def _check_lengths(pred: VoxelMask, target: VoxelMask):
    if len(pred) != len(target):
        raise LengthMismatchError("prediction vs target", len(target), len(pred))


def bce_loss(pred: VoxelMask, target: VoxelMask, eps: float = BCE_EPS) -> float:
    """Mean binary cross-entropy of soft predictions against a hard target."""
    _check_lengths(pred, target)
    if len(pred) == 0:
        return 0.0
    p = np.clip(pred.values.astype(np.float64), eps, 1.0 - eps)
    t = target.values.astype(np.float64)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def mask_metrics(pred: VoxelMask, target: VoxelMask, threshold: float = 0.5) -> MaskMetrics:
    """Precision, recall and IoU of the thresholded prediction.

    Conventions: an empty prediction has precision 1, an empty target recall 1,
    and IoU is 1 when both are empty.
    """
    _check_lengths(pred, target)
    if not 0.0 <= threshold <= 1.0:
        raise GridError(f"threshold must be in [0, 1] (got {threshold})")
    y_pred = pred.values.astype(np.float64) >= threshold
    y_true = target.values.astype(bool)

    if len(y_true) == 0:
        return MaskMetrics(threshold=threshold, precision=1.0, recall=1.0, iou=1.0,
                           true_positive=0, false_positive=0, false_negative=0, true_negative=0)

    tn, fp, fn, tp = confusion_matrix(y_true, y_pred, labels=[False, True]).ravel()
    return MaskMetrics(
        threshold=threshold,
        precision=float(precision_score(y_true, y_pred, zero_division=1)),
        recall=float(recall_score(y_true, y_pred, zero_division=1)),
        iou=float(jaccard_score(y_true, y_pred, zero_division=1)),
        true_positive=int(tp),
        false_positive=int(fp),
        false_negative=int(fn),
        true_negative=int(tn),
    )


def pruned_grid(mesh: TriangleMesh, resolution: int, threads: int = 1,
                mask: Optional[VoxelMask] = None) -> SparseVoxelGrid:
    """The 2R grid obtained by masking the upsampled R grid (GT mask unless one is given)."""
    coarse = voxelize_surface(mesh, resolution, threads=threads)
    candidates = upsample_traditional(coarse)
    if mask is None:
        mask = gt_mask(candidates, voxelize_surface(mesh, 2 * resolution, threads=threads))
    return apply_mask(candidates, mask)


class AlignmentRoundTrip(NamedTuple):
    order: np.ndarray
    shuffled_mask: VoxelMask
    recovered_mask: VoxelMask


def shuffled_alignment_roundtrip(
    candidates: SparseVoxelGrid, truth: SparseVoxelGrid, rng: np.random.Generator
) -> AlignmentRoundTrip:
    """Label candidates in a random order, then map the labels back to canonical order.

    recovered_mask must equal gt_mask(candidates, truth) bit for bit.
    """
    order = shuffled_order(candidates, rng)
    shuffled = membership_mask(order, truth)
    back = inverse_permutation(hash_align(candidates, order))
    return AlignmentRoundTrip(order, shuffled, apply_permutation(shuffled, back))
