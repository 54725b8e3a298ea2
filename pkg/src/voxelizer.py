"""
Conservative surface voxelization.

A cell is active iff at least one triangle intersects its closed AABB, decided
by the separating-axis test (3 box axes, the triangle normal, 9 edge cross
products). Both the binned voxelizer and the dense oracle call the same
overlap routine on the same cell centers, so boundary ties resolve
identically in both.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List

import numpy as np

from .config import log
from .errors import GridError, MeshError
from .mesh_io import TriangleMesh
from .sparse_voxel import (
    SparseVoxelGrid,
    canonicalize,
    cell_centers,
    coords_to_keys,
    missing_from,
)

MIN_RESOLUTION = 4
MAX_RESOLUTION = 1024
ORACLE_MAX_RESOLUTION = 32
NORMALIZED_TOLERANCE = 1e-9

_UNIT_AXES = np.eye(3)


def triangle_box_overlap(corners: np.ndarray, centers: np.ndarray, half: float) -> np.ndarray:
    """Closed-box SAT test of one triangle (3, 3) against N cubes of half-size `half`.

    Projections are evaluated with elementwise products only, so the result for
    a given cell does not depend on how many other cells are tested with it.
    """
    corners = np.asarray(corners, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    v0 = corners[0] - centers
    v1 = corners[1] - centers
    v2 = corners[2] - centers
    hit = np.ones(len(centers), dtype=bool)

    # box face normals
    for k in range(3):
        lo = np.minimum(v0[:, k], np.minimum(v1[:, k], v2[:, k]))
        hi = np.maximum(v0[:, k], np.maximum(v1[:, k], v2[:, k]))
        hit &= (lo <= half) & (hi >= -half)

    edges = (corners[1] - corners[0], corners[2] - corners[1], corners[0] - corners[2])
    axes = [np.cross(edges[0], edges[1])]
    axes += [np.cross(_UNIT_AXES[j], e) for e in edges for j in range(3)]

    for a in axes:
        a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
        radius = half * (abs(a0) + abs(a1) + abs(a2))
        p0 = v0[:, 0] * a0 + v0[:, 1] * a1 + v0[:, 2] * a2
        p1 = v1[:, 0] * a0 + v1[:, 1] * a1 + v1[:, 2] * a2
        p2 = v2[:, 0] * a0 + v2[:, 1] * a1 + v2[:, 2] * a2
        lo = np.minimum(p0, np.minimum(p1, p2))
        hi = np.maximum(p0, np.maximum(p1, p2))
        hit &= (lo <= radius) & (hi >= -radius)

    return hit


def _check_mesh(mesh: TriangleMesh):
    if not mesh.is_normalized(NORMALIZED_TOLERANCE):
        worst = float(np.max(np.abs(mesh.vertices)))
        raise MeshError(
            f"Mesh is not normalized to [-0.5, 0.5]^3 (max |coordinate| = {worst:.6g}); "
            "run normalize_mesh first"
        )


def _check_resolution(resolution: int):
    if not (MIN_RESOLUTION <= resolution <= MAX_RESOLUTION) or resolution & (resolution - 1):
        raise GridError(
            f"Resolution must be a power of two in [{MIN_RESOLUTION}, {MAX_RESOLUTION}] "
            f"(got {resolution})"
        )


def _voxelize_chunk(corners: np.ndarray, resolution: int) -> np.ndarray:
    half = 0.5 / resolution
    tri_lo = corners.min(axis=1)
    tri_hi = corners.max(axis=1)
    # one extra cell on each side absorbs rounding in the bin computation
    lo = np.clip(np.floor((tri_lo + 0.5) * resolution).astype(np.int64) - 1, 0, resolution - 1)
    hi = np.clip(np.floor((tri_hi + 0.5) * resolution).astype(np.int64) + 1, 0, resolution - 1)

    found: List[np.ndarray] = []
    for t in range(len(corners)):
        (x0, y0, z0), (x1, y1, z1) = lo[t], hi[t]
        cells = np.mgrid[x0:x1 + 1, y0:y1 + 1, z0:z1 + 1].reshape(3, -1).T
        hit = triangle_box_overlap(corners[t], cell_centers(cells, resolution), half)
        if np.any(hit):
            found.append(coords_to_keys(cells[hit], resolution))
    if not found:
        return np.zeros(0, dtype=np.int64)
    return np.unique(np.concatenate(found))


def voxelize_surface(mesh: TriangleMesh, resolution: int, threads: int = 1) -> SparseVoxelGrid:
    """Conservative surface voxelization with triangles binned by their AABB cell range."""
    _check_resolution(resolution)
    _check_mesh(mesh)
    if mesh.is_empty:
        return SparseVoxelGrid.empty(resolution)

    corners = mesh.corners()
    if threads <= 1 or mesh.tri_count < 2 * threads:
        keys = _voxelize_chunk(corners, resolution)
    else:
        chunks = np.array_split(corners, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: _voxelize_chunk(c, resolution), chunks))
        keys = np.unique(np.concatenate(parts))

    grid = SparseVoxelGrid.from_keys(keys, resolution)
    log("voxelizer", f"R={resolution}: {mesh.tri_count} triangles -> {len(grid)} voxels", "DEBUG")
    return grid


def voxelize_dense_oracle(mesh: TriangleMesh, resolution: int) -> SparseVoxelGrid:
    """Reference voxelization: every cell against every triangle, no acceleration."""
    if not 1 <= resolution <= ORACLE_MAX_RESOLUTION:
        raise GridError(
            f"Dense oracle supports resolutions in [1, {ORACLE_MAX_RESOLUTION}] (got {resolution})"
        )
    _check_mesh(mesh)
    if mesh.is_empty:
        return SparseVoxelGrid.empty(resolution)

    cells = np.indices((resolution,) * 3).reshape(3, -1).T
    centers = cell_centers(cells, resolution)
    half = 0.5 / resolution
    active = np.zeros(len(cells), dtype=bool)
    for corners in mesh.corners():
        active |= triangle_box_overlap(corners, centers, half)
    return canonicalize(cells[active], resolution)


def parent_closure_violations(fine: SparseVoxelGrid, coarse: SparseVoxelGrid) -> SparseVoxelGrid:
    """Parents of fine cells (at coarse resolution) that coarse does not contain."""
    if fine.resolution != 2 * coarse.resolution:
        raise GridError(
            f"Fine resolution {fine.resolution} is not twice coarse resolution {coarse.resolution}"
        )
    parents = canonicalize(fine.coords.astype(np.int64) // 2, coarse.resolution)
    return missing_from(coarse, parents)
