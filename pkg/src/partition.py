"""
View-domain partitioning.

The image is split into a grid of tiles. Each tile owns a disjoint core and
carries an overlap margin; its sub-frustum culls the voxel set down to what
can touch the tile, so a tile is rendered and supervised with only a fraction
of the scene resident.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .config import config, log
from .errors import CameraError, GridError, TilingError
from .models import CameraModel, PartitionReport, PixelRect, Tile, TileStats
from .sparse_voxel import SparseVoxelGrid

_MASK64 = (1 << 64) - 1
PLANE_NAMES = ("left", "right", "top", "bottom", "near", "far")


# --- Cameras ---

def world_to_camera(camera: CameraModel, points: np.ndarray) -> np.ndarray:
    """Camera-space coordinates of world points, one row per point.

    Written out per component so a point's result does not depend on the
    batch it is transformed in.
    """
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    r, t = camera.R, camera.t
    x, y, z = p[:, 0], p[:, 1], p[:, 2]
    return np.stack(
        [r[i, 0] * x + r[i, 1] * y + r[i, 2] * z + t[i] for i in range(3)], axis=1
    )


def camera_to_world(camera: CameraModel, points: np.ndarray) -> np.ndarray:
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3) - camera.t
    return p @ camera.R


def look_at(
    eye: Sequence[float],
    target: Sequence[float] = (0.0, 0.0, 0.0),
    up: Sequence[float] = (0.0, 1.0, 0.0),
    width: Optional[int] = None,
    height: Optional[int] = None,
    fov_degrees: Optional[float] = None,
    near: Optional[float] = None,
    far: Optional[float] = None,
) -> CameraModel:
    """Pinhole camera at eye looking at target, world `up` mapped to image up."""
    defaults = config.render
    width = defaults.width if width is None else width
    height = defaults.height if height is None else height
    fov_degrees = defaults.fov_degrees if fov_degrees is None else fov_degrees
    near = defaults.near if near is None else near
    far = defaults.far if far is None else far

    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise CameraError("eye and target coincide")
    forward /= norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise CameraError("up vector is parallel to the viewing direction")
    right /= norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])

    if not 0.0 < fov_degrees < 180.0:
        raise CameraError(f"fov must be in (0, 180) degrees (got {fov_degrees})")
    focal = width / (2.0 * np.tan(np.radians(fov_degrees) / 2.0))
    return CameraModel(
        fx=focal,
        fy=focal,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        rotation=rotation.tolist(),
        translation=(-rotation @ eye).tolist(),
        near=near,
        far=far,
    )


def random_cameras(
    count: int,
    seed: int,
    distance: Optional[float] = None,
    width: Optional[int] = None,
    height: Optional[int] = None,
    fov_degrees: Optional[float] = None,
) -> List[CameraModel]:
    """Cameras on a sphere around the origin, all looking at the origin."""
    distance = config.render.camera_distance if distance is None else distance
    rng = np.random.default_rng(seed)
    cameras = []
    for _ in range(count):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        up = (0.0, 1.0, 0.0) if abs(direction[1]) < 0.99 else (0.0, 0.0, 1.0)
        cameras.append(
            look_at(direction * distance, up=up, width=width, height=height,
                    fov_degrees=fov_degrees)
        )
    return cameras


# --- Tiles ---

def _split(start: int, length: int, n: int) -> List[Tuple[int, int]]:
    base, extra = divmod(length, n)
    spans, pos = [], start
    for i in range(n):
        size = base + (1 if i < extra else 0)
        spans.append((pos, size))
        pos += size
    return spans


def full_image_rect(camera: CameraModel) -> PixelRect:
    return PixelRect(x0=0, y0=0, w=camera.width, h=camera.height)


def make_tiles(
    camera: CameraModel, grid_n: int, margin: int, region: Optional[PixelRect] = None
) -> List[Tile]:
    """grid_n x grid_n tiles whose cores partition `region` (default: the whole image).

    Core sizes differ by at most one pixel; the first rows/columns take the
    remainder. Expanded rects are the cores grown by `margin` and clipped to
    the image.
    """
    if camera.width == 0 or camera.height == 0:
        raise TilingError("Cannot tile a zero-sized image")
    if grid_n < 1:
        raise TilingError(f"grid_n must be >= 1 (got {grid_n})")
    if margin < 0:
        raise TilingError(f"margin must be >= 0 (got {margin})")
    image = full_image_rect(camera)
    region = image if region is None else region
    if not image.contains(region) or region.area == 0:
        raise TilingError("Tiling region must be a non-empty rect inside the image")
    if grid_n > region.w or grid_n > region.h:
        raise TilingError(
            f"grid_n={grid_n} exceeds the region size {region.w}x{region.h}",
            grid_n=grid_n,
        )

    tiles = []
    for row, (y0, h) in enumerate(_split(region.y0, region.h, grid_n)):
        for col, (x0, w) in enumerate(_split(region.x0, region.w, grid_n)):
            ex0, ey0 = max(x0 - margin, 0), max(y0 - margin, 0)
            ex1, ey1 = min(x0 + w + margin, camera.width), min(y0 + h + margin, camera.height)
            tiles.append(
                Tile(
                    index=len(tiles),
                    row=row,
                    col=col,
                    core=PixelRect(x0=x0, y0=y0, w=w, h=h),
                    margin=margin,
                    expanded=PixelRect(x0=ex0, y0=ey0, w=ex1 - ex0, h=ey1 - ey0),
                )
            )
    return tiles


def full_image_tile(camera: CameraModel) -> Tile:
    return make_tiles(camera, 1, 0)[0]


def core_coverage(tiles: Sequence[Tile], width: int, height: int) -> np.ndarray:
    """How many tile cores cover each pixel; an exact tiling is all ones."""
    counts = np.zeros((height, width), dtype=np.int32)
    for tile in tiles:
        counts[tile.core.slices()] += 1
    return counts


def splitmix64(value: int) -> int:
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def sample_tile(tiles: Sequence[Tile], seed: int, step: int) -> Tile:
    """Tile for training step `step`: splitmix64(seed xor step) mod tile count."""
    if not tiles:
        raise TilingError("Cannot sample from an empty tile list")
    value = splitmix64((seed & _MASK64) ^ (step & _MASK64))
    return tiles[value % len(tiles)]


def sample_schedule(tiles: Sequence[Tile], seed: int, steps: int) -> List[int]:
    return [sample_tile(tiles, seed, step).index for step in range(steps)]


# --- Frusta ---

@dataclass(frozen=True)
class TileFrustum:
    """Six world-space planes; a point p is inside iff normals @ p + offsets >= 0 for all."""

    normals: np.ndarray
    offsets: np.ndarray

    def __post_init__(self):
        normals = np.asarray(self.normals, dtype=np.float64).reshape(6, 3)
        offsets = np.asarray(self.offsets, dtype=np.float64).reshape(6)
        if not np.allclose(np.linalg.norm(normals, axis=1), 1.0, atol=1e-12):
            raise CameraError("Frustum plane normals must be unit length")
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "offsets", offsets)

    def signed_distances(self, points: np.ndarray) -> np.ndarray:
        """(N, 6) signed distances, positive inside."""
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        n = self.normals
        return np.stack(
            [n[k, 0] * p[:, 0] + n[k, 1] * p[:, 1] + n[k, 2] * p[:, 2] + self.offsets[k]
             for k in range(6)],
            axis=1,
        )

    def contains(self, points: np.ndarray, tolerance: float = 0.0) -> np.ndarray:
        return np.all(self.signed_distances(points) >= -tolerance, axis=1)


def _to_world(camera: CameraModel, normals_c: np.ndarray, offsets_c: np.ndarray,
              side_margin: float) -> TileFrustum:
    # n_c . (R p + t) + d_c = (R^T n_c) . p + (n_c . t + d_c)
    normals = normals_c @ camera.R
    offsets = normals_c @ camera.t + offsets_c
    offsets[:4] += side_margin
    return TileFrustum(normals / np.linalg.norm(normals, axis=1, keepdims=True), offsets)


def _depth_planes(camera: CameraModel) -> Tuple[np.ndarray, np.ndarray]:
    return np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]]), np.array([-camera.near, camera.far])


def pixel_ray(camera: CameraModel, u: float, v: float) -> np.ndarray:
    """Camera-space direction through image point (u, v), with z = 1."""
    return np.array([(u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0])


def tile_frustum(camera: CameraModel, tile: Tile, world_margin: float = 0.0) -> TileFrustum:
    """Frustum of the tile's expanded rect, side planes pushed out by world_margin."""
    rect = tile.expanded
    if not full_image_rect(camera).contains(rect):
        raise TilingError(f"Tile {tile.index} lies outside the {camera.width}x{camera.height} image")
    if rect.area == 0:
        raise CameraError(f"Tile {tile.index} has an empty expanded rect")
    if world_margin < 0:
        raise CameraError(f"world_margin must be >= 0 (got {world_margin})")

    tl = pixel_ray(camera, rect.x0, rect.y0)
    tr = pixel_ray(camera, rect.x1, rect.y0)
    bl = pixel_ray(camera, rect.x0, rect.y1)
    br = pixel_ray(camera, rect.x1, rect.y1)
    center = pixel_ray(camera, (rect.x0 + rect.x1) / 2.0, (rect.y0 + rect.y1) / 2.0)

    sides = []
    for a, b in ((tl, bl), (tr, br), (tl, tr), (bl, br)):
        n = np.cross(a, b)
        norm = np.linalg.norm(n)
        if norm < 1e-15:
            raise CameraError("Degenerate tile frustum")
        n /= norm
        sides.append(n if n @ center > 0 else -n)

    depth_normals, depth_offsets = _depth_planes(camera)
    normals_c = np.vstack([np.array(sides), depth_normals])
    offsets_c = np.concatenate([np.zeros(4), depth_offsets])
    return _to_world(camera, normals_c, offsets_c, world_margin)


def camera_frustum(camera: CameraModel, world_margin: float = 0.0) -> TileFrustum:
    """Whole-image frustum read straight off the intrinsics."""
    if camera.width == 0 or camera.height == 0:
        raise CameraError("Camera has a zero-sized image")
    sides = np.array([
        [camera.fx, 0.0, camera.cx],
        [-camera.fx, 0.0, camera.width - camera.cx],
        [0.0, camera.fy, camera.cy],
        [0.0, -camera.fy, camera.height - camera.cy],
    ])
    sides /= np.linalg.norm(sides, axis=1, keepdims=True)
    depth_normals, depth_offsets = _depth_planes(camera)
    normals_c = np.vstack([sides, depth_normals])
    offsets_c = np.concatenate([np.zeros(4), depth_offsets])
    return _to_world(camera, normals_c, offsets_c, world_margin)


def splat_world_margin(camera: CameraModel, splat_radius_px: float) -> float:
    """World distance covering a splat of the given pixel radius at any depth up to far."""
    return float(splat_radius_px) * camera.far / min(camera.fx, camera.fy)


# --- Culling ---

class CullResult(NamedTuple):
    grid: SparseVoxelGrid
    kept_count: int
    total_count: int


def cull_voxels(
    grid: SparseVoxelGrid, frustum: TileFrustum, voxel_world_size: Optional[float] = None
) -> CullResult:
    """Keep voxels whose bounding sphere reaches inside the frustum."""
    size = grid.cell_size if voxel_world_size is None else voxel_world_size
    if size < 0:
        raise GridError(f"voxel_world_size must be >= 0 (got {size})")
    if len(grid) == 0:
        return CullResult(grid, 0, 0)
    keep = frustum.contains(grid.world_centers(), tolerance=size * np.sqrt(3.0) / 2.0)
    kept = SparseVoxelGrid(grid.resolution, grid.coords[keep])
    return CullResult(kept, len(kept), len(grid))


def cull_tiles(
    grid: SparseVoxelGrid,
    camera: CameraModel,
    tiles: Sequence[Tile],
    world_margin: float,
    voxel_world_size: Optional[float] = None,
    threads: int = 1,
) -> List[CullResult]:
    """Cull the grid once per tile; results follow the order of `tiles`."""

    def run(tile: Tile) -> CullResult:
        return cull_voxels(grid, tile_frustum(camera, tile, world_margin), voxel_world_size)

    if threads <= 1:
        return [run(tile) for tile in tiles]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, tiles))


def foreground_region(grid: SparseVoxelGrid, camera: CameraModel, pad_px: int = 0) -> PixelRect:
    """Image rect covering the projection of the grid's world AABB, padded and clipped.

    Falls back to the full image when the grid is empty or its box reaches
    behind the camera.
    """
    image = full_image_rect(camera)
    if len(grid) == 0:
        return image
    centers = grid.world_centers()
    half = grid.cell_size / 2.0
    lo, hi = centers.min(axis=0) - half, centers.max(axis=0) + half
    box = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    cam = world_to_camera(camera, box)
    if np.any(cam[:, 2] <= 0):
        return image
    u = camera.fx * cam[:, 0] / cam[:, 2] + camera.cx
    v = camera.fy * cam[:, 1] / cam[:, 2] + camera.cy
    x0 = max(int(np.floor(u.min() - pad_px)), 0)
    y0 = max(int(np.floor(v.min() - pad_px)), 0)
    x1 = min(int(np.ceil(u.max() + pad_px)), camera.width)
    y1 = min(int(np.ceil(v.max() + pad_px)), camera.height)
    if x1 <= x0 or y1 <= y0:
        raise TilingError("Foreground region lies outside the image")
    return PixelRect(x0=x0, y0=y0, w=x1 - x0, h=y1 - y0)


def tile_stats(
    grid: SparseVoxelGrid,
    camera: CameraModel,
    grid_n: int,
    margin_px: int,
    world_margin: float,
    foreground: bool = False,
    seed: int = 0,
    steps: int = 0,
    threads: int = 1,
) -> PartitionReport:
    """Per-tile kept counts against the whole-image count, plus a sampled schedule."""
    region = foreground_region(grid, camera, margin_px) if foreground else full_image_rect(camera)
    tiles = make_tiles(camera, grid_n, margin_px, region)
    results = cull_tiles(grid, camera, tiles, world_margin, threads=threads)
    global_kept = cull_voxels(grid, camera_frustum(camera, world_margin)).kept_count

    stats = [
        TileStats(tile=tile, kept_count=res.kept_count, total_count=res.total_count)
        for tile, res in zip(tiles, results)
    ]
    max_kept = max(s.kept_count for s in stats)
    log(
        "partition",
        f"{grid_n}x{grid_n} tiles: max {max_kept} of {len(grid)} voxels per tile "
        f"(whole image keeps {global_kept})",
    )
    return PartitionReport(
        grid_n=grid_n,
        margin_px=margin_px,
        world_margin=world_margin,
        region=region,
        tiles=stats,
        global_kept_count=global_kept,
        max_tile_kept_count=max_kept,
        sampled_schedule=sample_schedule(tiles, seed, steps),
    )
