"""
Deterministic voxel splat renderer and image metrics.

Every voxel center is projected and drawn as an opaque disk of fixed pixel
radius. Visibility is a z-buffer resolved by a single sort: nearest depth
wins, equal depths go to the smaller canonical voxel index. Because the
outcome of a pixel depends only on the voxels covering it, a tile rendered
from a correctly culled subset reproduces the full render exactly.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .errors import FormatError, MetricError, MissingInputError, RenderError, TilingError
from .models import CameraModel, PixelRect, Tile
from .partition import (
    camera_to_world,
    cull_tiles,
    full_image_rect,
    make_tiles,
    world_to_camera,
)
from .sparse_voxel import SparseVoxelGrid

Palette = Callable[[np.ndarray, int], np.ndarray]

SSIM_SIGMA = 1.5
SSIM_TRUNCATE = 3.5  # radius 5, an 11-tap window
SSIM_RADIUS = 5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
PSNR_IDENTICAL_DB = 100.0


@dataclass(frozen=True)
class RenderImage:
    """RGBA8 pixels plus float32 camera depth (+inf where nothing was drawn).

    origin is the image-space position of the top-left pixel; full renders
    sit at (0, 0), tile renders at their expanded rect's corner.
    """

    rgba: np.ndarray
    depth: np.ndarray
    origin: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        rgba = np.ascontiguousarray(self.rgba, dtype=np.uint8)
        depth = np.ascontiguousarray(self.depth, dtype=np.float32)
        if rgba.ndim != 3 or rgba.shape[2] != 4 or depth.shape != rgba.shape[:2]:
            raise RenderError(f"Buffer shapes disagree: rgba {rgba.shape}, depth {depth.shape}")
        if not np.array_equal(np.isfinite(depth), rgba[..., 3] > 0):
            raise RenderError("Depth must be finite exactly where alpha > 0")
        object.__setattr__(self, "rgba", rgba)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "origin", (int(self.origin[0]), int(self.origin[1])))

    @property
    def width(self) -> int:
        return self.rgba.shape[1]

    @property
    def height(self) -> int:
        return self.rgba.shape[0]

    @property
    def rect(self) -> PixelRect:
        return PixelRect(x0=self.origin[0], y0=self.origin[1], w=self.width, h=self.height)

    @property
    def coverage(self) -> int:
        return int(np.count_nonzero(self.rgba[..., 3]))

    @classmethod
    def background(cls, rect: PixelRect) -> "RenderImage":
        return cls(
            np.zeros((rect.h, rect.w, 4), dtype=np.uint8),
            np.full((rect.h, rect.w), np.inf, dtype=np.float32),
            (rect.x0, rect.y0),
        )


# --- Palettes ---

def coordinate_palette(coords: np.ndarray, resolution: int) -> np.ndarray:
    """Color each voxel by its normalized grid coordinate."""
    scale = 255.0 / max(resolution - 1, 1)
    return np.round(np.asarray(coords, dtype=np.float64) * scale).astype(np.uint8)


def constant_palette(rgb: Sequence[int]) -> Palette:
    color = np.asarray(rgb, dtype=np.uint8).reshape(3)

    def palette(coords: np.ndarray, resolution: int) -> np.ndarray:
        return np.broadcast_to(color, (len(coords), 3)).copy()

    return palette


# --- Projection ---

class Projection(NamedTuple):
    u: np.ndarray
    v: np.ndarray
    depth: np.ndarray
    in_front: np.ndarray


def project(camera: CameraModel, points: np.ndarray) -> Projection:
    """Pixel position and depth of world points; u, v are NaN where z <= 0."""
    cam = world_to_camera(camera, points)
    z = cam[:, 2]
    in_front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(in_front, camera.fx * cam[:, 0] / z + camera.cx, np.nan)
        v = np.where(in_front, camera.fy * cam[:, 1] / z + camera.cy, np.nan)
    return Projection(u, v, z, in_front)


def project_point(camera: CameraModel, point: Sequence[float]) -> Optional[Tuple[float, float, float]]:
    """(u, v, depth) of one world point, or None when it is behind the camera."""
    p = project(camera, np.asarray(point, dtype=np.float64).reshape(1, 3))
    if not p.in_front[0]:
        return None
    return float(p.u[0]), float(p.v[0]), float(p.depth[0])


def unproject(camera: CameraModel, u, v, depth) -> np.ndarray:
    """World points at the given pixel positions and camera depths."""
    u, v, depth = (np.asarray(a, dtype=np.float64).reshape(-1) for a in (u, v, depth))
    cam = np.stack(
        [(u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth], axis=1
    )
    return camera_to_world(camera, cam)


# --- Rasterization ---

def _rasterize(
    grid: SparseVoxelGrid,
    camera: CameraModel,
    rect: PixelRect,
    splat_radius_px: float,
    palette: Optional[Palette],
) -> RenderImage:
    if splat_radius_px < 0.5:
        raise RenderError(f"splat_radius_px must be >= 0.5 (got {splat_radius_px})")
    image = RenderImage.background(rect)
    if len(grid) == 0 or rect.area == 0:
        return image

    proj = project(camera, grid.world_centers())
    visible = proj.in_front & (proj.depth >= camera.near) & (proj.depth <= camera.far)
    index = np.flatnonzero(visible)
    if len(index) == 0:
        return image
    u, v, depth = proj.u[index], proj.v[index], proj.depth[index]

    reach = int(np.ceil(splat_radius_px)) + 1
    offsets = np.arange(-reach, reach + 1)
    dx, dy = np.meshgrid(offsets, offsets, indexing="xy")
    px = np.floor(u).astype(np.int64)[:, None] + dx.reshape(1, -1)
    py = np.floor(v).astype(np.int64)[:, None] + dy.reshape(1, -1)
    ox = px + 0.5 - u[:, None]
    oy = py + 0.5 - v[:, None]
    covered = (
        (ox * ox + oy * oy <= splat_radius_px * splat_radius_px)
        & (px >= rect.x0) & (px < rect.x1) & (py >= rect.y0) & (py < rect.y1)
    )

    voxel = np.broadcast_to(np.arange(len(index))[:, None], covered.shape)[covered]
    pixel = (py[covered] - rect.y0) * rect.w + (px[covered] - rect.x0)
    frag_depth = depth[voxel]
    frag_voxel = index[voxel]
    if len(pixel) == 0:
        return image

    order = np.lexsort((frag_voxel, frag_depth, pixel))
    pixel, frag_depth, frag_voxel = pixel[order], frag_depth[order], frag_voxel[order]
    first = np.ones(len(pixel), dtype=bool)
    first[1:] = pixel[1:] != pixel[:-1]
    pixel, frag_depth, frag_voxel = pixel[first], frag_depth[first], frag_voxel[first]

    colors = (palette or coordinate_palette)(grid.coords[frag_voxel].astype(np.int64), grid.resolution)
    rgba = image.rgba.copy().reshape(-1, 4)
    depth_buf = image.depth.copy().reshape(-1)
    rgba[pixel, :3] = colors
    rgba[pixel, 3] = 255
    depth_buf[pixel] = frag_depth
    return RenderImage(rgba.reshape(rect.h, rect.w, 4), depth_buf.reshape(rect.h, rect.w), image.origin)


def render_full(
    grid: SparseVoxelGrid,
    camera: CameraModel,
    splat_radius_px: float,
    palette: Optional[Palette] = None,
) -> RenderImage:
    """Render the whole image with z-buffered opaque disks."""
    if camera.width == 0 or camera.height == 0:
        raise RenderError("Cannot render a zero-sized image")
    return _rasterize(grid, camera, full_image_rect(camera), splat_radius_px, palette)


def render_tile(
    culled: SparseVoxelGrid,
    camera: CameraModel,
    tile: Tile,
    splat_radius_px: float,
    palette: Optional[Palette] = None,
) -> RenderImage:
    """Render only the tile's expanded rect; the patch's origin is that rect's corner."""
    if not full_image_rect(camera).contains(tile.expanded):
        raise TilingError(f"Tile {tile.index} lies outside the {camera.width}x{camera.height} image")
    return _rasterize(culled, camera, tile.expanded, splat_radius_px, palette)


def crop(image: RenderImage, rect: PixelRect) -> RenderImage:
    """Sub-image covering rect (image-space coordinates)."""
    if not image.rect.contains(rect):
        raise TilingError("Crop rect lies outside the image")
    rows, cols = rect.slices(image.origin)
    return RenderImage(image.rgba[rows, cols], image.depth[rows, cols], (rect.x0, rect.y0))


def stitch(
    patches: Sequence[Tuple[Tile, RenderImage]],
    width: Optional[int] = None,
    height: Optional[int] = None,
) -> RenderImage:
    """Assemble an image from tile patches; each pixel comes from the tile whose core owns it.

    Pixels outside every core stay background, but cores must not overlap
    and, when no size is given, must cover the whole image.
    """
    if not patches:
        raise TilingError("Nothing to stitch")
    region_only = width is not None or height is not None
    width = max(t.core.x1 for t, _ in patches) if width is None else width
    height = max(t.core.y1 for t, _ in patches) if height is None else height
    out = RenderImage.background(PixelRect(x0=0, y0=0, w=width, h=height))
    rgba, depth = out.rgba.copy(), out.depth.copy()

    owners = np.zeros((height, width), dtype=np.int32)
    for tile, patch in patches:
        if not patch.rect.contains(tile.expanded) or not out.rect.contains(tile.core):
            raise TilingError(f"Patch for tile {tile.index} does not cover its rect")
        owners[tile.core.slices()] += 1
        src = tile.core.slices(patch.origin)
        rgba[tile.core.slices()] = patch.rgba[src]
        depth[tile.core.slices()] = patch.depth[src]

    overlap = int(np.count_nonzero(owners > 1))
    gaps = 0 if region_only else int(np.count_nonzero(owners == 0))
    if overlap or gaps:
        raise TilingError(
            f"Tile cores do not partition the image ({gaps} uncovered, {overlap} doubly covered pixels)",
            uncovered=gaps,
            overlapping=overlap,
        )
    return RenderImage(rgba, depth)


def differing_pixels(a: RenderImage, b: RenderImage) -> int:
    """Pixels whose RGBA or depth differ."""
    if a.rgba.shape != b.rgba.shape:
        raise MetricError(f"Image sizes differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    diff = np.any(a.rgba != b.rgba, axis=2) | (a.depth != b.depth)
    return int(np.count_nonzero(diff))


def stitch_check(
    grid: SparseVoxelGrid,
    cameras: Sequence[CameraModel],
    grid_n: int,
    margin_px: int,
    splat_radius_px: float,
    world_margin: float,
    voxel_world_size: Optional[float] = None,
    palette: Optional[Palette] = None,
    threads: int = 1,
) -> List[int]:
    """Differing pixels between the stitched tile renders and the full render, per camera."""
    counts = []
    for camera in cameras:
        full = render_full(grid, camera, splat_radius_px, palette)
        tiles = make_tiles(camera, grid_n, margin_px)
        culled = cull_tiles(grid, camera, tiles, world_margin, voxel_world_size, threads)
        patches = [
            (tile, render_tile(res.grid, camera, tile, splat_radius_px, palette))
            for tile, res in zip(tiles, culled)
        ]
        counts.append(differing_pixels(stitch(patches), full))
    return counts


# --- Image metrics ---

ImageLike = Union[RenderImage, np.ndarray]


def _rgb(image: ImageLike) -> np.ndarray:
    if isinstance(image, RenderImage):
        return image.rgba[..., :3].astype(np.float64) / 255.0
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise MetricError(f"Expected an (H, W) or (H, W, C) image, got shape {arr.shape}")
    return arr


def _pair(a: ImageLike, b: ImageLike) -> Tuple[np.ndarray, np.ndarray]:
    x, y = _rgb(a), _rgb(b)
    if x.shape != y.shape:
        raise MetricError(f"Image shapes differ: {x.shape} vs {y.shape}")
    return x, y


def l1_loss(a: ImageLike, b: ImageLike) -> float:
    x, y = _pair(a, b)
    return float(np.mean(np.abs(x - y)))


def ssim(a: ImageLike, b: ImageLike) -> float:
    """Mean SSIM over RGB channels, Gaussian window, valid window positions only."""
    x, y = _pair(a, b)
    h, w = x.shape[:2]
    if h <= 2 * SSIM_RADIUS or w <= 2 * SSIM_RADIUS:
        raise MetricError(f"SSIM needs images of at least 11x11 pixels (got {w}x{h})")
    valid = (slice(SSIM_RADIUS, h - SSIM_RADIUS), slice(SSIM_RADIUS, w - SSIM_RADIUS))

    def blur(img: np.ndarray) -> np.ndarray:
        return gaussian_filter(img, SSIM_SIGMA, truncate=SSIM_TRUNCATE)[valid]

    scores = []
    for c in range(x.shape[2]):
        xc, yc = x[..., c], y[..., c]
        mu_x, mu_y = blur(xc), blur(yc)
        mu_xx, mu_yy, mu_xy = mu_x * mu_x, mu_y * mu_y, mu_x * mu_y
        var_x = blur(xc * xc) - mu_xx
        var_y = blur(yc * yc) - mu_yy
        cov = blur(xc * yc) - mu_xy
        numerator = (2 * mu_xy + SSIM_C1) * (2 * cov + SSIM_C2)
        denominator = (mu_xx + mu_yy + SSIM_C1) * (var_x + var_y + SSIM_C2)
        scores.append(np.mean(numerator / denominator))
    return float(np.mean(scores))


def d_ssim(a: ImageLike, b: ImageLike) -> float:
    return (1.0 - ssim(a, b)) / 2.0


def psnr(a: ImageLike, b: ImageLike) -> float:
    """PSNR in dB for values in [0, 1]; identical images report 100 dB."""
    x, y = _pair(a, b)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return PSNR_IDENTICAL_DB
    return float(10.0 * np.log10(1.0 / mse))


def photometric_loss(a: ImageLike, b: ImageLike, lambda_dssim: float = 0.2) -> float:
    """(1 - lambda) * L1 + lambda * D-SSIM."""
    return (1.0 - lambda_dssim) * l1_loss(a, b) + lambda_dssim * d_ssim(a, b)


# --- Image files ---

def save_image(image: RenderImage, path: Union[str, Path]):
    """PNG keeps RGBA; PPM (binary P6) drops alpha."""
    path = Path(path)
    suffix = path.suffix.lower()
    path.parent.mkdir(parents=True, exist_ok=True)
    if suffix == ".png":
        Image.fromarray(image.rgba).save(path, format="PNG")
    elif suffix == ".ppm":
        Image.fromarray(np.ascontiguousarray(image.rgba[..., :3])).save(path, format="PPM")
    else:
        raise FormatError(f"Unsupported image extension '{path.suffix}' (use .png or .ppm)")


def load_rgba(path: Union[str, Path]) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGBA"))
    except FileNotFoundError:
        raise MissingInputError(str(path))
    except OSError as e:
        raise FormatError(f"Unreadable image {path}: {e}", path=str(path))
