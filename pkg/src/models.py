"""
Data models for the voxup toolkit.
Defines the Pydantic models for everything that is read from or written to JSON.
"""

from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


# --- Mesh I/O ---

class MeshLoadReport(BaseModel):
    """What load_mesh found in a mesh file."""
    path: str
    format: Literal["obj", "vmsh"]
    vertex_count: int
    triangle_count: int
    degenerate_dropped: int = Field(default=0, description="Zero-area triangles removed on load")


# --- Camera and tiles ---

class CameraModel(BaseModel):
    """Pinhole camera with a rigid world-to-camera transform (x right, y down, z forward)."""
    model_config = ConfigDict(frozen=True)

    fx: float = Field(gt=0, description="Focal length in pixels along x")
    fy: float = Field(gt=0, description="Focal length in pixels along y")
    cx: float = Field(description="Principal point x in pixels")
    cy: float = Field(description="Principal point y in pixels")
    width: int = Field(ge=0, description="Image width in pixels")
    height: int = Field(ge=0, description="Image height in pixels")
    rotation: List[List[float]] = Field(description="3x3 world-to-camera rotation, row-major")
    translation: List[float] = Field(description="World-to-camera translation")
    near: float = Field(gt=0, description="Near clipping depth in world units")
    far: float = Field(gt=0, description="Far clipping depth in world units")

    @field_validator("rotation")
    @classmethod
    def _check_rotation(cls, value: List[List[float]]) -> List[List[float]]:
        r = np.asarray(value, dtype=np.float64)
        if r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) <= 0:
            raise ValueError("rotation must be proper (det = +1)")
        return [list(map(float, row)) for row in r]

    @field_validator("translation")
    @classmethod
    def _check_translation(cls, value: List[float]) -> List[float]:
        if len(value) != 3:
            raise ValueError("translation must have 3 components")
        return [float(v) for v in value]

    @model_validator(mode="after")
    def _check_depth_range(self) -> "CameraModel":
        if not self.near < self.far:
            raise ValueError(f"need 0 < near < far (got near={self.near}, far={self.far})")
        return self

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.rotation, dtype=np.float64)

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.translation, dtype=np.float64)

    @property
    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.R.T @ self.t


class PixelRect(BaseModel):
    """Half-open pixel rectangle [x0, x0 + w) x [y0, y0 + h)."""
    model_config = ConfigDict(frozen=True)

    x0: int
    y0: int
    w: int = Field(ge=0)
    h: int = Field(ge=0)

    @property
    def x1(self) -> int:
        return self.x0 + self.w

    @property
    def y1(self) -> int:
        return self.y0 + self.h

    @property
    def area(self) -> int:
        return self.w * self.h

    def contains_pixel(self, px: int, py: int) -> bool:
        return self.x0 <= px < self.x1 and self.y0 <= py < self.y1

    def contains(self, other: "PixelRect") -> bool:
        return (
            self.x0 <= other.x0 and self.y0 <= other.y0
            and other.x1 <= self.x1 and other.y1 <= self.y1
        )

    def slices(self, origin: Tuple[int, int] = (0, 0)) -> Tuple[slice, slice]:
        """Row/column slices of this rect inside an image whose top-left pixel is origin."""
        ox, oy = origin
        return slice(self.y0 - oy, self.y1 - oy), slice(self.x0 - ox, self.x1 - ox)


class Tile(BaseModel):
    """One tile of a view-domain tiling: owned core plus clipped overlap margin."""
    model_config = ConfigDict(frozen=True)

    index: int
    row: int
    col: int
    core: PixelRect
    margin: int = Field(ge=0)
    expanded: PixelRect

    @model_validator(mode="after")
    def _check_expanded(self) -> "Tile":
        if not self.expanded.contains(self.core):
            raise ValueError("expanded rect must contain the core rect")
        return self


class TileStats(BaseModel):
    """Per-tile culling statistics written by the partition command."""
    tile: Tile
    kept_count: int
    total_count: int


class PartitionReport(BaseModel):
    grid_n: int
    margin_px: int
    world_margin: float
    region: PixelRect
    tiles: List[TileStats]
    global_kept_count: int
    max_tile_kept_count: int
    sampled_schedule: List[int] = Field(default_factory=list)


# --- Anchor ---

class UpsampleReport(BaseModel):
    """Counts of one traditional-upsampling step and how many candidates survive."""
    resolution: int = Field(description="Parent resolution R; candidates live at 2R")
    parent_count: int = Field(ge=0)
    candidate_count: int = Field(ge=0)
    surface_count: int = Field(ge=0)
    redundancy_ratio: float = Field(ge=0.0, le=1.0)
    timings: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_counts(self) -> "UpsampleReport":
        if self.candidate_count != 8 * self.parent_count:
            raise ValueError("candidate_count must equal 8 * parent_count")
        if self.surface_count > self.candidate_count:
            raise ValueError("surface_count cannot exceed candidate_count")
        return self

    @classmethod
    def from_counts(cls, resolution: int, parent_count: int, surface_count: int,
                    timings: Optional[Dict[str, float]] = None) -> "UpsampleReport":
        candidates = 8 * parent_count
        ratio = 0.0 if candidates == 0 else 1.0 - surface_count / candidates
        return cls(
            resolution=resolution,
            parent_count=parent_count,
            candidate_count=candidates,
            surface_count=surface_count,
            redundancy_ratio=ratio,
            timings=timings or {},
        )


class MaskMetrics(BaseModel):
    """Thresholded mask evaluation against a hard target."""
    threshold: float
    precision: float
    recall: float
    iou: float
    true_positive: int
    false_positive: int
    false_negative: int
    true_negative: int


# --- Memory model ---

class MemoryModel(BaseModel):
    """Per-item byte costs used to turn voxel/splat counts into modeled bytes."""
    bytes_per_voxel_feature: int = Field(ge=0)
    bytes_per_splat: int = Field(ge=0)
    overhead_bytes: int = Field(default=0, ge=0)
    budget_bytes: Optional[int] = Field(
        default=None, ge=0, description="Reports above this are flagged over_budget (OOM)"
    )

    def modeled_bytes(self, live_voxels: int, splat_voxels: int) -> int:
        return (
            self.overhead_bytes
            + self.bytes_per_voxel_feature * live_voxels
            + self.bytes_per_splat * splat_voxels
        )


class ConfigReport(BaseModel):
    """One row of the memory comparison: a training configuration at a resolution."""
    config: str = Field(description="raw | mask | mask+block NxN")
    resolution: int
    live_voxels: int
    peak_tile_voxels: Optional[int] = None
    modeled_bytes: int
    over_budget: bool = False
    model: MemoryModel
    note: str = "modeled from voxel/splat counts; not measured GPU memory"

    @model_validator(mode="after")
    def _check_bytes(self) -> "ConfigReport":
        splat = self.peak_tile_voxels if self.peak_tile_voxels is not None else self.live_voxels
        if self.modeled_bytes != self.model.modeled_bytes(self.live_voxels, splat):
            raise ValueError("modeled_bytes does not match the memory model")
        return self


# --- Render checks ---

class StitchCase(BaseModel):
    scene: str
    camera: int
    grid_n: int
    margin_px: int
    splat_radius_px: float
    world_margin: float
    differing_pixels: int


class StitchCheckReport(BaseModel):
    cases: List[StitchCase]
    exact_cases: int
    total_cases: int
    negative_control: List[StitchCase] = Field(default_factory=list)
    negative_control_detect_rate: Optional[float] = None


# --- Selftest ---

class CheckResult(BaseModel):
    """Outcome of one invariant group of the selftest."""
    group: str
    passed: bool
    summary: str
    details: Dict[str, Any] = Field(default_factory=dict)


class SelftestReport(BaseModel):
    profile: str
    seed: int
    passed: bool
    groups: List[CheckResult]
    errors: List[str] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)


# --- Run manifest ---

class ArtifactRecord(BaseModel):
    path: str
    sha256: str
    bytes: int


class RunManifest(BaseModel):
    """Written next to every run's outputs so results can be regenerated."""
    subcommand: str
    argv: List[str]
    seed: int
    threads: int
    versions: Dict[str, str]
    inputs: List[ArtifactRecord] = Field(default_factory=list)
    outputs: List[ArtifactRecord] = Field(default_factory=list)
    timings: Dict[str, float] = Field(default_factory=dict)
