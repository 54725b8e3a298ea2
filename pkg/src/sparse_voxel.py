"""
Sparse voxel sets, voxel masks and order alignment.

A SparseVoxelGrid keeps its cells in canonical order: lexicographic (x, y, z),
strictly increasing, no duplicates. Every coordinate is also addressable by a
linear key (x * R + y) * R + z, which is monotone in canonical order; set
algebra and alignment run on those keys.
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    AlignmentError,
    FormatError,
    GridError,
    LengthMismatchError,
    ResolutionMismatchError,
    read_input_bytes,
)

MAX_RESOLUTION = 4096

SVOX_MAGIC = b"SVOX"
SVOX_HEADER = struct.Struct("<4sIIQ")
VMSK_MAGIC = b"VMSK"
VMSK_HEADER = struct.Struct("<4sIQB")
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def _as_coords(coords) -> np.ndarray:
    arr = np.asarray(coords)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    arr = arr.reshape(-1, 3)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise GridError("Voxel coordinates must be integers")
    return arr.astype(np.int64)


def coords_to_keys(coords: np.ndarray, resolution: int) -> np.ndarray:
    coords = coords.astype(np.int64, copy=False)
    return (coords[:, 0] * resolution + coords[:, 1]) * resolution + coords[:, 2]


def keys_to_coords(keys: np.ndarray, resolution: int) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.int64)
    z = keys % resolution
    y = (keys // resolution) % resolution
    x = keys // (resolution * resolution)
    return np.stack([x, y, z], axis=1)


@dataclass(frozen=True)
class SparseVoxelGrid:
    """Canonically ordered set of active cells at one resolution."""

    resolution: int
    coords: np.ndarray

    def __post_init__(self):
        if not 1 <= int(self.resolution) <= MAX_RESOLUTION:
            raise GridError(f"Resolution must be in [1, {MAX_RESOLUTION}] (got {self.resolution})")
        raw = _as_coords(self.coords)
        if len(raw):
            if raw.min() < 0 or raw.max() >= self.resolution:
                raise GridError(f"Coordinates out of range for resolution {self.resolution}")
            if np.any(np.diff(coords_to_keys(raw, int(self.resolution))) <= 0):
                raise GridError("Coordinates must be strictly increasing in (x, y, z) order")
        coords = np.ascontiguousarray(raw, dtype=np.uint16)
        coords.setflags(write=False)
        object.__setattr__(self, "resolution", int(self.resolution))
        object.__setattr__(self, "coords", coords)

    def __len__(self) -> int:
        return len(self.coords)

    def keys(self) -> np.ndarray:
        return coords_to_keys(self.coords, self.resolution)

    @classmethod
    def from_keys(cls, keys: np.ndarray, resolution: int) -> "SparseVoxelGrid":
        """Build from keys that are already sorted and unique."""
        return cls(resolution, keys_to_coords(keys, resolution))

    @classmethod
    def empty(cls, resolution: int) -> "SparseVoxelGrid":
        return cls(resolution, np.zeros((0, 3), dtype=np.uint16))

    def contains(self, coords) -> np.ndarray:
        """Membership of each given coordinate, in the given order."""
        query = _as_coords(coords)
        if len(query) == 0:
            return np.zeros(0, dtype=bool)
        in_range = np.all((query >= 0) & (query < self.resolution), axis=1)
        result = np.zeros(len(query), dtype=bool)
        if np.any(in_range):
            result[in_range] = np.isin(
                coords_to_keys(query[in_range], self.resolution), self.keys(), assume_unique=False
            )
        return result

    def world_centers(self) -> np.ndarray:
        """Cell centers in the normalized cube: (i + 0.5) / R - 0.5."""
        return cell_centers(self.coords, self.resolution)

    @property
    def cell_size(self) -> float:
        return 1.0 / self.resolution


def cell_centers(coords: np.ndarray, resolution: int) -> np.ndarray:
    return (np.asarray(coords, dtype=np.float64) + 0.5) / resolution - 0.5


def canonicalize(coords, resolution: int) -> SparseVoxelGrid:
    """Sort and deduplicate coordinates into a canonical grid."""
    if not 1 <= resolution <= MAX_RESOLUTION:
        raise GridError(f"Resolution must be in [1, {MAX_RESOLUTION}] (got {resolution})")
    arr = _as_coords(coords)
    if len(arr) == 0:
        return SparseVoxelGrid.empty(resolution)
    bad = np.any((arr < 0) | (arr >= resolution), axis=1)
    if np.any(bad):
        first = arr[np.argmax(bad)].tolist()
        raise GridError(
            f"Coordinate {first} out of range for resolution {resolution}",
            coordinate=first,
            out_of_range=int(np.count_nonzero(bad)),
        )
    return SparseVoxelGrid.from_keys(np.unique(coords_to_keys(arr, resolution)), resolution)


# --- Masks ---

@dataclass(frozen=True)
class VoxelMask:
    """Per-voxel values aligned with a grid's ordering; hard (bool) or soft (scores in [0, 1])."""

    values: np.ndarray
    soft: bool = False

    def __post_init__(self):
        values = np.asarray(self.values)
        if self.soft:
            values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
            if values.size and (values.min() < 0.0 or values.max() > 1.0 or np.isnan(values).any()):
                raise GridError("Soft mask scores must lie in [0, 1]")
        else:
            if values.size and not np.all((values == 0) | (values == 1)):
                raise GridError("Hard mask values must be 0 or 1")
            values = np.ascontiguousarray(values, dtype=bool).reshape(-1)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def popcount(self) -> int:
        if self.soft:
            raise GridError("popcount is defined for hard masks only")
        return int(np.count_nonzero(self.values))

    def threshold(self, level: float = 0.5) -> "VoxelMask":
        if not self.soft:
            return self
        return VoxelMask(self.values >= level)

    def check_owner(self, grid: SparseVoxelGrid):
        if len(self) != len(grid):
            raise LengthMismatchError("mask vs grid", len(grid), len(self))


def membership_mask(coords, truth: SparseVoxelGrid) -> VoxelMask:
    """Hard mask over coords (any order): 1 where the coordinate is in truth."""
    return VoxelMask(truth.contains(coords))


# --- Alignment ---

@dataclass(frozen=True)
class AlignmentPermutation:
    """Bijection on [0, N): aligned[i] = source[mapping[i]]."""

    mapping: np.ndarray

    def __post_init__(self):
        mapping = np.ascontiguousarray(self.mapping, dtype=np.int64).reshape(-1)
        n = len(mapping)
        if n and (mapping.min() < 0 or mapping.max() >= n or len(np.unique(mapping)) != n):
            raise AlignmentError("mapping is not a permutation")
        mapping.setflags(write=False)
        object.__setattr__(self, "mapping", mapping)

    def __len__(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "AlignmentPermutation":
        return cls(np.arange(n))


def inverse_permutation(perm: AlignmentPermutation) -> AlignmentPermutation:
    inverse = np.empty_like(perm.mapping)
    inverse[perm.mapping] = np.arange(len(perm.mapping))
    return AlignmentPermutation(inverse)


def hash_align(source: SparseVoxelGrid, target_order) -> AlignmentPermutation:
    """Permutation pi with source.coords[pi[i]] == target_order[i].

    Raises instead of guessing whenever the target is not exactly a reordering
    of the source set.
    """
    target = _as_coords(target_order)
    if len(target) != len(source):
        raise AlignmentError(
            f"Size mismatch: source has {len(source)} voxels, target has {len(target)}",
            source_count=len(source),
            target_count=len(target),
        )
    if len(target) == 0:
        return AlignmentPermutation.identity(0)

    out_of_range = np.any((target < 0) | (target >= source.resolution), axis=1)
    if np.any(out_of_range):
        raise AlignmentError(
            f"Target coordinate {target[np.argmax(out_of_range)].tolist()} is outside the grid"
        )

    target_keys = coords_to_keys(target, source.resolution)
    unique_keys, counts = np.unique(target_keys, return_counts=True)
    if np.any(counts > 1):
        dup = keys_to_coords(unique_keys[counts > 1][:1], source.resolution)[0].tolist()
        raise AlignmentError(f"Duplicate coordinate {dup} in target order", duplicate=dup)

    # source keys are sorted, so the lookup table is a binary search
    source_keys = source.keys()
    positions = np.searchsorted(source_keys, target_keys)
    positions = np.minimum(positions, len(source_keys) - 1)
    found = source_keys[positions] == target_keys
    if not np.all(found):
        missing = target[np.argmin(found)].tolist()
        raise AlignmentError(
            f"Target coordinate {missing} is absent from the source grid", missing=missing
        )
    return AlignmentPermutation(positions)


def apply_permutation(mask: VoxelMask, perm: AlignmentPermutation) -> VoxelMask:
    if len(mask) != len(perm):
        raise LengthMismatchError("mask vs permutation", len(perm), len(mask))
    return VoxelMask(mask.values[perm.mapping], soft=mask.soft)


# --- Set algebra ---

def _check_same_resolution(a: SparseVoxelGrid, b: SparseVoxelGrid):
    if a.resolution != b.resolution:
        raise ResolutionMismatchError(a.resolution, b.resolution)


def set_intersect(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    _check_same_resolution(a, b)
    return SparseVoxelGrid.from_keys(np.intersect1d(a.keys(), b.keys(), assume_unique=True), a.resolution)


def set_union(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    _check_same_resolution(a, b)
    return SparseVoxelGrid.from_keys(np.union1d(a.keys(), b.keys()), a.resolution)


def set_difference(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    _check_same_resolution(a, b)
    return SparseVoxelGrid.from_keys(np.setdiff1d(a.keys(), b.keys(), assume_unique=True), a.resolution)


def contains_all(a: SparseVoxelGrid, b: SparseVoxelGrid) -> bool:
    """True when every voxel of b is also in a."""
    _check_same_resolution(a, b)
    if len(b) == 0:
        return True
    return bool(np.all(np.isin(b.keys(), a.keys(), assume_unique=True)))


def missing_from(a: SparseVoxelGrid, b: SparseVoxelGrid) -> SparseVoxelGrid:
    """Voxels of b that are not in a."""
    return set_difference(b, a)


# --- Binary formats ---

def save_grid(grid: SparseVoxelGrid, path: PathLike):
    header = SVOX_HEADER.pack(SVOX_MAGIC, FORMAT_VERSION, grid.resolution, len(grid))
    Path(path).write_bytes(header + grid.coords.astype("<u2").tobytes())


def load_grid(path: PathLike) -> SparseVoxelGrid:
    path = Path(path)
    data = read_input_bytes(path)
    if len(data) < SVOX_HEADER.size:
        raise FormatError(f"Truncated SVOX header in {path}", path=str(path))
    magic, version, resolution, count = SVOX_HEADER.unpack_from(data, 0)
    if magic != SVOX_MAGIC or version != FORMAT_VERSION:
        raise FormatError(f"Not an SVOX v{FORMAT_VERSION} file: {path}", path=str(path))
    if len(data) != SVOX_HEADER.size + 6 * count:
        raise FormatError(f"SVOX size mismatch in {path}", path=str(path))
    coords = np.frombuffer(data, dtype="<u2", count=3 * count, offset=SVOX_HEADER.size).reshape(-1, 3)
    grid = canonicalize(coords.astype(np.int64), resolution)
    if len(grid) != count:
        raise FormatError(f"SVOX file {path} contains duplicate coordinates", path=str(path))
    return grid


def save_mask(mask: VoxelMask, path: PathLike):
    header = VMSK_HEADER.pack(VMSK_MAGIC, FORMAT_VERSION, len(mask), 1 if mask.soft else 0)
    if mask.soft:
        body = mask.values.astype("<f4").tobytes()
    else:
        body = mask.values.astype(np.uint8).tobytes()
    Path(path).write_bytes(header + body)


def load_mask(path: PathLike) -> VoxelMask:
    path = Path(path)
    data = read_input_bytes(path)
    if len(data) < VMSK_HEADER.size:
        raise FormatError(f"Truncated VMSK header in {path}", path=str(path))
    magic, version, count, soft = VMSK_HEADER.unpack_from(data, 0)
    if magic != VMSK_MAGIC or version != FORMAT_VERSION:
        raise FormatError(f"Not a VMSK v{FORMAT_VERSION} file: {path}", path=str(path))
    width = 4 if soft else 1
    if len(data) != VMSK_HEADER.size + width * count:
        raise FormatError(f"VMSK size mismatch in {path}", path=str(path))
    if soft:
        values = np.frombuffer(data, dtype="<f4", count=count, offset=VMSK_HEADER.size)
        return VoxelMask(values.astype(np.float64), soft=True)
    values = np.frombuffer(data, dtype=np.uint8, count=count, offset=VMSK_HEADER.size)
    if np.any(values > 1):
        bad = int(values[values > 1][0])
        raise FormatError(f"VMSK hard mask in {path} holds byte {bad} (expected 0 or 1)", path=str(path))
    return VoxelMask(values.astype(bool))


def shuffled_order(grid: SparseVoxelGrid, rng: np.random.Generator) -> np.ndarray:
    """Coordinates of grid in a random order (models a foreign sparse-tensor ordering)."""
    return grid.coords[rng.permutation(len(grid))].astype(np.int64)

