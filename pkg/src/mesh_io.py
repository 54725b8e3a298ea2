"""
Mesh loading, generation and normalization.

Meshes are indexed triangle soups. Everything downstream (voxelizer, anchor,
membench) expects meshes normalized into the cube [-0.5, 0.5]^3, so that voxel
cell i of a resolution-R grid spans [i/R - 0.5, (i+1)/R - 0.5).
"""

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import trimesh

from .config import log
from .errors import FormatError, MeshError, MeshParseError, read_input_bytes
from .models import MeshLoadReport

VMSH_MAGIC = b"VMSH"
VMSH_VERSION = 1
VMSH_HEADER = struct.Struct("<4sIQQ")

DEGENERATE_AREA = 1e-12
NORMALIZED_TOLERANCE = 1e-12

PathLike = Union[str, Path]


@dataclass(frozen=True)
class TriangleMesh:
    """Indexed triangle mesh: float64 vertices (V, 3) and int64 triangles (T, 3)."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if triangles.size and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError(
                f"Triangle index out of range [0, {len(vertices)})"
            )
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def tri_count(self) -> int:
        return len(self.triangles)

    @property
    def is_empty(self) -> bool:
        return self.tri_count == 0

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape (T, 3, 3)."""
        return self.vertices[self.triangles]

    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        if self.vertex_count == 0:
            raise MeshError("Empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_normalized(self, tolerance: float = 1e-9) -> bool:
        if self.vertex_count == 0:
            return True
        return bool(np.all(np.abs(self.vertices) <= 0.5 + tolerance))

    @classmethod
    def from_trimesh(cls, mesh: "trimesh.Trimesh") -> "TriangleMesh":
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces))

    def to_trimesh(self) -> "trimesh.Trimesh":
        return trimesh.Trimesh(vertices=self.vertices, faces=self.triangles, process=False)


def empty_mesh() -> TriangleMesh:
    return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


# --- Degenerate triangles ---

def _triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    if len(triangles) == 0:
        return np.zeros(0)
    corners = vertices[triangles]
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    return 0.5 * np.linalg.norm(cross, axis=1)


def drop_degenerate(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, int]:
    """Remove triangles whose area, measured in the normalized frame, is <= 1e-12."""
    if len(triangles) == 0:
        return triangles, 0
    extent = float(np.max(vertices.max(axis=0) - vertices.min(axis=0))) if len(vertices) else 0.0
    if extent == 0.0:
        return triangles[:0], len(triangles)
    areas = _triangle_areas(vertices, triangles) / (extent * extent)
    keep = areas > DEGENERATE_AREA
    return triangles[keep], int(np.count_nonzero(~keep))


# --- OBJ ---

def _parse_obj_index(token: str, vertex_count: int, line_no: int, path: str) -> int:
    head = token.split("/", 1)[0]
    try:
        index = int(head)
    except ValueError:
        raise MeshParseError(f"malformed face index '{token}'", line=line_no, path=path)
    if index == 0:
        raise MeshParseError(
            "face index 0 is invalid (OBJ indices are 1-based)", line=line_no, path=path
        )
    # negative indices are relative to the vertices read so far
    resolved = index - 1 if index > 0 else vertex_count + index
    if resolved < 0 or resolved >= vertex_count:
        raise MeshParseError(
            f"face index {index} out of range (vertex count so far {vertex_count})",
            line=line_no,
            path=path,
        )
    return resolved


def _read_obj(data: bytes, path: Path) -> Tuple[np.ndarray, np.ndarray]:
    vertices: List[Tuple[float, float, float]] = []
    triangles: List[Tuple[int, int, int]] = []
    text = data.decode("utf-8", errors="replace")

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise MeshParseError("vertex line needs 3 coordinates", line=line_no, path=str(path))
            try:
                vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
            except ValueError:
                raise MeshParseError("non-numeric vertex coordinate", line=line_no, path=str(path))
        elif tag == "f":
            if len(parts) < 4:
                raise MeshParseError("face needs at least 3 vertices", line=line_no, path=str(path))
            ring = [_parse_obj_index(tok, len(vertices), line_no, str(path)) for tok in parts[1:]]
            # fan triangulation
            for k in range(1, len(ring) - 1):
                triangles.append((ring[0], ring[k], ring[k + 1]))
        # normals, uvs, groups, materials: ignored

    return (
        np.asarray(vertices, dtype=np.float64).reshape(-1, 3),
        np.asarray(triangles, dtype=np.int64).reshape(-1, 3),
    )


def _write_obj(mesh: TriangleMesh, path: Path):
    lines = [f"# voxup mesh: {mesh.vertex_count} vertices, {mesh.tri_count} triangles"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles.tolist()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# --- VMSH binary ---

def _read_vmsh(data: bytes, path: Path) -> Tuple[np.ndarray, np.ndarray]:
    if len(data) < VMSH_HEADER.size:
        raise FormatError(f"Truncated VMSH header in {path}", path=str(path))
    magic, version, n_vertices, n_triangles = VMSH_HEADER.unpack_from(data, 0)
    if magic != VMSH_MAGIC:
        raise FormatError(f"Bad magic {magic!r} in {path}", path=str(path))
    if version != VMSH_VERSION:
        raise FormatError(f"Unsupported VMSH version {version}", path=str(path))

    offset = VMSH_HEADER.size
    expected = offset + n_vertices * 24 + n_triangles * 12
    if len(data) != expected:
        raise FormatError(
            f"VMSH size mismatch: expected {expected} bytes, found {len(data)}", path=str(path)
        )
    vertices = np.frombuffer(data, dtype="<f8", count=n_vertices * 3, offset=offset).reshape(-1, 3)
    offset += n_vertices * 24
    triangles = np.frombuffer(data, dtype="<u4", count=n_triangles * 3, offset=offset).reshape(-1, 3)
    if triangles.size and int(triangles.max()) >= n_vertices:
        raise MeshParseError(
            f"triangle index {int(triangles.max())} out of range (vertex count {n_vertices})",
            path=str(path),
        )
    return vertices.astype(np.float64), triangles.astype(np.int64)


def _write_vmsh(mesh: TriangleMesh, path: Path):
    header = VMSH_HEADER.pack(VMSH_MAGIC, VMSH_VERSION, mesh.vertex_count, mesh.tri_count)
    body = mesh.vertices.astype("<f8").tobytes() + mesh.triangles.astype("<u4").tobytes()
    path.write_bytes(header + body)


# --- Public API ---

def read_mesh(path: PathLike) -> Tuple[TriangleMesh, MeshLoadReport]:
    """Load an OBJ or VMSH mesh and report how many degenerate triangles were dropped."""
    path = Path(path)
    data = read_input_bytes(path)

    if data[:4] == VMSH_MAGIC:
        vertices, triangles = _read_vmsh(data, path)
        fmt = "vmsh"
    else:
        vertices, triangles = _read_obj(data, path)
        fmt = "obj"

    kept, dropped = drop_degenerate(vertices, triangles)
    mesh = TriangleMesh(vertices, kept)
    report = MeshLoadReport(
        path=str(path),
        format=fmt,
        vertex_count=mesh.vertex_count,
        triangle_count=mesh.tri_count,
        degenerate_dropped=dropped,
    )
    if dropped:
        log("mesh_io", f"Dropped {dropped} degenerate triangle(s) from {path.name}", "WARNING")
    return mesh, report


def load_mesh(path: PathLike) -> TriangleMesh:
    """Load an OBJ or VMSH mesh (not normalized)."""
    mesh, _ = read_mesh(path)
    return mesh


def save_mesh(mesh: TriangleMesh, path: PathLike):
    """Write a mesh as OBJ (.obj) or VMSH (anything else)."""
    path = Path(path)
    if path.suffix.lower() == ".obj":
        _write_obj(mesh, path)
    else:
        _write_vmsh(mesh, path)


def normalize_mesh(mesh: TriangleMesh) -> TriangleMesh:
    """Center the tight AABB at the origin and scale its longest side to 1."""
    if mesh.vertex_count == 0 or mesh.tri_count == 0:
        raise MeshError("Cannot normalize an empty mesh")

    lo, hi = mesh.bounds()
    extent = float(np.max(hi - lo))
    if extent == 0.0:
        raise MeshError("Cannot normalize a mesh with zero-extent bounding box")

    center = 0.5 * (lo + hi)
    # already canonical meshes are returned untouched so normalize stays idempotent
    if abs(extent - 1.0) <= NORMALIZED_TOLERANCE and np.all(np.abs(center) <= NORMALIZED_TOLERANCE):
        return mesh

    vertices = np.clip((mesh.vertices - center) / extent, -0.5, 0.5)
    triangles, _ = drop_degenerate(vertices, mesh.triangles)
    return TriangleMesh(vertices, triangles)


def transform_mesh(
    mesh: TriangleMesh,
    rotation: Optional[np.ndarray] = None,
    scale: float = 1.0,
    translation: Sequence[float] = (0.0, 0.0, 0.0),
) -> TriangleMesh:
    vertices = mesh.vertices * float(scale)
    if rotation is not None:
        vertices = vertices @ np.asarray(rotation, dtype=np.float64).T
    vertices = vertices + np.asarray(translation, dtype=np.float64)
    return TriangleMesh(vertices, mesh.triangles)


def merge_meshes(meshes: Iterable[TriangleMesh]) -> TriangleMesh:
    vertices, triangles, offset = [], [], 0
    for m in meshes:
        vertices.append(m.vertices)
        triangles.append(m.triangles + offset)
        offset += m.vertex_count
    if not vertices:
        return empty_mesh()
    return TriangleMesh(np.concatenate(vertices), np.concatenate(triangles))


# --- Primitives ---

def _grid_torus(major_radius: float, minor_radius: float, rings: int, sides: int) -> TriangleMesh:
    theta = 2.0 * np.pi * np.arange(rings) / rings
    phi = 2.0 * np.pi * np.arange(sides) / sides
    t, p = np.meshgrid(theta, phi, indexing="ij")
    radial = major_radius + minor_radius * np.cos(p)
    vertices = np.stack(
        [radial * np.cos(t), radial * np.sin(t), minor_radius * np.sin(p)], axis=-1
    ).reshape(-1, 3)

    i, j = np.meshgrid(np.arange(rings), np.arange(sides), indexing="ij")
    a = i * sides + j
    b = ((i + 1) % rings) * sides + j
    c = ((i + 1) % rings) * sides + (j + 1) % sides
    d = i * sides + (j + 1) % sides
    triangles = np.concatenate(
        [np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)]
    )
    return TriangleMesh(vertices, triangles)


def _grid_plane(size: float, subdivisions: int) -> TriangleMesh:
    n = subdivisions + 1
    axis = np.linspace(-0.5 * size, 0.5 * size, n + 1)
    x, y = np.meshgrid(axis, axis, indexing="ij")
    vertices = np.stack([x, y, np.zeros_like(x)], axis=-1).reshape(-1, 3)

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    a = i * (n + 1) + j
    b = (i + 1) * (n + 1) + j
    c = (i + 1) * (n + 1) + j + 1
    d = i * (n + 1) + j + 1
    triangles = np.concatenate(
        [np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)]
    )
    return TriangleMesh(vertices, triangles)


def make_primitive(kind: str, **params) -> TriangleMesh:
    """Build a test primitive.

    cube(size=1, subdivisions=0)            -> 12 * 4^n triangles, watertight
    sphere(radius=0.5, subdivisions=2)      -> icosphere, 20 * 4^n triangles
    torus(major_radius=0.35, minor_radius=0.12, rings=32, sides=16) -> 2 * rings * sides
    plane(size=1, subdivisions=0)           -> open square in z=0, 2 * (n+1)^2 triangles
    """
    subdivisions = int(params.get("subdivisions", 0 if kind != "sphere" else 2))
    if subdivisions < 0:
        raise MeshError(f"subdivisions must be >= 0 (got {subdivisions})")

    if kind == "cube":
        size = float(params.get("size", 1.0))
        if size <= 0:
            raise MeshError("cube size must be positive")
        box = trimesh.creation.box(extents=(size, size, size))
        vertices, faces = np.asarray(box.vertices), np.asarray(box.faces)
        for _ in range(subdivisions):
            vertices, faces = trimesh.remesh.subdivide(vertices, faces)
        return TriangleMesh(vertices, faces)

    if kind == "sphere":
        radius = float(params.get("radius", 0.5))
        if radius <= 0:
            raise MeshError("sphere radius must be positive")
        return TriangleMesh.from_trimesh(
            trimesh.creation.icosphere(subdivisions=subdivisions, radius=radius)
        )

    if kind == "torus":
        major = float(params.get("major_radius", 0.35))
        minor = float(params.get("minor_radius", 0.12))
        rings = int(params.get("rings", 32))
        sides = int(params.get("sides", 16))
        if not (0 < minor < major) or rings < 3 or sides < 3:
            raise MeshError("torus needs 0 < minor_radius < major_radius and rings, sides >= 3")
        return _grid_torus(major, minor, rings, sides)

    if kind == "plane":
        size = float(params.get("size", 1.0))
        if size <= 0:
            raise MeshError("plane size must be positive")
        return _grid_plane(size, subdivisions)

    raise MeshError(f"Unknown primitive kind '{kind}'")
