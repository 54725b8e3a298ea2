"""
Bundled test scenes.

All fixtures are built procedurally and normalized into [-0.5, 0.5]^3, so the
selftest and the CLI run on a clean checkout without any data files.
"""

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Tuple

from scipy.spatial.transform import Rotation

from .errors import MissingInputError
from .mesh_io import TriangleMesh, load_mesh, make_primitive, merge_meshes, normalize_mesh, transform_mesh


@dataclass(frozen=True)
class Fixture:
    name: str
    mesh: TriangleMesh
    closed: bool

    @property
    def redundancy_band_applies(self) -> bool:
        """The redundancy band is asserted on every closed surface."""
        return self.closed


def _rotation(axis: str, degrees: float):
    return Rotation.from_euler(axis, degrees, degrees=True).as_matrix()


def _torus(major: float, minor: float, **kw) -> TriangleMesh:
    return make_primitive("torus", major_radius=major, minor_radius=minor, **kw)


def _pair() -> TriangleMesh:
    sphere = transform_mesh(make_primitive("sphere", subdivisions=2), scale=0.5,
                            translation=(-0.35, 0.0, 0.0))
    torus = transform_mesh(_torus(0.3, 0.1), rotation=_rotation("y", 60), translation=(0.3, 0.0, 0.0))
    return merge_meshes([sphere, torus])


def _chain() -> TriangleMesh:
    first = _torus(0.35, 0.1)
    second = transform_mesh(_torus(0.35, 0.1), rotation=_rotation("x", 90), translation=(0.35, 0.0, 0.0))
    return merge_meshes([first, second])


def _cluster() -> TriangleMesh:
    parts = [
        transform_mesh(make_primitive("sphere", subdivisions=2), scale=0.35, translation=offset)
        for offset in ((-0.3, -0.2, 0.0), (0.25, -0.25, 0.1), (0.0, 0.3, -0.15))
    ]
    parts.append(transform_mesh(_torus(0.3, 0.08), rotation=_rotation("xy", (35, 20))))
    return merge_meshes(parts)


def _build() -> Dict[str, Fixture]:
    tilted = transform_mesh(make_primitive("plane", subdivisions=3), rotation=_rotation("xz", (30, 15)))
    raw: List[Tuple[str, TriangleMesh, bool]] = [
        ("cube", make_primitive("cube", subdivisions=1), True),
        ("sphere_s1", make_primitive("sphere", subdivisions=1), True),
        ("sphere_s2", make_primitive("sphere", subdivisions=2), True),
        ("sphere_s3", make_primitive("sphere", subdivisions=3), True),
        ("torus_thin", _torus(0.35, 0.08), True),
        ("torus_thick", transform_mesh(_torus(0.3, 0.15), rotation=_rotation("x", 40)), True),
        ("plane_tilted", tilted, False),
        ("plane_aligned", make_primitive("plane", subdivisions=3), False),
        ("pair", _pair(), True),
        ("chain", _chain(), True),
        ("cluster", _cluster(), True),
    ]
    return {
        name: Fixture(name, normalize_mesh(mesh), closed)
        for name, mesh, closed in raw
    }


@lru_cache(maxsize=1)
def all_fixtures() -> Dict[str, Fixture]:
    return _build()


def fixture(name: str) -> Fixture:
    fixtures = all_fixtures()
    if name not in fixtures:
        raise MissingInputError(f"fixture:{name}")
    return fixtures[name]


# the scenes of the stitch-exactness check
STITCH_SCENES = ("cube", "sphere_s2", "torus_thin", "pair", "chain", "cluster")


def stitch_scenes() -> Dict[str, TriangleMesh]:
    return {name: fixture(name).mesh for name in STITCH_SCENES}


def load_scene_dir(directory: Path) -> Dict[str, TriangleMesh]:
    """Every .obj / .vmsh mesh of a directory, normalized, keyed by file stem."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingInputError(str(directory))
    paths = sorted(p for p in directory.iterdir() if p.suffix.lower() in (".obj", ".vmsh"))
    return {p.stem: normalize_mesh(load_mesh(p)) for p in paths}
