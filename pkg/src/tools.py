"""
Artifact and input-file tools for the voxup toolkit.
Reads camera / memory-model JSON and writes every run output with a manifest.
"""

import hashlib
import json
import time
from contextlib import contextmanager
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

from pydantic import BaseModel, ValidationError

from .errors import CameraError, ConfigError, FormatError, MissingInputError, read_input_bytes
from .models import ArtifactRecord, CameraModel, MemoryModel, RunManifest

PathLike = Union[str, Path]

TRACKED_PACKAGES = (
    "numpy", "scipy", "trimesh", "scikit-learn", "pandas", "Pillow", "pydantic", "langgraph",
)


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                digest.update(block)
    except OSError as e:
        raise FormatError(f"Unreadable input {path}: {e.strerror or e}", path=str(path))
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in ("voxup-toolkit",) + TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions


def _read_json(path: PathLike) -> Any:
    path = Path(path)
    data = read_input_bytes(path)
    try:
        return json.loads(data.decode("utf-8"))
    except UnicodeDecodeError:
        raise FormatError(f"{path}: not UTF-8 text", path=str(path))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})", path=str(path))


def _to_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        return payload.model_dump_json(indent=2) + "\n"
    return json.dumps(payload, indent=2) + "\n"


class CameraFileTool:
    """Camera JSON: a single CameraModel object, a list of them, or {"cameras": [...]}."""

    @staticmethod
    def load(path: PathLike) -> List[CameraModel]:
        data = _read_json(path)
        if isinstance(data, dict) and "cameras" in data:
            data = data["cameras"]
        entries = data if isinstance(data, list) else [data]
        cameras = []
        for i, entry in enumerate(entries):
            try:
                cameras.append(CameraModel.model_validate(entry))
            except ValidationError as e:
                raise CameraError(f"{path}: camera {i} is invalid: {e.errors()[0]['msg']}", path=str(path))
        if not cameras:
            raise CameraError(f"{path}: no cameras defined", path=str(path))
        return cameras

    @staticmethod
    def dumps(cameras: Sequence[CameraModel]) -> str:
        return json.dumps({"cameras": [c.model_dump() for c in cameras]}, indent=2) + "\n"


class MemoryModelFileTool:

    @staticmethod
    def load(path: PathLike) -> MemoryModel:
        data = _read_json(path)
        try:
            return MemoryModel.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"{path}: invalid memory model: {e.errors()[0]['msg']}", path=str(path))


class ArtifactWriter:
    """Writes run outputs under one directory and records them for the manifest."""

    def __init__(self, out_dir: PathLike):
        self.out_dir = Path(out_dir)
        self.inputs: List[ArtifactRecord] = []
        self.outputs: List[ArtifactRecord] = []
        self.timings: Dict[str, float] = {}

    def path(self, name: PathLike) -> Path:
        """Relative names land in out_dir; absolute paths are kept as given."""
        p = Path(name)
        return p if p.is_absolute() else self.out_dir / p

    @staticmethod
    def _record(path: Path) -> ArtifactRecord:
        return ArtifactRecord(path=str(path), sha256=sha256_file(path), bytes=path.stat().st_size)

    def record_input(self, path: PathLike):
        path = Path(path)
        if not path.exists():
            raise MissingInputError(str(path))
        if not path.is_file():
            raise FormatError(f"Input is not a regular file: {path}", path=str(path))
        self.inputs.append(self._record(path))

    def record_output(self, path: PathLike) -> Path:
        path = Path(path)
        self.outputs.append(self._record(path))
        return path

    def _prepare(self, name: PathLike) -> Path:
        path = self.path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_text(self, name: PathLike, text: str) -> Path:
        path = self._prepare(name)
        path.write_text(text, encoding="utf-8")
        return self.record_output(path)

    def write_json(self, name: PathLike, payload: Any) -> Path:
        return self.write_text(name, _to_json(payload))

    def write_with(self, name: PathLike, writer) -> Path:
        """Let writer(path) produce the file, then record it."""
        path = self._prepare(name)
        writer(path)
        return self.record_output(path)

    @contextmanager
    def timed(self, stage: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[stage] = round(time.perf_counter() - start, 6)

    def write_manifest(self, subcommand: str, argv: Sequence[str], seed: int, threads: int) -> Path:
        manifest = RunManifest(
            subcommand=subcommand,
            argv=list(argv),
            seed=seed,
            threads=threads,
            versions=package_versions(),
            inputs=self.inputs,
            outputs=self.outputs,
            timings=self.timings,
        )
        path = self._prepare(f"{subcommand}.manifest.json")
        path.write_text(_to_json(manifest), encoding="utf-8")
        return path


# Shared file tools
camera_files = CameraFileTool()
memory_model_files = MemoryModelFileTool()
