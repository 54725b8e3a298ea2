"""
Error types for the voxup toolkit.
Every error carries a stable machine-readable code used by the CLI error JSON.
"""

from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union


class VoxupError(Exception):
    """Base class for all toolkit errors."""

    code = "INTERNAL"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {"code": self.code, "message": self.message}
        payload.update({k: v for k, v in self.details.items() if v is not None})
        return payload


class MissingInputError(VoxupError):
    code = "FILE_NOT_FOUND"

    def __init__(self, path: str):
        super().__init__(f"Input file not found: {path}", path=str(path))


class FormatError(VoxupError):
    code = "BAD_FORMAT"


class MeshParseError(VoxupError):
    code = "PARSE_ERROR"

    def __init__(self, message: str, line: Optional[int] = None, path: Optional[str] = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message, line=line, path=path)
        self.line = line


class MeshError(VoxupError):
    code = "INVALID_MESH"


class GridError(VoxupError):
    code = "INVALID_GRID"


class ResolutionMismatchError(GridError):
    code = "RESOLUTION_MISMATCH"

    def __init__(self, left: int, right: int):
        super().__init__(f"Resolution mismatch: {left} vs {right}", left=left, right=right)


class LengthMismatchError(VoxupError):
    code = "LENGTH_MISMATCH"

    def __init__(self, what: str, expected: int, actual: int):
        super().__init__(
            f"{what}: expected length {expected}, got {actual}",
            expected=expected,
            actual=actual,
        )


class AlignmentError(VoxupError):
    code = "ALIGNMENT_ERROR"


class ContainmentError(VoxupError):
    """Truth voxels missing from the upsampled candidates."""

    code = "CONTAINMENT_VIOLATION"
    max_reported = 20

    def __init__(self, missing: Sequence[Sequence[int]]):
        missing_list: List[List[int]] = [list(map(int, c)) for c in missing]
        super().__init__(
            f"{len(missing_list)} truth voxel(s) are not among the candidates "
            "(non-conservative voxelization upstream?)",
            missing_count=len(missing_list),
            missing=missing_list[: self.max_reported],
        )
        self.missing = missing_list


class CameraError(VoxupError):
    code = "INVALID_CAMERA"


class TilingError(VoxupError):
    code = "TILING_ERROR"


class MetricError(VoxupError):
    code = "DIMENSION_MISMATCH"


class ConfigError(VoxupError):
    code = "CONFIG_ERROR"


class UsageError(VoxupError):
    code = "USAGE"


class RenderError(VoxupError):
    code = "INVALID_RENDER"


def read_input_bytes(path: Union[str, Path]) -> bytes:
    """Read an input file, mapping filesystem failures to typed input errors."""
    path = Path(path)
    if not path.exists():
        raise MissingInputError(str(path))
    if not path.is_file():
        raise FormatError(f"Input is not a regular file: {path}", path=str(path))
    try:
        return path.read_bytes()
    except OSError as e:
        raise FormatError(f"Unreadable input {path}: {e.strerror or e}", path=str(path))
