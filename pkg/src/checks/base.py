"""
Base check class with common functionality.
"""

from typing import Any, Dict, List

import numpy as np

from ..config import SelftestConfig, log
from ..errors import VoxupError
from ..models import CheckResult
from ..sparse_voxel import SparseVoxelGrid
from ..voxelizer import voxelize_surface


class BaseCheck:
    """One invariant group of the selftest.

    Subclasses implement run(state) and return a CheckResult; process() turns
    that into the partial state update the selftest graph expects.
    """

    group = "base"

    def __init__(self, settings: SelftestConfig):
        self.settings = settings

    def log(self, message: str, level: str = "INFO"):
        """Log a message."""
        log(self.group, message, level)

    def run(self, state: Dict[str, Any]) -> CheckResult:
        raise NotImplementedError("Subclasses must implement run method")

    def result(self, passed: bool, summary: str, **details: Any) -> CheckResult:
        self.log(("✅ " if passed else "❌ ") + summary, "INFO" if passed else "ERROR")
        return CheckResult(group=self.group, passed=passed, summary=summary, details=details)

    def process(self, state: Dict[str, Any]) -> Dict[str, Any]:
        try:
            result = self.run(state)
        except VoxupError as e:
            self.log(f"Error during check: {e.message}", "ERROR")
            failed = CheckResult(group=self.group, passed=False, summary=e.message, details=e.to_dict())
            return {
                "group_results": state.get("group_results", []) + [failed],
                "errors": state.get("errors", []) + [f"{self.group} error: {e.message}"],
            }
        return {"group_results": state.get("group_results", []) + [result]}


def voxelized(state: Dict[str, Any], name: str, resolution: int) -> SparseVoxelGrid:
    """Surface voxelization of a fixture, shared between groups through the state cache."""
    cache = state["voxel_cache"]
    key = (name, resolution)
    if key not in cache:
        cache[key] = voxelize_surface(state["fixtures"][name].mesh, resolution, threads=state.get("threads", 1))
    return cache[key]


def same_grid(a: SparseVoxelGrid, b: SparseVoxelGrid) -> bool:
    return a.resolution == b.resolution and np.array_equal(a.keys(), b.keys())


def failures_summary(failures: List[str], limit: int = 5) -> str:
    shown = ", ".join(failures[:limit])
    return shown + (f" (+{len(failures) - limit} more)" if len(failures) > limit else "")
