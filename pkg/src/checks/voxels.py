"""
Voxel-level invariant groups: containment, exact mask recovery, oracle equivalence.
"""

from typing import Any, Dict

from ..anchor import apply_mask, gt_mask, upsample_traditional
from ..models import CheckResult
from ..sparse_voxel import missing_from
from ..voxelizer import parent_closure_violations, voxelize_dense_oracle
from .base import BaseCheck, failures_summary, same_grid, voxelized


class ContainmentCheck(BaseCheck):
    """Upsampled coarse voxels must contain every fine surface voxel."""

    group = "containment"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        failures, checked = [], 0
        violations = {}
        for name in state["fixtures"]:
            for r in self.settings.containment_resolutions:
                coarse, fine = voxelized(state, name, r), voxelized(state, name, 2 * r)
                missing = len(missing_from(upsample_traditional(coarse), fine))
                orphans = len(parent_closure_violations(fine, coarse))
                checked += 1
                if missing or orphans:
                    failures.append(f"{name}@{r}")
                    violations[f"{name}@{r}"] = {"missing": missing, "orphan_parents": orphans}
        if failures:
            return self.result(False, f"containment violated for {failures_summary(failures)}",
                               violations=violations, cases=checked)
        return self.result(True, f"{checked} fixture/resolution cases, zero violations", cases=checked)


class MaskRecoveryCheck(BaseCheck):
    """Masking the upsampled grid with its GT mask gives back the fine voxelization."""

    group = "mask_recovery"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        failures, checked = [], 0
        for name in state["fixtures"]:
            for r in self.settings.containment_resolutions:
                candidates = upsample_traditional(voxelized(state, name, r))
                truth = voxelized(state, name, 2 * r)
                mask = gt_mask(candidates, truth)
                checked += 1
                if mask.popcount != len(truth) or not same_grid(apply_mask(candidates, mask), truth):
                    failures.append(f"{name}@{r}")
        if failures:
            return self.result(False, f"recovery differs for {failures_summary(failures)}", cases=checked)
        return self.result(True, f"{checked} cases recovered exactly", cases=checked)


class OracleEquivalenceCheck(BaseCheck):
    """Binned voxelizer and dense all-cells oracle agree voxel for voxel."""

    group = "oracle_equivalence"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        failures, checked = [], 0
        for name, fx in state["fixtures"].items():
            for r in self.settings.oracle_resolutions:
                checked += 1
                if not same_grid(voxelized(state, name, r), voxelize_dense_oracle(fx.mesh, r)):
                    failures.append(f"{name}@{r}")
        if failures:
            return self.result(False, f"oracle mismatch for {failures_summary(failures)}", cases=checked)
        return self.result(True, f"{checked} cases identical to the dense oracle", cases=checked)
