"""
Anchoring invariant groups: redundancy statistics, order-insensitive supervision, surrogate scorer.
"""

from typing import Any, Dict

import numpy as np

from ..anchor import (
    bce_loss,
    gt_mask,
    half_cell_diagonal,
    mask_metrics,
    shuffled_alignment_roundtrip,
    surrogate_scores,
    upsample_traditional,
)
from ..errors import AlignmentError
from ..models import CheckResult, UpsampleReport
from ..sparse_voxel import hash_align
from .base import BaseCheck, failures_summary, voxelized

ALIGNED_PLANE = "plane_aligned"
ALIGNMENT_FIXTURE = "sphere_s3"
SURROGATE_FIXTURE = "sphere_s2"
SURROGATE_RESOLUTION = 16


def upsample_report(state: Dict[str, Any], name: str, resolution: int) -> UpsampleReport:
    coarse = voxelized(state, name, resolution)
    mask = gt_mask(upsample_traditional(coarse), voxelized(state, name, 2 * resolution))
    return UpsampleReport.from_counts(resolution, len(coarse), mask.popcount)


class RedundancyCheck(BaseCheck):
    """Fraction of upsampled candidates that are off-surface, per fixture."""

    group = "redundancy"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        r = self.settings.redundancy_resolution
        lo, hi = self.settings.redundancy_band
        tol = self.settings.redundancy_tolerance

        ratios, failures = {}, []
        for name, fx in state["fixtures"].items():
            ratio = upsample_report(state, name, r).redundancy_ratio
            ratios[name] = ratio
            if name == ALIGNED_PLANE and ratio != 0.5:
                failures.append(f"{name}={ratio:.4f} (expected exactly 0.5)")
            elif fx.redundancy_band_applies and not lo - tol <= ratio <= hi:
                failures.append(f"{name}={ratio:.4f}")

        closed = [ratios[n] for n, fx in state["fixtures"].items() if fx.closed]
        mean_closed = float(np.mean(closed)) if closed else 0.0
        details = {"resolution": r, "ratios": ratios, "mean_closed_ratio": mean_closed,
                   "band": [lo, hi], "tolerance": tol}
        if failures:
            return self.result(False, f"outside band at {r}->{2 * r}: {failures_summary(failures)}", **details)
        return self.result(True, f"{r}->{2 * r}: mean redundancy over closed fixtures {mean_closed:.2%}", **details)


class AlignmentCheck(BaseCheck):
    """Shuffled-order labels map back to the canonical GT mask; bad orders are rejected."""

    group = "alignment"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        r = self.settings.alignment_grid_resolution
        candidates = upsample_traditional(voxelized(state, ALIGNMENT_FIXTURE, r))
        truth = voxelized(state, ALIGNMENT_FIXTURE, 2 * r)
        expected = gt_mask(candidates, truth).values

        exact = 0
        for i in range(self.settings.alignment_shuffles):
            rng = np.random.default_rng([state["seed"], i])
            trip = shuffled_alignment_roundtrip(candidates, truth, rng)
            exact += int(np.array_equal(trip.recovered_mask.values, expected))

        coords = candidates.coords.astype(np.int64)
        absent = np.setdiff1d(np.arange(len(candidates) + 1), candidates.keys())[0]
        foreign = coords.copy()
        foreign[0] = [absent // (2 * r) ** 2, (absent // (2 * r)) % (2 * r), absent % (2 * r)]
        duplicate = coords.copy()
        duplicate[0] = duplicate[1]
        bad_orders = {"truncated": coords[:-1], "duplicate": duplicate, "foreign": foreign}
        rejected = []
        for label, order in bad_orders.items():
            try:
                hash_align(candidates, order)
            except AlignmentError:
                rejected.append(label)

        shuffles = self.settings.alignment_shuffles
        details = {"grid_size": len(candidates), "shuffles": shuffles, "exact": exact,
                   "rejected": rejected}
        passed = exact == shuffles and len(rejected) == len(bad_orders) and len(candidates) >= 10_000
        summary = (f"{exact}/{shuffles} shuffles of {len(candidates)} voxels exact, "
                   f"{len(rejected)}/{len(bad_orders)} bad orders rejected")
        return self.result(passed, summary, **details)


class SurrogateCheck(BaseCheck):
    """Distance-logistic scores at tau = half cell diagonal recover the GT mask."""

    group = "surrogate"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        r = SURROGATE_RESOLUTION
        mesh = state["fixtures"][SURROGATE_FIXTURE].mesh
        candidates = upsample_traditional(voxelized(state, SURROGATE_FIXTURE, r))
        target = gt_mask(candidates, voxelized(state, SURROGATE_FIXTURE, 2 * r))
        scores = surrogate_scores(candidates, mesh, half_cell_diagonal(), self.settings.surrogate_beta)
        metrics = mask_metrics(scores, target)
        loss = bce_loss(scores, target)

        passed = metrics.recall > self.settings.surrogate_min_recall
        summary = (f"{SURROGATE_FIXTURE} {r}->{2 * r}: recall {metrics.recall:.4f}, "
                   f"precision {metrics.precision:.4f}, IoU {metrics.iou:.4f}, BCE {loss:.4f}")
        return self.result(passed, summary, metrics=metrics.model_dump(), bce=loss,
                           beta=self.settings.surrogate_beta)
