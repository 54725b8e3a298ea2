"""
Loss and metric correctness against direct-formula references.
"""

import math
from typing import Any, Dict

import numpy as np

from ..anchor import bce_loss
from ..models import CheckResult
from ..partition import look_at, make_tiles
from ..render import l1_loss, psnr, ssim
from ..sparse_voxel import VoxelMask
from .base import BaseCheck
from .reference import bce_reference, l1_reference, psnr_reference, ssim_reference

TRIALS = 1000
IMAGE_SIZE = 64


class LossCheck(BaseCheck):
    group = "losses"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        rng = np.random.default_rng(state["seed"])
        problems = []

        target = VoxelMask(rng.random(TRIALS) < 0.3)
        half = bce_loss(VoxelMask(np.full(TRIALS, 0.5), soft=True), target)
        if abs(half - math.log(2.0)) > 1e-9:
            problems.append(f"BCE(0.5) = {half}")

        pred = rng.random(TRIALS)
        if abs(bce_loss(VoxelMask(pred, soft=True), target) - bce_reference(pred, target.values)) > 1e-9:
            problems.append("BCE differs from the reference")

        not_decreasing = 0
        for _ in range(TRIALS):
            p = rng.uniform(0.01, 0.99, 32)
            t = rng.random(32) < 0.5
            j = rng.integers(32)
            q = p.copy()
            q[j] = p[j] + rng.uniform(0.1, 0.9) * (float(t[j]) - p[j])
            if not bce_loss(VoxelMask(q, soft=True), VoxelMask(t)) < bce_loss(VoxelMask(p, soft=True), VoxelMask(t)):
                not_decreasing += 1
        if not_decreasing:
            problems.append(f"BCE not monotone in {not_decreasing} perturbations")

        x = rng.random((IMAGE_SIZE, IMAGE_SIZE, 3))
        y = rng.random((IMAGE_SIZE, IMAGE_SIZE, 3))
        if ssim(x, x) != 1.0 or l1_loss(x, x) != 0.0:
            problems.append("identity SSIM/L1 not exact")
        deltas = {
            "ssim": abs(ssim(x, y) - ssim_reference(x, y)),
            "l1": abs(l1_loss(x, y) - l1_reference(x, y)),
            "psnr": abs(psnr(x, y) - psnr_reference(x, y)),
        }
        problems += [f"{k} off by {v:.2e}" for k, v in deltas.items() if v > 1e-6]

        gray = np.full((IMAGE_SIZE, IMAGE_SIZE, 3), 0.25)
        if abs(l1_loss(gray, gray + 0.5) - 0.5) > 1e-12:
            problems.append("L1 of a 0.5 shift is not 0.5")

        # per-core L1 sums back to the full-image L1
        camera = look_at((0.0, 0.0, -2.0), width=IMAGE_SIZE, height=IMAGE_SIZE)
        total = sum(
            l1_loss(x[t.core.slices()], y[t.core.slices()]) * t.core.area
            for t in make_tiles(camera, 4, 0)
        )
        if abs(total / (IMAGE_SIZE * IMAGE_SIZE) - l1_loss(x, y)) > 1e-12:
            problems.append("tile-core L1 does not decompose the full L1")

        details = {"bce_half": half, "reference_deltas": deltas, "monotonicity_trials": TRIALS}
        if problems:
            return self.result(False, "; ".join(problems), **details)
        return self.result(True, "BCE, L1, SSIM and PSNR match their references", **details)
