"""
View-domain invariant groups: tile-stitch exactness and the memory ordering.
"""

import math
from typing import Any, Dict

from ..membench import bench_all, default_memory_model, ordering_holds
from ..models import CheckResult, StitchCase, StitchCheckReport
from ..partition import random_cameras, splat_world_margin
from ..render import stitch_check
from ..fixtures import STITCH_SCENES
from .anchoring import upsample_report
from .base import BaseCheck, failures_summary, voxelized

NEGATIVE_CONTROL_RADIUS = 3.0


class StitchCheck(BaseCheck):
    """Stitched tile renders equal the full render; an undersized margin must break it."""

    group = "stitch"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        s = self.settings
        size = s.stitch_image_size
        radius = state["splat_radius_px"]
        cameras = random_cameras(s.stitch_cameras, state["seed"], width=size, height=size)
        margin_px = int(math.ceil(radius))

        cases, control = [], []
        for name in STITCH_SCENES:
            grid = voxelized(state, name, s.stitch_resolution)
            for n in s.stitch_tilings:
                for i, camera in enumerate(cameras):
                    world = splat_world_margin(camera, radius)
                    diff = stitch_check(grid, [camera], n, margin_px, radius, world,
                                        threads=state.get("threads", 1))[0]
                    cases.append(StitchCase(scene=name, camera=i, grid_n=n, margin_px=margin_px,
                                            splat_radius_px=radius, world_margin=world,
                                            differing_pixels=diff))
            # no pixel margin, no world margin, point-sized voxels
            n = max(s.stitch_tilings)
            for i, camera in enumerate(cameras):
                diff = stitch_check(grid, [camera], n, 0, NEGATIVE_CONTROL_RADIUS, 0.0,
                                    voxel_world_size=0.0)[0]
                control.append(StitchCase(scene=name, camera=i, grid_n=n, margin_px=0,
                                          splat_radius_px=NEGATIVE_CONTROL_RADIUS, world_margin=0.0,
                                          differing_pixels=diff))

        exact = sum(c.differing_pixels == 0 for c in cases)
        detect_rate = sum(c.differing_pixels > 0 for c in control) / len(control) if control else 0.0
        report = StitchCheckReport(cases=cases, exact_cases=exact, total_cases=len(cases),
                                   negative_control=control, negative_control_detect_rate=detect_rate)
        passed = exact == len(cases) and detect_rate >= s.negative_control_rate
        summary = (f"{exact}/{len(cases)} tilings bit-exact; negative control detected on "
                   f"{detect_rate:.0%} of scene/camera pairs")
        return self.result(passed, summary, **report.model_dump())


class MemoryOrderingCheck(BaseCheck):
    """raw >= mask >= mask+block 2x2 >= mask+block 4x4 in modeled bytes on every scene."""

    group = "memory_ordering"

    def run(self, state: Dict[str, Any]) -> CheckResult:
        s = self.settings
        r = s.bench_resolution
        cameras = random_cameras(s.bench_cameras, state["seed"], width=s.stitch_image_size,
                                 height=s.stitch_image_size)
        model = default_memory_model()

        failures, rows = [], {}
        for name in STITCH_SCENES:
            reports = bench_all(state["fixtures"][name].mesh, [r], cameras, model,
                                splat_radius_px=state["splat_radius_px"], threads=state.get("threads", 1))
            by_config = {rep.config: rep for rep in reports}
            raw, mask = by_config["raw"], by_config["mask"]
            redundancy = upsample_report(state, name, r // 2).redundancy_ratio
            ratio = mask.live_voxels / raw.live_voxels
            rows[name] = {rep.config: rep.modeled_bytes for rep in reports}
            rows[name]["mask_raw_ratio"] = ratio

            if not ordering_holds(reports):
                failures.append(f"{name}: ordering")
            if redundancy > 0 and not raw.modeled_bytes > mask.modeled_bytes:
                failures.append(f"{name}: raw not above mask")
            if abs(ratio - (1.0 - redundancy)) > 1e-12:
                failures.append(f"{name}: mask/raw {ratio} vs 1 - redundancy {1.0 - redundancy}")

        if failures:
            return self.result(False, failures_summary(failures), resolution=r, scenes=rows)
        return self.result(True, f"ordering holds on {len(rows)} scenes at res-{r}", resolution=r, scenes=rows)
