"""
Memory accounting for the training configurations.

Counts, not allocations: each configuration is reduced to the number of live
voxel features and the number of voxels that must be splatted at once, and
the MemoryModel turns those into modeled bytes.

    raw              every candidate of the unmasked upsampling chain is live
    mask             only true surface voxels survive the GT mask
    mask+block NxN   as mask, but splats are held for one tile at a time; the
                     splat term is the largest per-tile culled count
"""

import math
import re
from typing import Iterable, List, Optional, Sequence

import pandas as pd

from .config import config, log
from .errors import GridError
from .mesh_io import TriangleMesh
from .models import CameraModel, ConfigReport, MemoryModel
from .partition import cull_tiles, make_tiles, splat_world_margin
from .sparse_voxel import SparseVoxelGrid
from .voxelizer import voxelize_surface

DEFAULT_CONFIGS = ("raw", "mask", "mask+block 2x2", "mask+block 4x4")
_BLOCK = re.compile(r"^mask\+block (\d+)x(\d+)$")


def default_memory_model(budget_bytes: Optional[int] = None) -> MemoryModel:
    m = config.memory
    return MemoryModel(
        bytes_per_voxel_feature=m.bytes_per_voxel_feature,
        bytes_per_splat=m.bytes_per_splat,
        overhead_bytes=m.overhead_bytes,
        budget_bytes=budget_bytes,
    )


def block_size(config_name: str) -> Optional[int]:
    """N for 'mask+block NxN', None for the unblocked configs."""
    if config_name in ("raw", "mask"):
        return None
    match = _BLOCK.match(config_name)
    if not match or match.group(1) != match.group(2):
        raise GridError(f"Unknown configuration '{config_name}' (expected raw, mask or 'mask+block NxN')")
    return int(match.group(1))


def peak_tile_voxels(
    grid: SparseVoxelGrid,
    cameras: Sequence[CameraModel],
    grid_n: int,
    splat_radius_px: float,
    threads: int = 1,
) -> int:
    """Largest culled voxel count over every tile of every camera."""
    peak = 0
    margin_px = int(math.ceil(splat_radius_px))
    for camera in cameras:
        tiles = make_tiles(camera, grid_n, margin_px)
        results = cull_tiles(grid, camera, tiles, splat_world_margin(camera, splat_radius_px),
                             threads=threads)
        peak = max(peak, max(r.kept_count for r in results))
    return peak


def _report(name: str, resolution: int, live: int, peak: Optional[int], model: MemoryModel) -> ConfigReport:
    splat = live if peak is None else peak
    modeled = model.modeled_bytes(live, splat)
    return ConfigReport(
        config=name,
        resolution=resolution,
        live_voxels=live,
        peak_tile_voxels=peak,
        modeled_bytes=modeled,
        over_budget=model.budget_bytes is not None and modeled > model.budget_bytes,
        model=model,
    )


def bench_all(
    mesh: TriangleMesh,
    resolutions: Iterable[int],
    cameras: Sequence[CameraModel],
    model: MemoryModel,
    configs: Sequence[str] = DEFAULT_CONFIGS,
    levels: int = 1,
    splat_radius_px: Optional[float] = None,
    threads: int = 1,
) -> List[ConfigReport]:
    """One ConfigReport per (resolution, config), voxelizing each resolution once.

    resolution is the output resolution R; raw counts come from upsampling
    R / 2^levels without masking.
    """
    if levels < 1:
        raise GridError("levels must be >= 1")
    radius = config.render.splat_radius_px if splat_radius_px is None else splat_radius_px
    blocks = {name: block_size(name) for name in configs}
    if any(n is not None for n in blocks.values()) and not cameras:
        raise GridError("Blocked configurations need at least one camera")

    reports = []
    for resolution in resolutions:
        coarse_res = resolution >> levels
        if coarse_res << levels != resolution:
            raise GridError(f"Resolution {resolution} is not divisible by 2^{levels}")
        coarse = voxelize_surface(mesh, coarse_res, threads=threads)
        surface = voxelize_surface(mesh, resolution, threads=threads)
        raw_live = (8 ** levels) * len(coarse)

        for name, n in blocks.items():
            if name == "raw":
                reports.append(_report(name, resolution, raw_live, None, model))
            elif n is None:
                reports.append(_report(name, resolution, len(surface), None, model))
            else:
                peak = peak_tile_voxels(surface, cameras, n, radius, threads)
                reports.append(_report(name, resolution, len(surface), peak, model))
        log("membench", f"res-{resolution}: raw {raw_live} live voxels, mask {len(surface)}")
    return reports


def bench_config(
    mesh: TriangleMesh,
    resolution: int,
    config_name: str,
    cameras: Sequence[CameraModel],
    model: MemoryModel,
    levels: int = 1,
    splat_radius_px: Optional[float] = None,
    threads: int = 1,
) -> ConfigReport:
    return bench_all(mesh, [resolution], cameras, model, [config_name], levels,
                     splat_radius_px, threads)[0]


def ordering_holds(reports: Sequence[ConfigReport]) -> bool:
    """raw >= mask >= mask+block 2x2 >= mask+block 4x4 ... per resolution, in modeled bytes."""
    by_res = {}
    for r in reports:
        by_res.setdefault(r.resolution, {})[r.config] = r.modeled_bytes
    for row in by_res.values():
        chain = [row[name] for name in _ordered(row)]
        if any(a < b for a, b in zip(chain, chain[1:])):
            return False
    return True


def _ordered(names: Iterable[str]) -> List[str]:
    def rank(name: str):
        n = block_size(name)
        return (0, 0) if name == "raw" else (1, 0) if n is None else (2, n)

    return sorted(names, key=rank)


def bench_table(reports: Sequence[ConfigReport]) -> pd.DataFrame:
    """Configs as rows, one 'res-R' column per resolution; modeled MB, or 'OOM' over budget."""
    records = [
        {
            "config": r.config,
            "column": f"res-{r.resolution}",
            "value": "OOM" if r.over_budget else round(r.modeled_bytes / 2 ** 20, 1),
        }
        for r in reports
    ]
    if not records:
        return pd.DataFrame()
    df = pd.DataFrame(records).pivot(index="config", columns="column", values="value")
    columns = sorted(df.columns, key=lambda c: int(c.split("-")[1]))
    return df.reindex(index=_ordered(df.index), columns=columns)
