"""
End-to-end tests of the voxup command line.
"""

import json

import pytest

from src.main import run
from src.sparse_voxel import load_grid, load_mask
from src.tools import camera_files


def invoke(capsys, tmp_path, *args):
    code = run(["--out-dir", str(tmp_path), *args])
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


class TestErrors:
    def test_missing_input_file(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "voxelize", "--in", str(tmp_path / "nope.obj"),
                               "--res", "8", "--out", "x.svox")
        assert code == 1
        assert payload["error"]["code"] == "FILE_NOT_FOUND"

    @pytest.mark.parametrize("subcommand,extra", [
        ("voxelize", ["--res", "8", "--out", "x.svox"]),
        ("upsample", ["--out", "x.svox"]),
    ])
    def test_directory_input_is_a_format_error(self, capsys, tmp_path, subcommand, extra):
        folder = tmp_path / "meshes"
        folder.mkdir()
        code, payload = invoke(capsys, tmp_path, subcommand, "--in", str(folder), *extra)
        assert code == 1
        assert payload["error"]["code"] == "BAD_FORMAT"
        assert payload["error"]["path"] == str(folder)

    def test_unknown_option_is_usage_error(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "voxelize", "--bogus")
        assert code == 2
        assert payload["error"]["code"] == "USAGE"

    def test_bad_resolution(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "voxelize", "--fixture", "cube", "--res", "12", "--out", "c.svox")
        assert code == 1
        assert payload["error"]["code"] == "INVALID_GRID"

    def test_threads_must_be_positive(self, capsys, tmp_path):
        code, _ = invoke(capsys, tmp_path, "--threads", "0", "selftest")
        assert code == 2


class TestVoxelCommands:
    def test_voxelize_writes_grid_and_manifest(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "voxelize", "--fixture", "cube", "--res", "4", "--out", "cube.svox")
        assert code == 0
        assert payload["voxels"] == 56
        assert len(load_grid(tmp_path / "cube.svox")) == 56

        manifest = json.loads((tmp_path / "voxelize.manifest.json").read_text())
        assert manifest["subcommand"] == "voxelize"
        assert manifest["outputs"][0]["path"].endswith("cube.svox")
        assert len(manifest["outputs"][0]["sha256"]) == 64

    def test_voxelize_obj_input(self, capsys, tmp_path):
        mesh = tmp_path / "tri.obj"
        mesh.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n")
        code, payload = invoke(capsys, tmp_path, "voxelize", "--in", str(mesh), "--res", "4", "--out", "tri.svox")
        assert code == 0
        manifest = json.loads((tmp_path / "voxelize.manifest.json").read_text())
        assert manifest["inputs"][0]["path"] == str(mesh)

    def test_upsample(self, capsys, tmp_path):
        invoke(capsys, tmp_path, "voxelize", "--fixture", "sphere_s1", "--res", "8", "--out", "s8.svox")
        code, payload = invoke(capsys, tmp_path, "upsample", "--in", str(tmp_path / "s8.svox"), "--out", "s16.svox")
        assert code == 0
        assert payload["resolution"] == 16
        assert len(load_grid(tmp_path / "s16.svox")) == 8 * len(load_grid(tmp_path / "s8.svox"))

    def test_anchor_on_aligned_plane(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "anchor", "--fixture", "plane_aligned", "--res", "8",
                               "--mask", "plane.vmsk", "--pruned", "plane16.svox", "--levels", "2")
        assert code == 0
        assert payload["redundancy_ratio"] == 0.5
        report = json.loads((tmp_path / "anchor.json").read_text())
        assert report["surface_count"] == 2 * 16 * 16
        assert set(report["timings"]) == {"voxelize_coarse_s", "upsample_s", "voxelize_fine_s", "gt_mask_s"}
        assert "timings" in payload
        levels = json.loads((tmp_path / "anchor.levels.json").read_text())
        assert [lvl["resolution"] for lvl in levels] == [8, 16]
        assert all("timings" in lvl for lvl in levels)
        assert load_mask(tmp_path / "plane.vmsk").popcount == 512
        assert len(load_grid(tmp_path / "plane16.svox")) == 512


class TestViewCommands:
    @pytest.fixture
    def grid_path(self, capsys, tmp_path):
        invoke(capsys, tmp_path, "voxelize", "--fixture", "torus_thin", "--res", "16", "--out", "torus.svox")
        return str(tmp_path / "torus.svox")

    def test_partition(self, capsys, tmp_path, grid_path):
        code, payload = invoke(capsys, tmp_path, "--seed", "3", "partition", "--in", grid_path,
                               "--grid", "2", "--size", "64", "--steps", "8")
        assert code == 0
        assert payload["tiles"] == 4
        assert payload["max_tile_kept_count"] <= payload["global_kept_count"]
        stats = json.loads((tmp_path / "tiles.json").read_text())
        assert len(stats["sampled_schedule"]) == 8
        assert len(camera_files.load(tmp_path / "cameras.json")) == 1

    def test_render_full_and_tile(self, capsys, tmp_path, grid_path):
        code, payload = invoke(capsys, tmp_path, "render", "--in", grid_path, "--size", "64", "--out", "full.png")
        assert code == 0
        assert (payload["width"], payload["height"]) == (64, 64)
        assert payload["covered_pixels"] > 0

        code, payload = invoke(capsys, tmp_path, "render", "--in", grid_path, "--size", "64",
                               "--grid", "2", "--tile", "3", "--out", "tile3.ppm")
        assert code == 0
        assert payload["origin"] == [29, 29]
        assert (tmp_path / "tile3.ppm").exists()

    def test_render_tile_out_of_range(self, capsys, tmp_path, grid_path):
        code, payload = invoke(capsys, tmp_path, "render", "--in", grid_path, "--size", "64",
                               "--grid", "2", "--tile", "4", "--out", "bad.png")
        assert code == 2
        assert payload["error"]["code"] == "USAGE"

    def test_stitch_check(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "stitch-check", "--grid", "2", "--size", "64",
                               "--count", "1", "--res", "16")
        assert code == 0
        assert payload["total_cases"] == 6
        assert payload["exact_cases"] == 6

    def test_bench(self, capsys, tmp_path):
        code, payload = invoke(capsys, tmp_path, "bench", "--fixture", "sphere_s2", "--res", "16",
                               "--size", "64", "--csv", "bench.csv")
        assert code == 0
        assert set(payload["table"]) == {"raw", "mask", "mask+block 2x2", "mask+block 4x4"}
        assert (tmp_path / "bench.csv").read_text().startswith("config")
