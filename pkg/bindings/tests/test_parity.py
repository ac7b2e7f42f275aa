"""Binding parity: in-process output must match the CLI byte for byte."""

import json
import subprocess
import sys

import pytest

import gvo_bindings as gb

LIGHT = {"wave_samples": 1, "block_samples": 2, "blocks_per_wave": 40}

GOLDEN_CONFIGS = [
    ("builtin:stencil", (16, 2, 32), "none", None),
    ("builtin:stencil", (32, 2, 16), "2z", None),
    ("builtin:stencil", (16, 8, 8), "none", None),
    ("builtin:stencil", (512, 2, 1), "2y", (512, 1024, 128)),
    ("builtin:stencil", (2, 512, 1), "none", (512, 1024, 128)),
    ("builtin:stencil", (32, 1, 32), "2z", (512, 512, 128)),
    ("builtin:lbm", (32, 2, 2), "none", (256, 128, 128)),
    ("builtin:lbm", (128, 2, 2), "none", (256, 128, 128)),
    ("builtin:lbm", (2, 16, 16), "none", (128, 64, 64)),
    ("builtin:lbm", (256, 2, 1), "none", (256, 128, 128)),
]


def cli_json_bytes(kernel, block, folding, grid) -> bytes:
    argv = [
        sys.executable, "-m", "gvo.cli",
        "estimate", "--kernel", kernel,
        "--block", ",".join(map(str, block)),
        "--folding", folding,
        "--format", "json",
        "--wave-samples", str(LIGHT["wave_samples"]),
        "--block-samples", str(LIGHT["block_samples"]),
        "--blocks-per-wave", str(LIGHT["blocks_per_wave"]),
    ]
    if grid:
        argv += ["--grid", ",".join(map(str, grid))]
    result = subprocess.run(argv, capture_output=True, check=True)
    return result.stdout


@pytest.mark.parametrize("kernel,block,folding,grid", GOLDEN_CONFIGS)
def test_estimate_matches_cli_byte_for_byte(kernel, block, folding, grid):
    text = gb.estimate_json(kernel, "v100", block, folding=folding, grid=grid, **LIGHT)
    assert (text + "\n").encode() == cli_json_bytes(kernel, block, folding, grid)


def test_estimate_returns_parsed_report():
    report = gb.estimate("builtin:stencil", "v100", (16, 4, 4), grid=(128, 128, 64), **LIGHT)
    assert report["performance"]["limiter"] in ("dram", "l2", "l1", "fp")
    v = report["volumes"]["L2toL1"]["load"]
    assert v["vUp"] == v["vComp"] + v["vRed"]
    # the dict is exactly the parsed JSON document
    assert report == json.loads(gb.estimate_json("builtin:stencil", "v100", (16, 4, 4), grid=(128, 128, 64), **LIGHT))


def test_invalid_expression_raises():
    spec = (
        gb.KernelSpecBuilder()
        .field("a", 8, (1024,))
        .load("a", "a + tidx * 8")
        .launch((32, 1, 1), (32, 1, 1))
    )
    spec._data["accesses"][0]["expr"] = "a + tidx // 0"
    with pytest.raises(ValueError):
        spec.build()


def test_spec_builder_round_trips_through_estimate():
    spec = (
        gb.KernelSpecBuilder("copy")
        .field("src", 8, (2048, 64, 64))
        .field("dst", 8, (2048, 64, 64))
        .load("src", "src + (tidx + bidx*BX + (tidy + bidy*BY) * 2048 + (tidz + bidz*BZ) * 131072) * 8")
        .store("dst", "dst + (tidx + bidx*BX + (tidy + bidy*BY) * 2048 + (tidz + bidz*BZ) * 131072) * 8")
        .launch((256, 1, 1), (8, 64, 64))
        .flops(1)
        .build()
    )
    report = gb.estimate(spec, "v100", (256, 1, 1), **LIGHT)
    dram = report["volumes"]["DRAMtoL2"]
    assert dram["load"]["vDown"] + dram["store"]["vDown"] == pytest.approx(16.0, rel=0.01)


def test_sweep_length_162():
    rows = gb.sweep("builtin:stencil", "v100", 1024, folding_variants=True, **LIGHT)
    assert len(rows) == 162
    keys = [r["configKey"] for r in rows]
    assert len(set(keys)) == 162
    glups = [r["predictedGLups"] for r in rows]
    assert glups == sorted(glups, reverse=True)


def test_sweep_csv_matches_cli(tmp_path):
    argv = [
        sys.executable, "-m", "gvo.cli",
        "sweep", "--kernel", "builtin:stencil", "--threads", "64",
        "--grid", "64,64,64", "--stencil-range", "1",
        "--wave-samples", "1", "--block-samples", "1",
    ]
    cli = subprocess.run(argv, capture_output=True, check=True).stdout
    text = gb.sweep_csv(
        "builtin:stencil", "v100", 64,
        grid=(64, 64, 64), stencil_range=1, wave_samples=1, block_samples=1,
    )
    assert text.encode() == cli


def test_calibrate_via_files(tmp_path):
    sweep_csv = tmp_path / "sweep.csv"
    sweep_csv.write_text(
        gb.sweep_csv(
            "builtin:stencil", "v100", 256,
            grid=(256, 256, 64), wave_samples=1, block_samples=2,
        ),
        encoding="utf-8",
    )
    rows = sweep_csv.read_text().strip().splitlines()
    header = rows[0].split(",")
    idx = {name: i for i, name in enumerate(header)}
    lines = ["configKey,level,kind,measuredBytesPerLup"]
    for row in rows[1:]:
        cells = row.split(",")
        lines.append(f"{cells[idx['configKey']]},DRAMtoL2,load,{cells[idx['dramLoadDown']]}")
        lines.append(f"{cells[idx['configKey']]},DRAMtoL2,store,{cells[idx['dramStoreDown']]}")
    meas = tmp_path / "meas.csv"
    meas.write_text("\n".join(lines) + "\n", encoding="utf-8")
    result = gb.calibrate(str(meas), str(sweep_csv))
    assert set(result["fitParams"]) <= {"l1", "l2_load", "l2_store", "overmiss"}
    assert "l2_store" in result["fitParams"]
