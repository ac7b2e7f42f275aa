"""Programmatic entry points shared by the command line and in-process
callers: argument resolution, estimate/sweep/calibration runners."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Mapping

from . import fit as fitmod
from .fit import FitResult, GompertzParams
from .footprint import blocks_per_wave
from .kernels import (
    KernelDescriptor,
    KernelFamily,
    SweepConfig,
    enumerate_sweep,
    kernel_from_dict,
    load_kernel_spec,
)
from .machine import MachineDescriptor, load_machine, v100_preset
from .perf import SweepRow, evaluate_kernel, rank_sweep
from .report import build_estimate_report, ranking_row_dict

BUILTIN_KERNELS = ("builtin:stencil", "builtin:lbm")

DEFAULT_ESTIMATE_GRIDS = {
    "builtin:stencil": (640, 512, 512),
    "builtin:lbm": (256, 128, 128),
}
# sweep grids are sized so every enumerated block shape and folding
# variant tiles them exactly
DEFAULT_SWEEP_GRIDS = {
    "builtin:stencil": (512, 1024, 128),
    "builtin:lbm": (512, 512, 64),
}
DEFAULT_SWEEP_THREADS = {"builtin:stencil": 1024, "builtin:lbm": 512}


def resolve_machine(arg: str | None, machine_dir: str | None = None) -> MachineDescriptor:
    """Machine by name or path; 'v100' is built in.  Other names are
    looked up in machine_dir (default: the GVO_MACHINE_DIR env var)."""
    if arg is None or arg == "v100":
        return v100_preset()
    path = Path(arg)
    if path.exists():
        return load_machine(path)
    directory = machine_dir if machine_dir is not None else os.environ.get("GVO_MACHINE_DIR")
    if directory:
        for candidate in (Path(directory) / arg, Path(directory) / f"{arg}.json"):
            if candidate.exists():
                return load_machine(candidate)
    raise FileNotFoundError(f"machine {arg!r} not found (set GVO_MACHINE_DIR or pass a path)")


def resolve_fit_params(
    arg: str | Mapping | None, machine: MachineDescriptor
) -> dict[str, GompertzParams]:
    """'default' -> machine's params, 'zero' -> all-zero ratios, a path or
    mapping -> explicit triples per role."""
    if arg is None or arg == "default":
        return dict(machine.fit_params)
    if arg == "zero":
        return fitmod.zero_fit_params()
    if isinstance(arg, (str, Path)):
        with open(arg, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        arg = data.get("fitParams", data)
    params = dict(machine.fit_params)
    for role, triple in arg.items():
        if role not in fitmod.ROLES:
            raise fitmod.FitError(f"unknown fit role {role!r}")
        params[role] = GompertzParams(
            float(triple["a"]), float(triple["b"]), float(triple["c"]), role
        )
    return params


def build_kernel(
    kernel_arg: str | Mapping,
    block: tuple[int, int, int],
    folding: str = "none",
    grid: tuple[int, int, int] | None = None,
    *,
    stencil_range: int = 4,
    flops_per_lup: int | None = None,
) -> tuple[KernelDescriptor, tuple[int, int, int]]:
    """Kernel from a builtin name, a spec-file path, or a spec dict;
    returns the kernel and the element grid it iterates."""
    if isinstance(kernel_arg, Mapping):
        kernel = kernel_from_dict(dict(kernel_arg))
        family = KernelFamily(
            "file",
            grid or _file_grid(kernel),
            spec=dict(kernel_arg),
        )
        return family.build(SweepConfig(block, folding)), family.grid
    if kernel_arg in BUILTIN_KERNELS:
        grid = grid or DEFAULT_ESTIMATE_GRIDS[kernel_arg]
        kind = "stencil" if kernel_arg == "builtin:stencil" else "lbm"
        family = KernelFamily(kind, grid, radius=stencil_range, flops_per_lup=flops_per_lup)
        return family.build(SweepConfig(block, folding)), grid
    path = Path(kernel_arg)
    if not path.exists():
        raise FileNotFoundError(f"kernel spec {kernel_arg!r} not found")
    kernel = load_kernel_spec(path)
    family = KernelFamily("file", grid or _file_grid(kernel), spec=kernel_to_spec_dict(path))
    return family.build(SweepConfig(block, folding)), family.grid


def kernel_to_spec_dict(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _file_grid(kernel: KernelDescriptor) -> tuple[int, int, int]:
    eff = tuple(
        b * g for b, g in zip(kernel.launch.block_dim, kernel.launch.grid_dim)
    )
    return eff


def run_estimate(
    kernel_arg: str | Mapping,
    machine_arg: str | None,
    block: tuple[int, int, int],
    *,
    folding: str = "none",
    grid: tuple[int, int, int] | None = None,
    stencil_range: int = 4,
    flops_per_lup: int | None = None,
    fit: str | Mapping | None = None,
    blocks_per_wave_override: int | None = None,
    block_samples: int = 5,
    wave_samples: int = 2,
) -> dict:
    """Full estimate for one configuration; returns the report dict."""
    machine = resolve_machine(machine_arg)
    fit_params = resolve_fit_params(fit, machine)
    kernel, grid_used = build_kernel(
        kernel_arg,
        block,
        folding,
        grid,
        stencil_range=stencil_range,
        flops_per_lup=flops_per_lup,
    )
    prediction = evaluate_kernel(
        kernel,
        machine,
        fit_params,
        block_samples=block_samples,
        wave_samples=wave_samples,
        override_blocks_per_wave=blocks_per_wave_override,
    )
    meta = {
        "kernel": kernel_arg if isinstance(kernel_arg, str) else kernel.name,
        "machine": machine.name,
        "block": list(block),
        "folding": folding,
        "grid": list(grid_used),
        "blocksPerWave": blocks_per_wave_override or blocks_per_wave(kernel.launch, machine),
        "blockSamples": block_samples,
        "waveSamples": wave_samples,
        "accessCount": len(kernel.accesses),
        "workPerThread": kernel.launch.work_per_thread,
    }
    return build_estimate_report(prediction, meta)


def run_sweep(
    kernel_arg: str,
    machine_arg: str | None,
    threads: int | None = None,
    *,
    folding_variants: bool = False,
    grid: tuple[int, int, int] | None = None,
    stencil_range: int = 4,
    flops_per_lup: int | None = None,
    fit: str | Mapping | None = None,
    blocks_per_wave_override: int | None = None,
    block_samples: int = 5,
    wave_samples: int = 2,
    skip_invalid: bool = False,
) -> list[SweepRow]:
    """Enumerate block shapes (optionally crossed with folding variants)
    and rank them by predicted throughput."""
    if kernel_arg not in BUILTIN_KERNELS and not Path(kernel_arg).exists():
        raise FileNotFoundError(f"kernel spec {kernel_arg!r} not found")
    machine = resolve_machine(machine_arg)
    fit_params = resolve_fit_params(fit, machine)
    threads = threads or DEFAULT_SWEEP_THREADS.get(kernel_arg, 1024)
    foldings = ("none", "2y", "2z") if folding_variants else ("none",)
    configs = enumerate_sweep(threads, foldings=foldings)
    if kernel_arg == "builtin:stencil":
        family = KernelFamily(
            "stencil",
            grid or DEFAULT_SWEEP_GRIDS[kernel_arg],
            radius=stencil_range,
            flops_per_lup=flops_per_lup,
        )
    elif kernel_arg == "builtin:lbm":
        family = KernelFamily(
            "lbm", grid or DEFAULT_SWEEP_GRIDS[kernel_arg], flops_per_lup=flops_per_lup
        )
    else:
        spec = kernel_to_spec_dict(Path(kernel_arg))
        kernel = kernel_from_dict(spec)
        family = KernelFamily("file", grid or _file_grid(kernel), spec=spec)
    return rank_sweep(
        family,
        configs,
        machine,
        fit_params,
        block_samples=block_samples,
        wave_samples=wave_samples,
        override_blocks_per_wave=blocks_per_wave_override,
        skip_invalid=skip_invalid,
    )


def read_ranking_csv(path: str | Path) -> dict[str, dict]:
    """Sweep-output rows keyed by configuration."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = {row["configKey"]: row for row in reader}
    if not rows:
        raise fitmod.FitError(f"sweep output {path} holds no rows")
    return rows


def run_footprint(
    kernel_arg: str | Mapping,
    machine_arg: str | None,
    block: tuple[int, int, int],
    *,
    granularity: int | None = None,
    level: str = "block",
    group_index: int | None = None,
    folding: str = "none",
    grid: tuple[int, int, int] | None = None,
    stencil_range: int = 4,
    blocks_per_wave_override: int | None = None,
) -> "FootprintResult":
    """Raw unique/total footprint counts of one collaborative group: a
    representative interior block (level 'block') or one scheduling wave
    (level 'wave'), at the machine's sector granularity by default."""
    from .footprint import (
        block_group,
        build_waves,
        grid_iteration,
        representative_blocks,
        wave_group,
    )

    machine = resolve_machine(machine_arg)
    kernel, _ = build_kernel(
        kernel_arg, block, folding, grid, stencil_range=stencil_range
    )
    granularity = granularity or machine.sector_bytes
    if level == "block":
        if group_index is None:
            groups = representative_blocks(kernel, samples=1)
            group = groups[0]
        else:
            group = block_group(kernel.launch, group_index)
    elif level == "wave":
        waves = build_waves(kernel.launch, machine, blocks_per_wave_override)
        index = len(waves) // 2 if group_index is None else group_index
        if not 0 <= index < len(waves):
            raise ValueError(f"wave index {index} outside 0..{len(waves) - 1}")
        group = wave_group(kernel.launch, waves[index])
    else:
        raise ValueError(f"level must be 'block' or 'wave', got {level!r}")
    return grid_iteration(kernel, group, granularity)


def run_calibrate(measurements_path: str | Path, sweep_csv_path: str | Path) -> dict:
    """Derive per-role ratio observations from measured volumes and fit
    the sigmoid for every role with enough observations."""
    measurements = fitmod.read_measurement_csv(measurements_path)
    estimates = read_ranking_csv(sweep_csv_path)
    derived = fitmod.derive_observations(measurements, estimates)
    results = fitmod.calibrate_all(derived)
    return calibration_to_dict(results, derived)


def calibration_to_dict(results: dict[str, FitResult], derived) -> dict:
    return {
        "fitParams": {
            role: {"a": r.params.a, "b": r.params.b, "c": r.params.c}
            for role, r in sorted(results.items())
        },
        "residuals": {role: r.residual for role, r in sorted(results.items())},
        "observationCounts": {role: r.observation_count for role, r in sorted(results.items())},
        # plot-ready (x, observed ratio) pairs per role
        "observations": {
            role: [[o.x, o.ratio] for o in obs]
            for role, obs in sorted(derived.by_role.items())
            if obs
        },
        "skipped": derived.skipped,
    }


def rows_from_sweep(rows: list[SweepRow]) -> dict[str, dict]:
    """In-memory equivalent of writing and re-reading the ranking CSV."""
    return {row.config.key: ranking_row_dict(row) for row in rows}
