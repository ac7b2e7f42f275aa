"""In-process bindings to the gvo estimator for code-generation
frameworks: estimate, sweep and calibrate without shelling out, plus a
builder for kernel-spec objects mirroring the file schema.

All output goes through the same serialization path as the command line,
so ``estimate_json`` is byte-identical to ``gvo estimate --format json``
for the same inputs.
"""

from __future__ import annotations

import json
from typing import Mapping

from gvo import api
from gvo.kernels import SCHEMA_VERSION, kernel_from_dict
from gvo.report import ranking_row_dict, render_json, render_ranking_csv

__version__ = "0.1.0"

__all__ = [
    "KernelSpecBuilder",
    "estimate",
    "estimate_json",
    "sweep",
    "sweep_csv",
    "calibrate",
]


def estimate(
    kernel: str | Mapping,
    machine: str | None = "v100",
    block: tuple[int, int, int] = (32, 1, 1),
    *,
    folding: str = "none",
    grid: tuple[int, int, int] | None = None,
    stencil_range: int = 4,
    flops_per_lup: int | None = None,
    fit: str | Mapping | None = None,
    blocks_per_wave: int | None = None,
    block_samples: int = 5,
    wave_samples: int = 2,
) -> dict:
    """Volume breakdown and prediction for one configuration.

    ``kernel`` is a builtin name (``builtin:stencil``/``builtin:lbm``), a
    spec-file path, or a kernel-spec dict (see KernelSpecBuilder).
    Raises the estimator's validation errors unchanged.
    """
    return api.run_estimate(
        kernel,
        machine,
        tuple(block),
        folding=folding,
        grid=grid,
        stencil_range=stencil_range,
        flops_per_lup=flops_per_lup,
        fit=fit,
        blocks_per_wave_override=blocks_per_wave,
        block_samples=block_samples,
        wave_samples=wave_samples,
    )


def estimate_json(*args, **kwargs) -> str:
    """The estimate report as canonical JSON text (no trailing newline);
    byte-identical to the CLI's --format json document."""
    return render_json(estimate(*args, **kwargs))


def _sweep_rows(
    kernel: str,
    machine: str | None,
    threads: int | None,
    *,
    folding_variants: bool = False,
    grid: tuple[int, int, int] | None = None,
    stencil_range: int = 4,
    flops_per_lup: int | None = None,
    fit: str | Mapping | None = None,
    blocks_per_wave: int | None = None,
    block_samples: int = 5,
    wave_samples: int = 2,
    skip_invalid: bool = False,
):
    return api.run_sweep(
        kernel,
        machine,
        threads,
        folding_variants=folding_variants,
        grid=grid,
        stencil_range=stencil_range,
        flops_per_lup=flops_per_lup,
        fit=fit,
        blocks_per_wave_override=blocks_per_wave,
        block_samples=block_samples,
        wave_samples=wave_samples,
        skip_invalid=skip_invalid,
    )


def sweep(kernel: str, machine: str | None = "v100", threads: int | None = None, **kwargs) -> list[dict]:
    """Ranked sweep rows (the ranking CSV columns, as dicts)."""
    return [ranking_row_dict(row) for row in _sweep_rows(kernel, machine, threads, **kwargs)]


def sweep_csv(kernel: str, machine: str | None = "v100", threads: int | None = None, **kwargs) -> str:
    """The ranked sweep as CSV text, identical to ``gvo sweep`` output."""
    return render_ranking_csv(_sweep_rows(kernel, machine, threads, **kwargs))


def calibrate(measurements_csv: str, sweep_output_csv: str) -> dict:
    """Fit the per-role ratio curves from a measurement CSV against a
    sweep output CSV; returns the calibration dict (fitParams,
    residuals, observationCounts, skipped)."""
    return api.run_calibrate(measurements_csv, sweep_output_csv)


class KernelSpecBuilder:
    """Builds kernel-spec dicts matching the file schema.

    >>> spec = (KernelSpecBuilder()
    ...         .field("src", 8, (640, 512, 512))
    ...         .field("dst", 8, (640, 512, 512))
    ...         .load("src", "src + (tidx + bidx*BX)*8")
    ...         .store("dst", "dst + (tidx + bidx*BX)*8")
    ...         .launch((64, 1, 1), (10, 512, 512))
    ...         .flops(2)
    ...         .build())
    """

    def __init__(self, name: str = "kernel"):
        self._data = {
            "schemaVersion": SCHEMA_VERSION,
            "name": name,
            "fields": [],
            "accesses": [],
            "launch": None,
            "flopsPerLup": 0,
        }

    def field(self, name, element_size, extents, alignment=0, strides=None):
        entry = {
            "name": name,
            "elementSize": int(element_size),
            "extents": [int(e) for e in extents],
            "alignment": int(alignment),
        }
        if strides is not None:
            entry["strides"] = [int(s) for s in strides]
        self._data["fields"].append(entry)
        return self

    def access(self, field, kind, expr, multiplicity=1):
        self._data["accesses"].append(
            {"field": field, "kind": kind, "expr": expr, "multiplicity": int(multiplicity)}
        )
        return self

    def load(self, field, expr, multiplicity=1):
        return self.access(field, "load", expr, multiplicity)

    def store(self, field, expr, multiplicity=1):
        return self.access(field, "store", expr, multiplicity)

    def launch(self, block_dim, grid_dim, work_per_thread=1):
        self._data["launch"] = {
            "blockDim": [int(v) for v in block_dim],
            "gridDim": [int(v) for v in grid_dim],
            "workPerThread": int(work_per_thread),
        }
        return self

    def flops(self, flops_per_lup):
        self._data["flopsPerLup"] = int(flops_per_lup)
        return self

    def build(self) -> dict:
        if self._data["launch"] is None:
            raise ValueError("launch configuration not set")
        kernel_from_dict(self._data)  # validate eagerly
        return json.loads(json.dumps(self._data))
