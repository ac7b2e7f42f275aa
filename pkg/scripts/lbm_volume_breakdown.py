#!/usr/bin/env python3
"""Per-field DRAM volume breakdown for the D3Q15 kernel on a few block
shapes, with and without capacity-miss modeling."""

import sys

from gvo import generate_lbm_d3q15, v100_preset, zero_fit_params
from gvo.volumes import estimate_volumes

GRID = (256, 128, 128)
BLOCKS = [(32, 2, 2), (128, 2, 2), (2, 16, 16), (256, 2, 1)]


def main() -> int:
    machine = v100_preset()
    print(f"D3Q15 on {GRID}, V100, DRAM volumes per lattice update [bytes]")
    print(f"{'block':>12} {'pdf (min 240)':>14} {'phi':>8} {'total':>8} {'no-caps total':>14}")
    for block in BLOCKS:
        kernel = generate_lbm_d3q15(GRID, block)
        vols = estimate_volumes(kernel, machine)
        best = estimate_volumes(kernel, machine, fit_params=zero_fit_params())
        pdf = vols.dram_load.per_field_down["pdf_src"] + vols.dram_store.per_field_down["pdf_dst"]
        phi = vols.dram_load.per_field_down["phi"]
        total = vols.dram_load.v_down + vols.dram_store.v_down
        floor = best.dram_load.v_down + best.dram_store.v_down
        print(f"{str(block):>12} {pdf:14.1f} {phi:8.1f} {total:8.1f} {floor:14.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
