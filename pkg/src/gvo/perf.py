"""Four-limiter bottleneck model: DRAM bandwidth, L2 bandwidth, L1-to-
register throughput, and floating-point peak.  Per-limiter times are
computed independently per lattice update and combined by max; the
binding limiter is the slowest one."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .fit import GompertzParams
from .kernels import KernelDescriptor, KernelFamily, SweepConfig
from .machine import MachineDescriptor
from .volumes import (
    L1CycleEstimate,
    VolumeBreakdown,
    estimate_volumes,
    l1_register_cycles,
)

LIMITER_ORDER = ("dram", "l2", "l1", "fp")


class PerfError(ValueError):
    pass


@dataclass(frozen=True)
class PerfPrediction:
    times: dict[str, float]  # seconds per lattice update, machine-wide
    limiter: str
    glups: float
    volumes: VolumeBreakdown
    l1_cycles: L1CycleEstimate
    flops_per_lup: int


def binding_limiter(times: Mapping[str, float]) -> str:
    """Largest time wins; ties break in canonical limiter order."""
    order = [name for name in LIMITER_ORDER if name in times]
    order += [name for name in times if name not in LIMITER_ORDER]
    return max(order, key=lambda name: (times[name], -order.index(name)))


def predict(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    volumes: VolumeBreakdown,
    l1_cycles: L1CycleEstimate,
) -> PerfPrediction:
    if machine.mem_bandwidth_bps <= 0 or machine.l2_bandwidth_bps <= 0:
        raise PerfError("bandwidths must be positive")
    times = {
        "dram": (volumes.dram_load.v_down + volumes.dram_store.v_down) / machine.mem_bandwidth_bps,
        "l2": (volumes.l2l1_load.v_down + volumes.l2l1_store.v_down) / machine.l2_bandwidth_bps,
        "l1": l1_cycles.cycles_per_lup / (machine.sm_count * machine.clock_hz),
        "fp": kernel.flops_per_lup / (machine.flop_per_byte_balance * machine.mem_bandwidth_bps),
    }
    limiter = binding_limiter(times)
    return PerfPrediction(
        times=times,
        limiter=limiter,
        glups=1e-9 / times[limiter],
        volumes=volumes,
        l1_cycles=l1_cycles,
        flops_per_lup=kernel.flops_per_lup,
    )


def evaluate_kernel(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    fit_params: Mapping[str, GompertzParams] | None = None,
    *,
    block_samples: int = 5,
    wave_samples: int = 2,
    override_blocks_per_wave: int | None = None,
) -> PerfPrediction:
    """Full pipeline: footprints, volume breakdown, cycles, prediction."""
    volumes = estimate_volumes(
        kernel,
        machine,
        fit_params,
        block_samples=block_samples,
        wave_samples=wave_samples,
        override_blocks_per_wave=override_blocks_per_wave,
    )
    cycles = l1_register_cycles(kernel, machine)
    return predict(kernel, machine, volumes, cycles)


@dataclass(frozen=True)
class SweepRow:
    config: SweepConfig
    prediction: PerfPrediction


def rank_sweep(
    family: KernelFamily,
    configs: Iterable[SweepConfig],
    machine: MachineDescriptor,
    fit_params: Mapping[str, GompertzParams] | None = None,
    *,
    block_samples: int = 5,
    wave_samples: int = 2,
    override_blocks_per_wave: int | None = None,
    skip_invalid: bool = False,
) -> list[SweepRow]:
    """Evaluate every configuration and order by descending predicted
    throughput, ties broken by the configuration tuple."""
    configs = list(configs)
    if not configs:
        raise PerfError("empty sweep")
    rows = []
    for config in configs:
        try:
            kernel = family.build(config)
        except ValueError:
            if skip_invalid:
                continue
            raise
        prediction = evaluate_kernel(
            kernel,
            machine,
            fit_params,
            block_samples=block_samples,
            wave_samples=wave_samples,
            override_blocks_per_wave=override_blocks_per_wave,
        )
        rows.append(SweepRow(config, prediction))
    rows.sort(key=lambda r: (-r.prediction.glups, r.config.block_dim, r.config.folding))
    return rows
