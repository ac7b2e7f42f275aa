"""Per-level data-volume estimates and L1 bank-conflict cycle counts.

Volumes at each level split into a compulsory part (the collaborative
group's unique footprint), a redundant part (repeated requests beyond
it), and a capacity-miss part (the fraction of the redundancy predicted
to miss, via the sigmoid ratio curves).  L2-to-L1 accounting works on one
thread block at 32 B transfer sectors with 128 B line allocation and
write-through stores; DRAM-to-L2 accounting works on waves of
concurrently running blocks, crediting reuse of the previous wave's
footprint through a coverage-dependent overlap term.

Every reported (up, comp, red, cap, down) tuple satisfies
up == comp + red, down == comp + cap and 0 <= cap <= red exactly by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Mapping

import numpy as np

from . import fit as fitmod
from .fit import GompertzParams
from .footprint import (
    CollaborativeGroup,
    GranuleSet,
    _GroupEval,
    _warp_unique_count,
    representative_blocks,
    representative_wave_pairs,
    wave_footprint,
)
from .kernels import KernelDescriptor
from .machine import HALF_WARP, MachineDescriptor, WARP_SIZE

LEVEL_L2L1 = "L2toL1"
LEVEL_DRAM = "DRAMtoL2"


# ---------------------------------------------------------------------------
# L1 <-> register cycles


@dataclass(frozen=True)
class L1CycleEstimate:
    """Cycles the L1 pipeline is busy per lattice update, warp-serialized,
    plus the per-access bank-conflict metric (cycles per half-warp;
    accesses whose half-warps collapse into a single bank report the
    serialization length of the whole warp)."""

    cycles_per_lup: float
    per_access: tuple[float, ...]


def _warp_cycles_scalar(ids: np.ndarray, n_banks: int) -> tuple[float, float]:
    """(warp cycles, reported per-half-warp metric) for one warp."""
    hw_max = []
    hw_banks = []
    for start in range(0, ids.size, HALF_WARP):
        chunk = np.unique(ids[start : start + HALF_WARP])
        banks = chunk % n_banks
        counts = np.bincount(banks, minlength=n_banks)
        hw_max.append(int(counts.max()))
        hw_banks.append(np.flatnonzero(counts))
    single = all(b.size == 1 for b in hw_banks) and len({int(b[0]) for b in hw_banks}) == 1
    if single:
        serial = int(np.unique(ids).size)
        return float(serial), float(serial)
    total = float(sum(hw_max))
    return total, total / len(hw_max)


def _access_cycles(ids: np.ndarray, n_banks: int) -> tuple[float, float]:
    """(total warp cycles, mean per-access metric) over all warps of one
    block for one access."""
    s = ids.size
    if s % WARP_SIZE:
        totals, metrics = [], []
        for start in range(0, s, WARP_SIZE):
            cycles, metric = _warp_cycles_scalar(ids[start : start + WARP_SIZE], n_banks)
            totals.append(cycles)
            metrics.append(metric)
        return float(sum(totals)), float(np.mean(metrics))
    # vectorized path over all half-warps at once
    rows = np.sort(ids.reshape(-1, HALF_WARP), axis=1)
    first = np.ones_like(rows, dtype=bool)
    first[:, 1:] = rows[:, 1:] != rows[:, :-1]
    n_rows = rows.shape[0]
    keys = np.arange(n_rows)[:, None] * n_banks + rows % n_banks
    counts = np.bincount(keys[first].ravel(), minlength=n_rows * n_banks).reshape(n_rows, n_banks)
    hw_max = counts.max(axis=1)
    touched = np.count_nonzero(counts, axis=1)
    bank_of = counts.argmax(axis=1)
    pair_max = hw_max.reshape(-1, 2)
    warp_cycles = pair_max.sum(axis=1).astype(float)
    metric = pair_max.mean(axis=1).astype(float)
    full_conflict = (touched.reshape(-1, 2) == 1).all(axis=1) & (
        bank_of.reshape(-1, 2)[:, 0] == bank_of.reshape(-1, 2)[:, 1]
    )
    if full_conflict.any():
        per_warp = ids.reshape(-1, WARP_SIZE)
        for wi in np.flatnonzero(full_conflict):
            serial = float(np.unique(per_warp[wi]).size)
            warp_cycles[wi] = serial
            metric[wi] = serial
    return float(warp_cycles.sum()), float(metric.mean())


def l1_register_cycles(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    group: CollaborativeGroup | None = None,
) -> L1CycleEstimate:
    """Bank-conflict cycles of a representative block: per access and
    half-warp, addresses map to banks of bank_width_bytes; each extra
    distinct address in a bank costs one cycle.  Stores are costed like
    loads; totals are normalized per lattice update."""
    if group is None:
        groups = representative_blocks(kernel, samples=5)
        group = groups[len(groups) // 2]
    ev = _GroupEval(kernel, group)
    per_access = []
    total_cycles = 0.0
    for access in kernel.accesses:
        ids = ev.addresses(access) // machine.bank_width_bytes
        cycles, metric = _access_cycles(ids, machine.l1_banks)
        total_cycles += access.multiplicity * cycles
        per_access.append(metric)
    return L1CycleEstimate(
        cycles_per_lup=total_cycles / kernel.launch.lups_per_block,
        per_access=tuple(per_access),
    )


# ---------------------------------------------------------------------------
# raw footprint statistics (averaged over representative groups)


@dataclass(frozen=True)
class BlockStats:
    """Per-LUP byte volumes of one thread block, averaged over samples."""

    load_comp: dict[str, float]  # unique sector footprint
    load_up: dict[str, float]  # per-warp-request sector traffic
    load_alloc: dict[str, float]  # unique line-granularity footprint
    store_unique: dict[str, float]
    store_up: dict[str, float]


def sample_block_stats(
    kernel: KernelDescriptor, machine: MachineDescriptor, samples: int = 5
) -> BlockStats:
    sector = machine.sector_bytes
    line = machine.l1_line_bytes
    groups = representative_blocks(kernel, samples)
    keys = ("load_comp", "load_up", "load_alloc", "store_unique", "store_up")
    acc = {key: {f.name: 0.0 for f in kernel.fields} for key in keys}
    for group in groups:
        ev = _GroupEval(kernel, group)
        warp_ids = ev.warp_ids()
        lups = group.lups
        for f in kernel.fields:
            sec32: dict[str, list[np.ndarray]] = {"load": [], "store": []}
            lines128: list[np.ndarray] = []
            up = {"load": 0, "store": 0}
            for access in kernel.accesses:
                if access.field != f.name:
                    continue
                addr = ev.addresses(access)
                g32 = addr // sector
                up[access.kind] += access.multiplicity * _warp_unique_count(g32, warp_ids)
                sec32[access.kind].append(g32)
                if access.kind == "load":
                    lines128.append(addr // line)
            acc["load_comp"][f.name] += GranuleSet.from_arrays(sec32["load"]).count * sector / lups
            acc["load_up"][f.name] += up["load"] * sector / lups
            acc["load_alloc"][f.name] += GranuleSet.from_arrays(lines128).count * line / lups
            acc["store_unique"][f.name] += (
                GranuleSet.from_arrays(sec32["store"]).count * sector / lups
            )
            acc["store_up"][f.name] += up["store"] * sector / lups
    n = len(groups)
    return BlockStats(**{key: {k: v / n for k, v in d.items()} for key, d in acc.items()})


@dataclass(frozen=True)
class WaveStats:
    """Absolute per-wave byte volumes at sector granularity, averaged over
    sampled (previous, current) wave pairs."""

    load_unique: dict[str, float]  # current wave, per field
    load_overlap: dict[str, float]  # intersection with previous wave
    prev_unique_total: float
    store_unique: dict[str, float]
    alloc_total: float  # loads and stores together
    wave_lups: float
    pairs_sampled: int
    has_predecessor: bool


def sample_wave_stats(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    samples: int = 2,
    override_blocks_per_wave: int | None = None,
) -> WaveStats:
    pairs = representative_wave_pairs(kernel, machine, samples, override_blocks_per_wave)
    granularity = machine.sector_bytes
    fields = [f.name for f in kernel.fields]
    cache: dict[int, object] = {}

    def summary(wave):
        if wave.index not in cache:
            cache[wave.index] = wave_footprint(kernel, wave, granularity)
        return cache[wave.index]

    g = float(granularity)
    load_unique = {f: 0.0 for f in fields}
    load_overlap = {f: 0.0 for f in fields}
    store_unique = {f: 0.0 for f in fields}
    prev_total = 0.0
    alloc_total = 0.0
    wave_lups = 0.0
    has_pred = False
    for prev, curr in pairs:
        cs = summary(curr)
        for f in fields:
            load_unique[f] += cs.load_sets[f].count * g
            store_unique[f] += cs.store_counts[f] * g
        alloc_total += cs.alloc_count * g
        wave_lups += cs.lups
        if prev is not None:
            has_pred = True
            ps = summary(prev)
            prev_total += sum(s.count for s in ps.load_sets.values()) * g
            for f in fields:
                load_overlap[f] += cs.load_sets[f].intersection_count(ps.load_sets[f]) * g
    n = len(pairs)
    return WaveStats(
        load_unique={f: v / n for f, v in load_unique.items()},
        load_overlap={f: v / n for f, v in load_overlap.items()},
        prev_unique_total=prev_total / n,
        store_unique={f: v / n for f, v in store_unique.items()},
        alloc_total=alloc_total / n,
        wave_lups=wave_lups / n,
        pairs_sampled=n,
        has_predecessor=has_pred,
    )


# ---------------------------------------------------------------------------
# volume breakdown assembly


@dataclass(frozen=True)
class LevelKindVolumes:
    """Per-LUP byte volumes of one (level, kind) pair."""

    v_up: float
    v_comp: float
    v_red: float
    v_cap: float
    v_down: float
    v_alloc: float
    oversubscription: float
    per_field_down: dict[str, float] = dc_field(default_factory=dict)
    # DRAM-level extras (None for the L2-to-L1 level)
    wave_unique: float | None = None
    v_overlap: float | None = None
    overmiss_bytes: float | None = None
    coverage: float | None = None
    v_red_l2: float | None = None


@dataclass(frozen=True)
class VolumeBreakdown:
    l2l1_load: LevelKindVolumes
    l2l1_store: LevelKindVolumes
    dram_load: LevelKindVolumes
    dram_store: LevelKindVolumes

    def level_kind(self, level: str, kind: str) -> LevelKindVolumes:
        table = {
            (LEVEL_L2L1, "load"): self.l2l1_load,
            (LEVEL_L2L1, "store"): self.l2l1_store,
            (LEVEL_DRAM, "load"): self.dram_load,
            (LEVEL_DRAM, "store"): self.dram_store,
        }
        return table[(level, kind)]


def _assemble(comp_f: dict, up_f: dict, cap_basis_f: dict, ratio: float):
    """Clamp and combine per-field raw volumes so the identities hold."""
    comp, red, cap, down = {}, {}, {}, {}
    for name, up in up_f.items():
        c = min(comp_f[name], up)
        r = max(0.0, up - c)
        k = min(max(ratio * cap_basis_f.get(name, 0.0), 0.0), r)
        comp[name], red[name], cap[name] = c, r, k
        down[name] = c + k
    return comp, red, cap, down


def _totals(comp, red, cap):
    c = sum(comp.values())
    r = sum(red.values())
    k = min(sum(cap.values()), r)
    return c + r, c, r, k, c + k


def l2_to_l1_volume(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    fit_params: Mapping[str, GompertzParams] | None = None,
    block_stats: BlockStats | None = None,
    samples: int = 5,
) -> tuple[LevelKindVolumes, LevelKindVolumes]:
    """(loads, stores) between L2 and one SM's L1, per lattice update.

    Loads: compulsory = unique sector footprint of the block, allocation
    at line granularity, capacity misses from the l1 ratio curve at
    oversubscription alloc/capacity.  Stores are write-through: every
    warp-level store request reaches L2, so cap == red.
    """
    fit_params = machine.fit_params if fit_params is None else fit_params
    stats = block_stats or sample_block_stats(kernel, machine, samples)

    # oversubscription compares the block's absolute allocation footprint
    # against the cache capacity; traffic volumes stay per-LUP
    alloc = sum(stats.load_alloc.values()) * kernel.launch.lups_per_block
    oversub = alloc / machine.l1_capacity_bytes
    ratio = fitmod.evaluate(fit_params["l1"], oversub)
    red_basis = {f: max(0.0, stats.load_up[f] - stats.load_comp[f]) for f in stats.load_up}
    comp, red, cap, down = _assemble(stats.load_comp, stats.load_up, red_basis, ratio)
    up_t, comp_t, red_t, cap_t, down_t = _totals(comp, red, cap)
    loads = LevelKindVolumes(
        v_up=up_t, v_comp=comp_t, v_red=red_t, v_cap=cap_t, v_down=down_t,
        v_alloc=alloc, oversubscription=oversub, per_field_down=down,
    )

    # write-through: all redundancy is traffic
    store_basis = {f: max(0.0, stats.store_up[f] - stats.store_unique[f]) for f in stats.store_up}
    comp, red, cap, down = _assemble(stats.store_unique, stats.store_up, store_basis, 1.0)
    up_t, comp_t, red_t, cap_t, down_t = _totals(comp, red, cap)
    stores = LevelKindVolumes(
        v_up=up_t, v_comp=comp_t, v_red=red_t, v_cap=cap_t, v_down=down_t,
        v_alloc=alloc, oversubscription=oversub, per_field_down=down,
    )
    return loads, stores


def dram_to_l2_volume(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    l2l1_load: LevelKindVolumes,
    l2l1_store: LevelKindVolumes,
    fit_params: Mapping[str, GompertzParams] | None = None,
    wave_stats: WaveStats | None = None,
    samples: int = 2,
    override_blocks_per_wave: int | None = None,
) -> tuple[LevelKindVolumes, LevelKindVolumes]:
    """(loads, stores) between DRAM and the chip-wide L2, per lattice
    update, from representative wave pairs at sector granularity.

    Loads: the wave's unique footprint less the part overlapping the
    previous wave, which is re-fetched at the coverage-dependent overmiss
    ratio; redundant requests beyond the wave footprint (the L1 level's
    down-traffic) miss at the l2_load ratio of the oversubscription.
    Store redundancy beyond the wave's unique store footprint misses at
    the separate l2_store ratio.
    """
    fit_params = machine.fit_params if fit_params is None else fit_params
    stats = wave_stats or sample_wave_stats(kernel, machine, samples, override_blocks_per_wave)
    lups = stats.wave_lups
    fields = list(stats.load_unique)

    oversub = stats.alloc_total / machine.l2_capacity_bytes
    unique = {f: stats.load_unique[f] / lups for f in fields}
    overlap = {f: stats.load_overlap[f] / lups for f in fields}

    coverage = None
    om_ratio = 0.0
    if stats.has_predecessor and stats.prev_unique_total > 0.0:
        net_new = sum(stats.load_unique.values()) - sum(stats.load_overlap.values())
        coverage = (machine.l2_capacity_bytes - net_new) / stats.prev_unique_total
        om_ratio = fitmod.evaluate(fit_params["overmiss"], -coverage)
    else:
        overlap = {f: 0.0 for f in fields}

    up = {f: l2l1_load.per_field_down.get(f, 0.0) for f in fields}
    comp_raw = {f: (unique[f] - overlap[f]) + om_ratio * overlap[f] for f in fields}
    red_basis = {f: max(0.0, up[f] - unique[f]) for f in fields}
    ratio = fitmod.evaluate(fit_params["l2_load"], oversub)
    comp, red, cap, down = _assemble(comp_raw, up, red_basis, ratio)
    up_t, comp_t, red_t, cap_t, down_t = _totals(comp, red, cap)
    loads = LevelKindVolumes(
        v_up=up_t, v_comp=comp_t, v_red=red_t, v_cap=cap_t, v_down=down_t,
        v_alloc=stats.alloc_total, oversubscription=oversub,
        per_field_down=down, wave_unique=sum(unique.values()),
        v_overlap=sum(overlap.values()),
        overmiss_bytes=om_ratio * sum(overlap.values()), coverage=coverage,
        v_red_l2=sum(red_basis.values()),
    )

    store_unique = {f: stats.store_unique[f] / lups for f in fields}
    store_up = {f: l2l1_store.per_field_down.get(f, 0.0) for f in fields}
    store_basis = {f: max(0.0, store_up[f] - store_unique[f]) for f in fields}
    ratio_s = fitmod.evaluate(fit_params["l2_store"], oversub)
    comp, red, cap, down = _assemble(store_unique, store_up, store_basis, ratio_s)
    up_t, comp_t, red_t, cap_t, down_t = _totals(comp, red, cap)
    stores = LevelKindVolumes(
        v_up=up_t, v_comp=comp_t, v_red=red_t, v_cap=cap_t, v_down=down_t,
        v_alloc=stats.alloc_total, oversubscription=oversub,
        per_field_down=down, wave_unique=sum(store_unique.values()),
    )
    return loads, stores


def estimate_volumes(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    fit_params: Mapping[str, GompertzParams] | None = None,
    *,
    block_samples: int = 5,
    wave_samples: int = 2,
    override_blocks_per_wave: int | None = None,
    block_stats: BlockStats | None = None,
    wave_stats: WaveStats | None = None,
) -> VolumeBreakdown:
    l2l1_load, l2l1_store = l2_to_l1_volume(
        kernel, machine, fit_params, block_stats, block_samples
    )
    dram_load, dram_store = dram_to_l2_volume(
        kernel,
        machine,
        l2l1_load,
        l2l1_store,
        fit_params,
        wave_stats,
        wave_samples,
        override_blocks_per_wave,
    )
    return VolumeBreakdown(l2l1_load, l2l1_store, dram_load, dram_store)
