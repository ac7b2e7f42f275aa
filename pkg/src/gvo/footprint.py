"""Unique-footprint enumeration for collaborative thread groups.

The engine evaluates every access's address expression over all threads
of a group (one thread block for the L1 level, one wave of concurrently
running blocks for the L2 level), floor-divides addresses by a byte
granularity and counts unique granules per field, loads and stores
separated.  Different fields never alias and are counted separately; the
unknown base address of a field is replaced by its alignment offset.

A deliberately simple per-thread scalar oracle with Python sets provides
an independent reference for the vectorized path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .expr import ThreadCoord, affine_parts, evaluate, evaluate_bulk, value_bounds
from .kernels import Access, KernelDescriptor, LaunchConfig
from .machine import MachineDescriptor, WARP_SIZE

# Above this granule span per field, unique counting falls back from a
# bitmap to sorted arrays.
_BITMAP_SPAN_LIMIT = 1 << 27


class FootprintError(ValueError):
    pass


@dataclass(frozen=True)
class Wave:
    """One set of concurrently running thread blocks, consecutive in the
    x-fastest linearization of the block grid."""

    index: int
    start: int
    count: int

    @property
    def block_linear(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.count, dtype=np.int64)


def blocks_per_wave(launch: LaunchConfig, machine: MachineDescriptor) -> int:
    threads = launch.threads_per_block
    if threads > machine.max_threads_per_block:
        raise FootprintError(
            f"block of {threads} threads exceeds machine limit {machine.max_threads_per_block}"
        )
    per_sm = min(machine.max_blocks_per_sm, machine.max_threads_per_sm // threads)
    if per_sm < 1:
        raise FootprintError(f"block of {threads} threads exceeds per-SM thread capacity")
    return machine.sm_count * per_sm


def build_waves(
    launch: LaunchConfig,
    machine: MachineDescriptor,
    override_blocks_per_wave: int | None = None,
) -> list[Wave]:
    """Partition the block grid into consecutive waves in X-Y-Z order."""
    per_wave = override_blocks_per_wave or blocks_per_wave(launch, machine)
    if per_wave < 1:
        raise FootprintError("blocks per wave must be >= 1")
    total = launch.total_blocks
    waves = []
    start = 0
    index = 0
    while start < total:
        count = min(per_wave, total - start)
        waves.append(Wave(index, start, count))
        start += count
        index += 1
    return waves


@dataclass(frozen=True)
class CollaborativeGroup:
    """Threads able to share data in one cache level.

    Thread order is canonical: blocks in listed order, threads x-fastest
    within each block; warps are chunks of 32 consecutive threads of one
    block in that order.
    """

    launch: LaunchConfig
    block_linear: np.ndarray
    level: str  # "L1" | "L2"

    def __post_init__(self):
        if self.block_linear.size == 0:
            raise FootprintError("collaborative group needs at least one block")
        if self.level == "L1" and self.block_linear.size != 1:
            raise FootprintError("an L1 group is exactly one thread block")

    @property
    def block_count(self) -> int:
        return int(self.block_linear.size)

    @property
    def thread_count(self) -> int:
        return self.block_count * self.launch.threads_per_block

    @property
    def lups(self) -> int:
        return self.block_count * self.launch.lups_per_block

    def block_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        gx, gy, _ = self.launch.grid_dim
        lin = self.block_linear
        return lin % gx, (lin // gx) % gy, lin // (gx * gy)

    def thread_coords(self) -> Iterator[ThreadCoord]:
        bx, by, bz = self.launch.block_dim
        bxs, bys, bzs = self.block_coords()
        for bidx, bidy, bidz in zip(bxs.tolist(), bys.tolist(), bzs.tolist()):
            for tz in range(bz):
                for ty in range(by):
                    for tx in range(bx):
                        yield ThreadCoord(tx, ty, tz, bidx, bidy, bidz)


def block_group(launch: LaunchConfig, linear_index: int) -> CollaborativeGroup:
    if not 0 <= linear_index < launch.total_blocks:
        raise FootprintError(f"block index {linear_index} outside grid")
    return CollaborativeGroup(launch, np.array([linear_index], dtype=np.int64), "L1")


def wave_group(launch: LaunchConfig, wave: Wave) -> CollaborativeGroup:
    return CollaborativeGroup(launch, wave.block_linear, "L2")


# ---------------------------------------------------------------------------
# granule sets


class GranuleSet:
    """Immutable set of granule indices; bitmap-backed for compact spans,
    sorted unique arrays otherwise.  Counting and intersections are exact."""

    __slots__ = ("_bitmap", "_sorted", "_offset", "count")

    def __init__(self, offset: int, bitmap: np.ndarray | None, sorted_values: np.ndarray | None):
        self._offset = offset
        self._bitmap = bitmap
        self._sorted = sorted_values
        if bitmap is not None:
            self.count = int(np.count_nonzero(bitmap))
        elif sorted_values is not None:
            self.count = int(sorted_values.size)
        else:
            self.count = 0

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "GranuleSet":
        arrays = [np.asarray(a, dtype=np.int64) for a in arrays if np.asarray(a).size]
        if not arrays:
            return cls(0, None, None)
        lo = min(int(a.min()) for a in arrays)
        hi = max(int(a.max()) for a in arrays)
        builder = _SetBuilder(lo, hi)
        for a in arrays:
            builder.add(a - builder.offset)
        return builder.build()

    def values(self) -> np.ndarray:
        if self._bitmap is not None:
            return np.flatnonzero(self._bitmap) + self._offset
        if self._sorted is not None:
            return self._sorted
        return np.empty(0, dtype=np.int64)

    def intersection_count(self, other: "GranuleSet") -> int:
        if self.count == 0 or other.count == 0:
            return 0
        if self._bitmap is not None and other._bitmap is not None:
            lo = max(self._offset, other._offset)
            hi = min(self._offset + self._bitmap.size, other._offset + other._bitmap.size)
            if hi <= lo:
                return 0
            a = self._bitmap[lo - self._offset : hi - self._offset]
            b = other._bitmap[lo - other._offset : hi - other._offset]
            return int(np.count_nonzero(a & b))
        if self._bitmap is None and other._bitmap is None:
            return int(np.intersect1d(self._sorted, other._sorted, assume_unique=True).size)
        bitmap_side = self if self._bitmap is not None else other
        array_side = other if self._bitmap is not None else self
        rel = array_side._sorted - bitmap_side._offset
        ok = (rel >= 0) & (rel < bitmap_side._bitmap.size)
        return int(np.count_nonzero(bitmap_side._bitmap[rel[ok]]))

    def union_count(self, other: "GranuleSet") -> int:
        return self.count + other.count - self.intersection_count(other)


class _SetBuilder:
    """Accumulates granule arrays already shifted by -offset."""

    def __init__(self, lo: int, hi: int):
        span = hi - lo + 1
        if span <= _BITMAP_SPAN_LIMIT:
            self.offset = lo
            self._bitmap = np.zeros(span, dtype=bool)
            self._collected = None
        else:
            self.offset = 0
            self._bitmap = None
            self._collected: list[np.ndarray] = []

    def add(self, granules: np.ndarray) -> None:
        if granules.size == 0:
            return
        if self._bitmap is not None:
            self._bitmap[granules] = True
        else:
            self._collected.append(np.unique(granules))

    def build(self) -> GranuleSet:
        if self._bitmap is not None:
            return GranuleSet(self.offset, self._bitmap, None)
        if not self._collected:
            return GranuleSet(0, None, None)
        return GranuleSet(0, None, np.unique(np.concatenate(self._collected)))


# ---------------------------------------------------------------------------
# vectorized address evaluation


def _granules_inplace(addresses: np.ndarray, granularity: int) -> np.ndarray:
    if granularity & (granularity - 1) == 0:
        return np.right_shift(addresses, granularity.bit_length() - 1, out=addresses)
    return np.floor_divide(addresses, granularity, out=addresses)


class _GroupEval:
    """Evaluates per-access addresses over a group, block-major with
    x-fastest threads.  Affine expressions take a separable fast path
    (block part + thread part) through a reused scratch buffer; general
    expressions fall back to full bulk evaluation."""

    def __init__(self, kernel: KernelDescriptor, group: CollaborativeGroup):
        self.kernel = kernel
        self.group = group
        launch = group.launch
        self.block_dim = launch.block_dim
        bx, by, bz = launch.block_dim
        tz, ty, tx = np.meshgrid(
            np.arange(bz, dtype=np.int64),
            np.arange(by, dtype=np.int64),
            np.arange(bx, dtype=np.int64),
            indexing="ij",
        )
        self.tids = {"tidx": tx.ravel(), "tidy": ty.ravel(), "tidz": tz.ravel()}
        bxs, bys, bzs = group.block_coords()
        self.bids = {"bidx": bxs, "bidy": bys, "bidz": bzs}
        self.bases = kernel.base_substitution
        self._bounds = {
            "tidx": (0, bx - 1),
            "tidy": (0, by - 1),
            "tidz": (0, bz - 1),
            "bidx": (int(bxs.min()), int(bxs.max())),
            "bidy": (int(bys.min()), int(bys.max())),
            "bidz": (int(bzs.min()), int(bzs.max())),
        }
        self._full_env: dict[str, np.ndarray] | None = None
        self._scratch: np.ndarray | None = None
        self._parts_cache: dict[int, tuple[int, dict[str, int]] | None] = {}

    # -- shared pieces

    def _parts(self, access: Access):
        key = id(access)
        if key not in self._parts_cache:
            self._parts_cache[key] = affine_parts(access.expr, self.block_dim, self.bases)
        return self._parts_cache[key]

    def _env(self) -> dict[str, np.ndarray]:
        if self._full_env is None:
            s = self.group.launch.threads_per_block
            b = self.group.block_count
            env = {name: np.tile(arr, b) for name, arr in self.tids.items()}
            for name, arr in self.bids.items():
                env[name] = np.repeat(arr, s)
            self._full_env = env
        return self._full_env

    def address_bounds(self, access: Access) -> tuple[int, int]:
        return value_bounds(access.expr, self._bounds, self.block_dim, self.bases)

    def granule_bounds(self, access: Access, granularity: int) -> tuple[int, int]:
        lo, hi = self.address_bounds(access)
        return lo // granularity, hi // granularity

    def _separable_arrays(self, const: int, coef: dict[str, int]):
        """(block_values, thread_values) with the constant folded into the
        block part, or None if an intermediate could leave int64."""
        tlo = thi = 0
        for name in ("tidx", "tidy", "tidz"):
            c = coef.get(name, 0)
            a, b = sorted((c * self._bounds[name][0], c * self._bounds[name][1]))
            tlo, thi = tlo + a, thi + b
        blo = bhi = const
        for name in ("bidx", "bidy", "bidz"):
            c = coef.get(name, 0)
            a, b = sorted((c * self._bounds[name][0], c * self._bounds[name][1]))
            blo, bhi = blo + a, bhi + b
        limit = 2**63
        if not (-limit <= tlo and thi < limit and -limit <= blo + min(0, tlo) and bhi + max(0, thi) < limit):
            return None
        thread_val = np.zeros(self.group.launch.threads_per_block, dtype=np.int64)
        for name in ("tidx", "tidy", "tidz"):
            c = coef.get(name, 0)
            if c:
                thread_val = thread_val + c * self.tids[name]
        block_val = np.full(self.group.block_count, const, dtype=np.int64)
        for name in ("bidx", "bidy", "bidz"):
            c = coef.get(name, 0)
            if c:
                block_val = block_val + c * self.bids[name]
        return block_val, thread_val

    # -- public evaluation paths

    def addresses(self, access: Access) -> np.ndarray:
        """Freshly allocated flat address array, block-major."""
        value_bounds(access.expr, self._bounds, self.block_dim, self.bases)
        parts = self._parts(access)
        if parts is not None:
            arrays = self._separable_arrays(*parts)
            if arrays is not None:
                block_val, thread_val = arrays
                return np.add.outer(block_val, thread_val).ravel()
        return evaluate_bulk(access.expr, self._env(), self.block_dim, self.bases)

    def stream_granules(self, access: Access, granularity: int, offset: int) -> np.ndarray:
        """Granule indices minus offset, valid only until the next call
        (the backing scratch buffer is reused)."""
        value_bounds(access.expr, self._bounds, self.block_dim, self.bases)
        parts = self._parts(access)
        if parts is not None:
            const, coef = parts
            arrays = self._separable_arrays(const - offset * granularity, coef)
            if arrays is not None:
                block_val, thread_val = arrays
                if self._scratch is None:
                    self._scratch = np.empty(
                        (self.group.block_count, self.group.launch.threads_per_block),
                        dtype=np.int64,
                    )
                np.add(block_val[:, None], thread_val[None, :], out=self._scratch)
                flat = self._scratch.reshape(-1)
                return _granules_inplace(flat, granularity)
        arr = evaluate_bulk(access.expr, self._env(), self.block_dim, self.bases)
        _granules_inplace(arr, granularity)
        if offset:
            np.subtract(arr, offset, out=arr)
        return arr

    def warp_ids(self) -> np.ndarray:
        s = self.group.launch.threads_per_block
        warps_per_block = -(-s // WARP_SIZE)
        idx = np.arange(self.group.thread_count, dtype=np.int64)
        return (idx // s) * warps_per_block + (idx % s) // WARP_SIZE


def _warp_unique_count(granules: np.ndarray, warp_ids: np.ndarray) -> int:
    """Number of distinct (warp, granule) pairs: per-instruction requests
    after intra-warp coalescing."""
    if granules.size == 0:
        return 0
    lo = int(granules.min())
    span = int(granules.max()) - lo + 1
    n_warps = int(warp_ids[-1]) + 1
    if n_warps * span < 2**62:
        pairs = warp_ids * span + (granules - lo)
        return int(np.unique(pairs).size)
    order = np.lexsort((granules, warp_ids))
    g = granules[order]
    w = warp_ids[order]
    boundary = np.empty(g.size, dtype=bool)
    boundary[0] = True
    boundary[1:] = (g[1:] != g[:-1]) | (w[1:] != w[:-1])
    return int(np.count_nonzero(boundary))


# ---------------------------------------------------------------------------
# footprint results


@dataclass(frozen=True)
class KindCounts:
    unique_count: int
    total_count: int


@dataclass(frozen=True)
class FootprintResult:
    granularity: int
    per_field: dict[tuple[str, str], KindCounts]

    def _select(self, field: str | None, kind: str | None):
        for (f, k), counts in self.per_field.items():
            if (field is None or f == field) and (kind is None or k == kind):
                yield counts

    def unique_bytes(self, field: str | None = None, kind: str | None = None) -> int:
        return sum(c.unique_count for c in self._select(field, kind)) * self.granularity

    def total_bytes(self, field: str | None = None, kind: str | None = None) -> int:
        return sum(c.total_count for c in self._select(field, kind)) * self.granularity

    def unique_count(self, field: str | None = None, kind: str | None = None) -> int:
        return sum(c.unique_count for c in self._select(field, kind))

    def total_count(self, field: str | None = None, kind: str | None = None) -> int:
        return sum(c.total_count for c in self._select(field, kind))


def _validate_granularity(granularity: int):
    if granularity < 1:
        raise FootprintError(f"granularity must be positive, got {granularity}")


def _validate_kinds(kinds: tuple[str, ...]):
    unknown = set(kinds) - {"load", "store"}
    if unknown:
        raise FootprintError(f"unknown access kinds: {sorted(unknown)}")


def _field_builder(ev: _GroupEval, accesses: Sequence[Access], granularity: int) -> _SetBuilder:
    lo = min(ev.granule_bounds(a, granularity)[0] for a in accesses)
    hi = max(ev.granule_bounds(a, granularity)[1] for a in accesses)
    return _SetBuilder(lo, hi)


def grid_iteration(
    kernel: KernelDescriptor,
    group: CollaborativeGroup,
    granularity: int,
    kinds: Iterable[str] | None = None,
) -> FootprintResult:
    """Unique and per-warp-request granule counts per (field, kind).

    Unique counts deduplicate across all accesses of a field; total counts
    deduplicate only within each warp of each access instance (requests of
    one instruction coalesce, repeated instructions count individually).
    """
    _validate_granularity(granularity)
    kinds = ("load", "store") if kinds is None else tuple(kinds)
    _validate_kinds(kinds)
    ev = _GroupEval(kernel, group)
    warp_ids = ev.warp_ids()
    per_field: dict[tuple[str, str], KindCounts] = {}
    for f in kernel.fields:
        for kind in kinds:
            accesses = [a for a in kernel.accesses if a.field == f.name and a.kind == kind]
            if not accesses:
                continue
            builder = _field_builder(ev, accesses, granularity)
            total = 0
            for access in accesses:
                g = ev.stream_granules(access, granularity, builder.offset)
                total += access.multiplicity * _warp_unique_count(g, warp_ids)
                builder.add(g)
            per_field[(f.name, kind)] = KindCounts(builder.build().count, total)
    return FootprintResult(granularity, per_field)


def naive_footprint_oracle(
    kernel: KernelDescriptor,
    group: CollaborativeGroup,
    granularity: int,
    kinds: Iterable[str] | None = None,
) -> FootprintResult:
    """Reference implementation: per-thread scalar evaluation into exact
    Python sets.  Same contract as grid_iteration."""
    _validate_granularity(granularity)
    kinds = ("load", "store") if kinds is None else tuple(kinds)
    _validate_kinds(kinds)
    coords = list(group.thread_coords())
    s = group.launch.threads_per_block
    bases = kernel.base_substitution
    block_dim = kernel.launch.block_dim
    per_field: dict[tuple[str, str], KindCounts] = {}
    for f in kernel.fields:
        for kind in kinds:
            accesses = [a for a in kernel.accesses if a.field == f.name and a.kind == kind]
            if not accesses:
                continue
            unique: set[int] = set()
            total = 0
            for access in accesses:
                warp_sets: dict[tuple[int, int], set[int]] = {}
                addresses = evaluate(access.expr, coords, block_dim, bases)
                for idx, addr in enumerate(addresses):
                    granule = addr // granularity
                    key = (idx // s, (idx % s) // WARP_SIZE)
                    warp_sets.setdefault(key, set()).add(granule)
                    unique.add(granule)
                total += access.multiplicity * sum(len(v) for v in warp_sets.values())
            per_field[(f.name, kind)] = KindCounts(len(unique), total)
    return FootprintResult(granularity, per_field)


# ---------------------------------------------------------------------------
# wave-level footprints


@dataclass(frozen=True)
class WaveFootprint:
    """Sector-level footprint summary of one wave."""

    load_sets: dict[str, GranuleSet]
    store_counts: dict[str, int]
    alloc_count: int
    lups: int
    granularity: int

    def load_unique_bytes(self, field: str | None = None) -> int:
        if field is not None:
            return self.load_sets[field].count * self.granularity
        return sum(s.count for s in self.load_sets.values()) * self.granularity

    def store_unique_bytes(self, field: str | None = None) -> int:
        if field is not None:
            return self.store_counts[field] * self.granularity
        return sum(self.store_counts.values()) * self.granularity


def wave_footprint(kernel: KernelDescriptor, wave: Wave, granularity: int) -> WaveFootprint:
    _validate_granularity(granularity)
    ev = _GroupEval(kernel, wave_group(kernel.launch, wave))
    load_sets: dict[str, GranuleSet] = {}
    store_counts: dict[str, int] = {}
    alloc = 0
    for f in kernel.fields:
        loads = [a for a in kernel.accesses if a.field == f.name and a.kind == "load"]
        stores = [a for a in kernel.accesses if a.field == f.name and a.kind == "store"]
        load_set = _build_set(ev, loads, granularity)
        store_set = _build_set(ev, stores, granularity)
        load_sets[f.name] = load_set
        store_counts[f.name] = store_set.count
        alloc += load_set.union_count(store_set)
    return WaveFootprint(
        load_sets=load_sets,
        store_counts=store_counts,
        alloc_count=alloc,
        lups=wave.count * kernel.launch.lups_per_block,
        granularity=granularity,
    )


def _build_set(ev: _GroupEval, accesses: Sequence[Access], granularity: int) -> GranuleSet:
    if not accesses:
        return GranuleSet(0, None, None)
    builder = _field_builder(ev, accesses, granularity)
    for access in accesses:
        builder.add(ev.stream_granules(access, granularity, builder.offset))
    return builder.build()


def wave_overlap(
    kernel: KernelDescriptor,
    wave_curr: Wave,
    wave_prev: Wave,
    granularity: int,
) -> int:
    """Intersection of two waves' unique load footprints, per field,
    summed, in bytes."""
    curr = wave_footprint(kernel, wave_curr, granularity)
    prev = wave_footprint(kernel, wave_prev, granularity)
    return overlap_bytes(curr, prev)


def overlap_bytes(curr: WaveFootprint, prev: WaveFootprint) -> int:
    total = 0
    for name, cset in curr.load_sets.items():
        total += cset.intersection_count(prev.load_sets[name])
    return total * curr.granularity


# ---------------------------------------------------------------------------
# representative-group selection


def _interior(extent: int) -> np.ndarray:
    if extent > 2:
        return np.arange(1, extent - 1, dtype=np.int64)
    return np.arange(extent, dtype=np.int64)


def _spread_indices(n: int, samples: int) -> np.ndarray:
    if n <= samples:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, samples)).astype(np.int64))


def representative_blocks(kernel: KernelDescriptor, samples: int = 5) -> list[CollaborativeGroup]:
    """Deterministic selection of interior thread blocks (away from grid
    faces where the grid allows it)."""
    if samples < 1:
        raise FootprintError("sample count must be >= 1")
    launch = kernel.launch
    gx, gy, gz = launch.grid_dim
    zi, yi, xi = np.meshgrid(_interior(gz), _interior(gy), _interior(gx), indexing="ij")
    linear = np.sort((xi + gx * (yi + gy * zi)).ravel())
    picks = linear[_spread_indices(linear.size, samples)]
    return [block_group(launch, int(i)) for i in picks]


def representative_wave_pairs(
    kernel: KernelDescriptor,
    machine: MachineDescriptor,
    samples: int = 2,
    override_blocks_per_wave: int | None = None,
) -> list[tuple[Wave | None, Wave]]:
    """Consecutive (previous, current) wave pairs from the interior of the
    wave sequence.  A single-wave grid yields one pair without a
    predecessor; wave 0 is never a current wave when alternatives exist."""
    if samples < 1:
        raise FootprintError("sample count must be >= 1")
    waves = build_waves(kernel.launch, machine, override_blocks_per_wave)
    if len(waves) == 1:
        return [(None, waves[0])]
    # prefer currents that are interior: not wave 0, not the (possibly
    # partial) last wave unless nothing else exists
    hi = len(waves) - 2 if len(waves) >= 3 else len(waves) - 1
    lo = 1
    count = min(samples, hi - lo + 1)
    mid = (lo + hi) // 2
    start = min(max(lo, mid - (count - 1) // 2), hi - count + 1)
    return [(waves[i - 1], waves[i]) for i in range(start, start + count)]
