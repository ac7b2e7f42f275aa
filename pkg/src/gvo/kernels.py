"""Declarative kernel descriptors and built-in access-pattern generators.

A kernel is described purely by its fields, its byte-address expressions
(one per load/store executed by a thread), its launch configuration, and
a floating-point operation count per lattice update.  Generators are
provided for a 3D star stencil with optional thread folding and for a
D3Q15 lattice-Boltzmann streaming pattern with a phase-field stencil.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .expr import (
    AddressExpr,
    BaseRef,
    BlockDimRef,
    CoordRef,
    IntConstant,
    base_refs,
    fold,
    parse,
    render,
)

SCHEMA_VERSION = 1

FOLDINGS = ("none", "2y", "2z")


class KernelError(ValueError):
    """Invalid kernel description."""


@dataclass(frozen=True)
class Field:
    name: str
    element_size: int
    extents: tuple[int, ...]
    alignment: int = 0
    strides: tuple[int, ...] = ()

    def __post_init__(self):
        if self.element_size not in (4, 8):
            raise KernelError(f"element size must be 4 or 8, got {self.element_size}")
        if not 1 <= len(self.extents) <= 3 or any(e < 1 for e in self.extents):
            raise KernelError(f"extents must be 1-3 positive values, got {self.extents}")
        if not self.strides:
            strides = [self.element_size]
            for extent in self.extents[:-1]:
                strides.append(strides[-1] * extent)
            object.__setattr__(self, "strides", tuple(strides))
        if len(self.strides) != len(self.extents):
            raise KernelError("strides and extents must have the same rank")
        if self.strides[0] < self.element_size:
            raise KernelError("innermost stride smaller than the element size")
        for i in range(1, len(self.strides)):
            if self.strides[i] < self.strides[i - 1] * self.extents[i - 1]:
                raise KernelError(f"stride {i} overlaps extent of dimension {i - 1}")
        if self.alignment < -65536:
            raise KernelError("alignment offset unreasonably negative")


@dataclass(frozen=True)
class Access:
    field: str
    kind: str  # "load" | "store"
    expr: AddressExpr
    multiplicity: int = 1

    def __post_init__(self):
        if self.kind not in ("load", "store"):
            raise KernelError(f"access kind must be load or store, got {self.kind!r}")
        if self.multiplicity < 1:
            raise KernelError("multiplicity must be >= 1")
        refs = set(base_refs(self.expr))
        if refs != {self.field}:
            raise KernelError(
                f"access to {self.field!r} must reference exactly that field's base, found {sorted(refs)}"
            )


@dataclass(frozen=True)
class LaunchConfig:
    block_dim: tuple[int, int, int]
    grid_dim: tuple[int, int, int]  # in blocks
    work_per_thread: int = 1

    def __post_init__(self):
        if any(d < 1 for d in self.block_dim) or any(d < 1 for d in self.grid_dim):
            raise KernelError("block and grid dimensions must be >= 1")
        if self.work_per_thread < 1:
            raise KernelError("work per thread must be >= 1")

    @property
    def threads_per_block(self) -> int:
        bx, by, bz = self.block_dim
        return bx * by * bz

    @property
    def total_blocks(self) -> int:
        gx, gy, gz = self.grid_dim
        return gx * gy * gz

    @property
    def lups_per_block(self) -> int:
        return self.threads_per_block * self.work_per_thread


@dataclass(frozen=True)
class KernelDescriptor:
    fields: tuple[Field, ...]
    accesses: tuple[Access, ...]
    launch: LaunchConfig
    flops_per_lup: int = 0
    name: str = "kernel"

    def __post_init__(self):
        if not self.accesses:
            raise KernelError("kernel needs at least one access")
        if self.flops_per_lup < 0:
            raise KernelError("flops per lattice update must be >= 0")
        known = {f.name for f in self.fields}
        if len(known) != len(self.fields):
            raise KernelError("duplicate field names")
        for acc in self.accesses:
            if acc.field not in known:
                raise KernelError(f"access references unknown field {acc.field!r}")

    def field_by_name(self, name: str) -> Field:
        for f in self.fields:
            if f.name == name:
                return f
        raise KernelError(f"unknown field {name!r}")

    @property
    def base_substitution(self) -> dict[str, int]:
        return {f.name: f.alignment for f in self.fields}

    def with_launch(self, launch: LaunchConfig) -> "KernelDescriptor":
        return replace(self, launch=launch)


# ---------------------------------------------------------------------------
# expression builders


def _global_coord(axis: int) -> AddressExpr:
    tid = CoordRef(("tidx", "tidy", "tidz")[axis])
    bid = CoordRef(("bidx", "bidy", "bidz")[axis])
    dim = BlockDimRef(("BX", "BY", "BZ")[axis])
    return fold("+", tid, fold("*", bid, dim))


def _folded_coord(axis: int, factor: int, iteration: int) -> AddressExpr:
    base = _global_coord(axis)
    if factor == 1:
        return base
    return fold("+", fold("*", base, IntConstant(factor)), IntConstant(iteration))


def _linear_address(
    field: Field, coords: Sequence[AddressExpr], offsets: Sequence[int]
) -> AddressExpr:
    """base + sum((coord + offset) * stride) in bytes."""
    node: AddressExpr = BaseRef(field.name)
    for coord, off, stride in zip(coords, offsets, field.strides):
        term = fold("+", coord, IntConstant(off)) if off else coord
        node = fold("+", node, fold("*", term, IntConstant(stride)))
    return node


def _check_tiling(grid: Sequence[int], effective_block: Sequence[int]) -> tuple[int, int, int]:
    grid_dim = []
    for g, e in zip(grid, effective_block):
        if g % e != 0:
            raise KernelError(
                f"grid extents {tuple(grid)} not divisible by effective block extents {tuple(effective_block)}"
            )
        grid_dim.append(g // e)
    return tuple(grid_dim)


def _fold_factors(folding: str) -> tuple[int, int, int]:
    if folding not in FOLDINGS:
        raise KernelError(f"folding must be one of {FOLDINGS}, got {folding!r}")
    return 1, 2 if folding == "2y" else 1, 2 if folding == "2z" else 1


def generate_star_stencil(
    radius: int,
    grid: Sequence[int],
    block_dim: Sequence[int],
    folding: str = "none",
    *,
    element_size: int = 8,
) -> KernelDescriptor:
    """3D star stencil: 6*radius+1 loads from src, one store to dst per
    lattice update, repeated per folded iteration under 2y/2z folding."""
    if radius < 1:
        raise KernelError("stencil range must be >= 1")
    grid = tuple(int(g) for g in grid)
    block_dim = tuple(int(b) for b in block_dim)
    if len(grid) != 3 or len(block_dim) != 3:
        raise KernelError("grid and block must be 3D")
    factors = _fold_factors(folding)
    effective = tuple(b * f for b, f in zip(block_dim, factors))
    grid_dim = _check_tiling(grid, effective)
    work = factors[0] * factors[1] * factors[2]

    src = Field("src", element_size, grid)
    dst = Field("dst", element_size, grid)

    offsets = [(0, 0, 0)]
    for axis in range(3):
        for k in range(1, radius + 1):
            for sign in (1, -1):
                off = [0, 0, 0]
                off[axis] = sign * k
                offsets.append(tuple(off))

    accesses: list[Access] = []
    for fy in range(factors[1]):
        for fz in range(factors[2]):
            coords = (
                _global_coord(0),
                _folded_coord(1, factors[1], fy),
                _folded_coord(2, factors[2], fz),
            )
            for off in offsets:
                accesses.append(Access("src", "load", _linear_address(src, coords, off)))
            accesses.append(Access("dst", "store", _linear_address(dst, coords, (0, 0, 0))))

    launch = LaunchConfig(block_dim, grid_dim, work_per_thread=work)
    return KernelDescriptor(
        fields=(src, dst),
        accesses=tuple(accesses),
        launch=launch,
        flops_per_lup=6 * radius + 1,
        name=f"star{radius}",
    )


def generate_four_point_2d(
    grid: Sequence[int],
    block_dim: Sequence[int],
    *,
    element_size: int = 8,
) -> KernelDescriptor:
    """2D four-point pattern (center, both x neighbors, +y neighbor) with
    one store; four loads per thread."""
    grid = tuple(int(g) for g in grid)
    block_dim = tuple(int(b) for b in block_dim)
    if len(grid) == 2:
        grid = grid + (1,)
    if len(block_dim) == 2:
        block_dim = block_dim + (1,)
    grid_dim = _check_tiling(grid, block_dim)
    src = Field("src", element_size, grid)
    dst = Field("dst", element_size, grid)
    coords = (_global_coord(0), _global_coord(1), _global_coord(2))
    accesses = [
        Access("src", "load", _linear_address(src, coords, off))
        for off in ((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0))
    ]
    accesses.append(Access("dst", "store", _linear_address(dst, coords, (0, 0, 0))))
    launch = LaunchConfig(block_dim, grid_dim)
    return KernelDescriptor(
        fields=(src, dst), accesses=tuple(accesses), launch=launch, flops_per_lup=4, name="2d4pt"
    )


# D3Q15 velocity set: rest, six axis directions, eight cube corners.
D3Q15_DIRECTIONS = (
    (0, 0, 0),
    (1, 0, 0),
    (-1, 0, 0),
    (0, 1, 0),
    (0, -1, 0),
    (0, 0, 1),
    (0, 0, -1),
    (1, 1, 1),
    (-1, -1, -1),
    (1, 1, -1),
    (-1, -1, 1),
    (1, -1, 1),
    (-1, 1, -1),
    (-1, 1, 1),
    (1, -1, -1),
)


def generate_lbm_d3q15(
    grid: Sequence[int],
    block_dim: Sequence[int],
    *,
    flops_per_lup: int = 250,
) -> KernelDescriptor:
    """D3Q15 pull-scheme streaming: 15 unaligned pdf loads, 15 aligned pdf
    stores, plus a 7-point phase-field read per lattice update.

    The pdf populations live in two structure-of-arrays fields (src/dst)
    with the direction index folded into the outermost extent.  The flop
    count is a plain configuration value; it never binds for this kernel.
    """
    grid = tuple(int(g) for g in grid)
    block_dim = tuple(int(b) for b in block_dim)
    if len(grid) != 3 or len(block_dim) != 3:
        raise KernelError("grid and block must be 3D")
    grid_dim = _check_tiling(grid, block_dim)
    w, h, d = grid
    q = len(D3Q15_DIRECTIONS)
    pdf_src = Field("pdf_src", 8, (w, h, d * q))
    pdf_dst = Field("pdf_dst", 8, (w, h, d * q))
    phi = Field("phi", 8, grid)

    coords = (_global_coord(0), _global_coord(1), _global_coord(2))
    accesses: list[Access] = []
    for qi, (cx, cy, cz) in enumerate(D3Q15_DIRECTIONS):
        # pull: population qi is read from the upstream neighbor
        accesses.append(
            Access("pdf_src", "load", _linear_address(pdf_src, coords, (-cx, -cy, -cz + qi * d)))
        )
    for qi in range(q):
        accesses.append(
            Access("pdf_dst", "store", _linear_address(pdf_dst, coords, (0, 0, qi * d)))
        )
    for off in ((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
        accesses.append(Access("phi", "load", _linear_address(phi, coords, off)))

    launch = LaunchConfig(block_dim, grid_dim)
    return KernelDescriptor(
        fields=(pdf_src, pdf_dst, phi),
        accesses=tuple(accesses),
        launch=launch,
        flops_per_lup=flops_per_lup,
        name="lbm_d3q15",
    )


# ---------------------------------------------------------------------------
# launch-configuration sweep


@dataclass(frozen=True, order=True)
class SweepConfig:
    block_dim: tuple[int, int, int]
    folding: str = "none"

    @property
    def key(self) -> str:
        bx, by, bz = self.block_dim
        return f"{bx}x{by}x{bz}/{self.folding}"


def _powers_of_two(limit: int) -> list[int]:
    out, v = [], 1
    while v <= limit:
        out.append(v)
        v *= 2
    return out


def enumerate_sweep(
    total_threads: int,
    *,
    x_max: int = 512,
    y_max: int = 512,
    z_max: int = 64,
    foldings: Iterable[str] = ("none",),
) -> list[SweepConfig]:
    """All power-of-two block shapes (X, Y, Z) with X*Y*Z == total_threads,
    crossed with the requested folding variants, sorted deterministically."""
    if total_threads < 1 or total_threads & (total_threads - 1):
        raise KernelError(f"total threads must be a power of two, got {total_threads}")
    foldings = tuple(foldings)
    for f in foldings:
        if f not in FOLDINGS:
            raise KernelError(f"unknown folding variant {f!r}")
    fold_order = {f: i for i, f in enumerate(FOLDINGS)}
    configs = []
    for x in _powers_of_two(x_max):
        for y in _powers_of_two(y_max):
            if total_threads % (x * y):
                continue
            z = total_threads // (x * y)
            if z > z_max:
                continue
            for f in foldings:
                configs.append(SweepConfig((x, y, z), f))
    configs.sort(key=lambda c: (c.block_dim, fold_order[c.folding]))
    return configs


# ---------------------------------------------------------------------------
# kernel families (used by the sweep drivers)


@dataclass(frozen=True)
class KernelFamily:
    """Recipe that turns a sweep configuration into a kernel descriptor."""

    kind: str  # "stencil" | "lbm" | "file"
    grid: tuple[int, int, int]
    radius: int = 4
    flops_per_lup: int | None = None
    spec: dict | None = dc_field(default=None, compare=False)

    def build(self, config: SweepConfig) -> KernelDescriptor:
        if self.kind == "stencil":
            return generate_star_stencil(self.radius, self.grid, config.block_dim, config.folding)
        if self.kind == "lbm":
            if config.folding != "none":
                raise KernelError("thread folding is only generated for the stencil kernel")
            kwargs = {}
            if self.flops_per_lup is not None:
                kwargs["flops_per_lup"] = self.flops_per_lup
            return generate_lbm_d3q15(self.grid, config.block_dim, **kwargs)
        if self.kind == "file":
            if config.folding != "none":
                raise KernelError("thread folding is not available for file kernels")
            kernel = kernel_from_dict(self.spec)
            if config.block_dim == kernel.launch.block_dim:
                return kernel
            if kernel.launch.work_per_thread > 1:
                raise KernelError(
                    "file kernels with workPerThread > 1 keep their own launch configuration"
                )
            grid_dim = _check_tiling(self.grid, config.block_dim)
            return kernel.with_launch(LaunchConfig(config.block_dim, grid_dim))
        raise KernelError(f"unknown kernel family {self.kind!r}")


# ---------------------------------------------------------------------------
# kernel-spec files


def kernel_to_dict(kernel: KernelDescriptor) -> dict:
    return {
        "schemaVersion": SCHEMA_VERSION,
        "name": kernel.name,
        "fields": [
            {
                "name": f.name,
                "elementSize": f.element_size,
                "extents": list(f.extents),
                "alignment": f.alignment,
                "strides": list(f.strides),
            }
            for f in kernel.fields
        ],
        "accesses": [
            {
                "field": a.field,
                "kind": a.kind,
                "expr": render(a.expr),
                "multiplicity": a.multiplicity,
            }
            for a in kernel.accesses
        ],
        "launch": {
            "blockDim": list(kernel.launch.block_dim),
            "gridDim": list(kernel.launch.grid_dim),
            "workPerThread": kernel.launch.work_per_thread,
        },
        "flopsPerLup": kernel.flops_per_lup,
    }


def kernel_from_dict(data: dict) -> KernelDescriptor:
    try:
        version = data["schemaVersion"]
        if version != SCHEMA_VERSION:
            raise KernelError(f"unsupported kernel-spec schema version {version}")
        fields = tuple(
            Field(
                name=f["name"],
                element_size=int(f["elementSize"]),
                extents=tuple(int(e) for e in f["extents"]),
                alignment=int(f.get("alignment", 0)),
                strides=tuple(int(s) for s in f.get("strides", ())),
            )
            for f in data["fields"]
        )
        names = {f.name for f in fields}
        accesses = tuple(
            Access(
                field=a["field"],
                kind=a["kind"],
                expr=parse(a["expr"], fields=names),
                multiplicity=int(a.get("multiplicity", 1)),
            )
            for a in data["accesses"]
        )
        launch = data["launch"]
        config = LaunchConfig(
            block_dim=tuple(int(v) for v in launch["blockDim"]),
            grid_dim=tuple(int(v) for v in launch["gridDim"]),
            work_per_thread=int(launch.get("workPerThread", 1)),
        )
        return KernelDescriptor(
            fields=fields,
            accesses=accesses,
            launch=config,
            flops_per_lup=int(data.get("flopsPerLup", 0)),
            name=str(data.get("name", "kernel")),
        )
    except KeyError as exc:
        raise KernelError(f"kernel spec missing key {exc}") from None


def load_kernel_spec(path: str | Path) -> KernelDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        return kernel_from_dict(json.load(fh))


def save_kernel_spec(kernel: KernelDescriptor, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(kernel_to_dict(kernel), fh, indent=2, sort_keys=True)
        fh.write("\n")
