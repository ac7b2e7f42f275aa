"""GPU machine descriptors: all hardware constants in one place.

The bundled preset describes a Volta V100 (80 SMs at 1.38 GHz, 128 KiB L1
per SM, 6 MiB chip-wide L2, 128 B line allocation with 32 B transfer
sectors, 16 x 8 B L1 banks, 790/2500 GB/s DRAM/L2 bandwidths).  Occupancy
limits are standard published values; they drive the wave construction
and can be edited in a machine file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

from .fit import GompertzParams, ROLES, default_fit_params

WARP_SIZE = 32
HALF_WARP = 16


class MachineError(ValueError):
    """Invalid machine description."""


@dataclass(frozen=True)
class MachineDescriptor:
    name: str
    sm_count: int
    clock_ghz: float
    l1_capacity_bytes: int  # per SM
    l2_capacity_bytes: int  # chip-wide
    l1_line_bytes: int  # allocation granularity
    sector_bytes: int  # transfer granularity
    l1_banks: int
    bank_width_bytes: int
    mem_bandwidth_gbps: float
    l2_bandwidth_gbps: float
    max_threads_per_sm: int
    max_blocks_per_sm: int
    max_threads_per_block: int
    flop_per_byte_balance: float = 4.0
    fit_params: dict[str, GompertzParams] = dc_field(default_factory=default_fit_params)

    def __post_init__(self):
        positive = {
            "sm_count": self.sm_count,
            "clock_ghz": self.clock_ghz,
            "l1_capacity_bytes": self.l1_capacity_bytes,
            "l2_capacity_bytes": self.l2_capacity_bytes,
            "l1_line_bytes": self.l1_line_bytes,
            "sector_bytes": self.sector_bytes,
            "l1_banks": self.l1_banks,
            "bank_width_bytes": self.bank_width_bytes,
            "mem_bandwidth_gbps": self.mem_bandwidth_gbps,
            "l2_bandwidth_gbps": self.l2_bandwidth_gbps,
            "max_threads_per_sm": self.max_threads_per_sm,
            "max_blocks_per_sm": self.max_blocks_per_sm,
            "max_threads_per_block": self.max_threads_per_block,
            "flop_per_byte_balance": self.flop_per_byte_balance,
        }
        for fname, value in positive.items():
            if value <= 0:
                raise MachineError(f"{fname} must be positive, got {value}")
        if self.l1_line_bytes % self.sector_bytes:
            raise MachineError(
                f"line size {self.l1_line_bytes} is not a multiple of sector size {self.sector_bytes}"
            )
        missing = set(ROLES) - set(self.fit_params)
        if missing:
            raise MachineError(f"fit parameters missing roles: {sorted(missing)}")

    @property
    def clock_hz(self) -> float:
        return self.clock_ghz * 1e9

    @property
    def mem_bandwidth_bps(self) -> float:
        return self.mem_bandwidth_gbps * 1e9

    @property
    def l2_bandwidth_bps(self) -> float:
        return self.l2_bandwidth_gbps * 1e9

    def with_fit_params(self, fit_params: dict[str, GompertzParams]) -> "MachineDescriptor":
        return replace(self, fit_params=fit_params)

    def with_l2_capacity(self, capacity: int) -> "MachineDescriptor":
        return replace(self, l2_capacity_bytes=capacity)


def v100_preset() -> MachineDescriptor:
    return MachineDescriptor(
        name="v100",
        sm_count=80,
        clock_ghz=1.38,
        l1_capacity_bytes=128 * 1024,
        l2_capacity_bytes=6 * 1024 * 1024,
        l1_line_bytes=128,
        sector_bytes=32,
        l1_banks=16,
        bank_width_bytes=8,
        mem_bandwidth_gbps=790.0,
        l2_bandwidth_gbps=2500.0,
        max_threads_per_sm=2048,
        max_blocks_per_sm=32,
        max_threads_per_block=1024,
    )


_JSON_FIELDS = {
    "name": "name",
    "smCount": "sm_count",
    "clockGHz": "clock_ghz",
    "l1CapacityBytes": "l1_capacity_bytes",
    "l2CapacityBytes": "l2_capacity_bytes",
    "l1LineBytes": "l1_line_bytes",
    "sectorBytes": "sector_bytes",
    "l1Banks": "l1_banks",
    "bankWidthBytes": "bank_width_bytes",
    "memBandwidthGBps": "mem_bandwidth_gbps",
    "l2BandwidthGBps": "l2_bandwidth_gbps",
    "maxThreadsPerSM": "max_threads_per_sm",
    "maxBlocksPerSM": "max_blocks_per_sm",
    "maxThreadsPerBlock": "max_threads_per_block",
    "flopPerByteBalance": "flop_per_byte_balance",
}


def machine_to_dict(machine: MachineDescriptor) -> dict:
    data = {json_key: getattr(machine, attr) for json_key, attr in _JSON_FIELDS.items()}
    data["fitParams"] = {
        role: {"a": p.a, "b": p.b, "c": p.c} for role, p in sorted(machine.fit_params.items())
    }
    return data


def machine_from_dict(data: dict) -> MachineDescriptor:
    kwargs = {}
    for json_key, attr in _JSON_FIELDS.items():
        if json_key not in data:
            if json_key in ("name", "flopPerByteBalance"):
                continue
            raise MachineError(f"machine file missing field {json_key!r}")
        kwargs[attr] = data[json_key]
    kwargs.setdefault("name", "machine")
    fit_params = default_fit_params()
    for role, triple in data.get("fitParams", {}).items():
        if role not in ROLES:
            raise MachineError(f"unknown fit role {role!r}")
        fit_params[role] = GompertzParams(
            float(triple["a"]), float(triple["b"]), float(triple["c"]), role
        )
    kwargs["fit_params"] = fit_params
    return MachineDescriptor(**kwargs)


def load_machine(path: str | Path) -> MachineDescriptor:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MachineError(f"machine file {path}: {exc}") from None
    return machine_from_dict(data)


def save_machine(machine: MachineDescriptor, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(machine_to_dict(machine), fh, indent=2, sort_keys=True)
        fh.write("\n")
