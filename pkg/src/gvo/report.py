"""Serialization of estimates and rankings: JSON, CSV and plain tables.

One code path renders every front end's output so in-process callers and
the command line produce identical bytes.  CSV always uses '.' as the
decimal separator.
"""

from __future__ import annotations

import io
import json

from .perf import PerfPrediction, SweepRow
from .volumes import LEVEL_DRAM, LEVEL_L2L1, LevelKindVolumes

REPORT_SCHEMA_VERSION = 1


def _fmt(value: float | None) -> str:
    if value is None:
        return ""
    return format(float(value), ".10g")


def _level_kind_dict(v: LevelKindVolumes, dram: bool) -> dict:
    data = {
        "vUp": v.v_up,
        "vComp": v.v_comp,
        "vRed": v.v_red,
        "vCap": v.v_cap,
        "vDown": v.v_down,
        "vAlloc": v.v_alloc,
        "oversubscription": v.oversubscription,
        "perFieldDown": dict(sorted(v.per_field_down.items())),
    }
    if dram:
        data.update(
            {
                "waveUnique": v.wave_unique,
                "vOverlap": v.v_overlap,
                "overmissBytes": v.overmiss_bytes,
                "coverage": v.coverage,
                "vRedL2": v.v_red_l2,
            }
        )
    return data


def build_estimate_report(prediction: PerfPrediction, config_meta: dict) -> dict:
    vols = prediction.volumes
    return {
        "schemaVersion": REPORT_SCHEMA_VERSION,
        "config": config_meta,
        "kernel": {
            "flopsPerLup": prediction.flops_per_lup,
            "accessCount": config_meta.get("accessCount"),
            "workPerThread": config_meta.get("workPerThread"),
        },
        "l1Cycles": {
            "cyclesPerLup": prediction.l1_cycles.cycles_per_lup,
            "perAccess": list(prediction.l1_cycles.per_access),
        },
        "volumes": {
            LEVEL_L2L1: {
                "load": _level_kind_dict(vols.l2l1_load, False),
                "store": _level_kind_dict(vols.l2l1_store, False),
            },
            LEVEL_DRAM: {
                "load": _level_kind_dict(vols.dram_load, True),
                "store": _level_kind_dict(vols.dram_store, True),
            },
        },
        "performance": {
            "times": dict(sorted(prediction.times.items())),
            "limiter": prediction.limiter,
            "predictedGLups": prediction.glups,
        },
    }


def render_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


ESTIMATE_CSV_HEADER = (
    "level,kind,vComp,vRed,vCap,vUp,vDown,vAlloc,oversubscription,"
    "waveUnique,vOverlap,overmissBytes,coverage,vRedL2"
)


def render_estimate_csv(report: dict) -> str:
    out = [ESTIMATE_CSV_HEADER]
    for level in (LEVEL_L2L1, LEVEL_DRAM):
        for kind in ("load", "store"):
            v = report["volumes"][level][kind]
            out.append(
                ",".join(
                    [
                        level,
                        kind,
                        _fmt(v["vComp"]),
                        _fmt(v["vRed"]),
                        _fmt(v["vCap"]),
                        _fmt(v["vUp"]),
                        _fmt(v["vDown"]),
                        _fmt(v["vAlloc"]),
                        _fmt(v["oversubscription"]),
                        _fmt(v.get("waveUnique")),
                        _fmt(v.get("vOverlap")),
                        _fmt(v.get("overmissBytes")),
                        _fmt(v.get("coverage")),
                        _fmt(v.get("vRedL2")),
                    ]
                )
            )
    return "\n".join(out) + "\n"


def render_table(report: dict) -> str:
    buf = io.StringIO()
    cfg = report["config"]
    buf.write(f"kernel      : {cfg.get('kernel')}\n")
    buf.write(f"machine     : {cfg.get('machine')}\n")
    buf.write(f"block       : {tuple(cfg.get('block', ()))}  folding: {cfg.get('folding')}\n")
    buf.write(f"grid        : {tuple(cfg.get('grid', ()))}\n")
    buf.write(f"blocks/wave : {cfg.get('blocksPerWave')}\n")
    buf.write("\nvolumes per lattice update [bytes]\n")
    buf.write(
        f"{'level':10} {'kind':6} {'comp':>10} {'red':>10} {'cap':>10} {'up':>10} {'down':>10}\n"
    )
    for level in (LEVEL_L2L1, LEVEL_DRAM):
        for kind in ("load", "store"):
            v = report["volumes"][level][kind]
            buf.write(
                f"{level:10} {kind:6} {v['vComp']:10.2f} {v['vRed']:10.2f} "
                f"{v['vCap']:10.2f} {v['vUp']:10.2f} {v['vDown']:10.2f}\n"
            )
    perf = report["performance"]
    buf.write("\ntimes per lattice update [s]\n")
    for name, t in perf["times"].items():
        mark = " <- limiter" if name == perf["limiter"] else ""
        buf.write(f"  {name:5}: {t:.4e}{mark}\n")
    buf.write(f"\npredicted throughput: {perf['predictedGLups']:.3f} GLup/s\n")
    buf.write(f"L1 cycles per LUP   : {report['l1Cycles']['cyclesPerLup']:.4f}\n")
    return buf.getvalue()


FOOTPRINT_CSV_HEADER = "field,kind,granularity,uniqueBytes,totalAccessBytes"


def render_footprint_csv(result) -> str:
    out = [FOOTPRINT_CSV_HEADER]
    for (field, kind), counts in sorted(result.per_field.items()):
        out.append(
            f"{field},{kind},{result.granularity},"
            f"{counts.unique_count * result.granularity},"
            f"{counts.total_count * result.granularity}"
        )
    return "\n".join(out) + "\n"


RANKING_CSV_COLUMNS = (
    "configKey",
    "blockX",
    "blockY",
    "blockZ",
    "folding",
    "l1CyclesPerLup",
    "l2l1LoadComp",
    "l2l1LoadRed",
    "l2l1LoadCap",
    "l2l1LoadUp",
    "l2l1LoadDown",
    "l2l1LoadAlloc",
    "l2l1LoadOversub",
    "l2l1StoreComp",
    "l2l1StoreRed",
    "l2l1StoreCap",
    "l2l1StoreUp",
    "l2l1StoreDown",
    "dramLoadComp",
    "dramLoadRed",
    "dramLoadCap",
    "dramLoadUp",
    "dramLoadDown",
    "dramLoadAlloc",
    "dramLoadOversub",
    "dramLoadUnique",
    "dramLoadOverlap",
    "dramLoadOvermiss",
    "dramLoadCoverage",
    "dramLoadRedL2",
    "dramStoreComp",
    "dramStoreRed",
    "dramStoreCap",
    "dramStoreUp",
    "dramStoreDown",
    "dramStoreUnique",
    "tDram",
    "tL2",
    "tL1",
    "tFp",
    "limiter",
    "predictedGLups",
)


def ranking_row_dict(row: SweepRow) -> dict:
    p = row.prediction
    v = p.volumes
    bx, by, bz = row.config.block_dim
    return {
        "configKey": row.config.key,
        "blockX": bx,
        "blockY": by,
        "blockZ": bz,
        "folding": row.config.folding,
        "l1CyclesPerLup": p.l1_cycles.cycles_per_lup,
        "l2l1LoadComp": v.l2l1_load.v_comp,
        "l2l1LoadRed": v.l2l1_load.v_red,
        "l2l1LoadCap": v.l2l1_load.v_cap,
        "l2l1LoadUp": v.l2l1_load.v_up,
        "l2l1LoadDown": v.l2l1_load.v_down,
        "l2l1LoadAlloc": v.l2l1_load.v_alloc,
        "l2l1LoadOversub": v.l2l1_load.oversubscription,
        "l2l1StoreComp": v.l2l1_store.v_comp,
        "l2l1StoreRed": v.l2l1_store.v_red,
        "l2l1StoreCap": v.l2l1_store.v_cap,
        "l2l1StoreUp": v.l2l1_store.v_up,
        "l2l1StoreDown": v.l2l1_store.v_down,
        "dramLoadComp": v.dram_load.v_comp,
        "dramLoadRed": v.dram_load.v_red,
        "dramLoadCap": v.dram_load.v_cap,
        "dramLoadUp": v.dram_load.v_up,
        "dramLoadDown": v.dram_load.v_down,
        "dramLoadAlloc": v.dram_load.v_alloc,
        "dramLoadOversub": v.dram_load.oversubscription,
        "dramLoadUnique": v.dram_load.wave_unique,
        "dramLoadOverlap": v.dram_load.v_overlap,
        "dramLoadOvermiss": v.dram_load.overmiss_bytes,
        "dramLoadCoverage": v.dram_load.coverage,
        "dramLoadRedL2": v.dram_load.v_red_l2,
        "dramStoreComp": v.dram_store.v_comp,
        "dramStoreRed": v.dram_store.v_red,
        "dramStoreCap": v.dram_store.v_cap,
        "dramStoreUp": v.dram_store.v_up,
        "dramStoreDown": v.dram_store.v_down,
        "dramStoreUnique": v.dram_store.wave_unique,
        "tDram": p.times["dram"],
        "tL2": p.times["l2"],
        "tL1": p.times["l1"],
        "tFp": p.times["fp"],
        "limiter": p.limiter,
        "predictedGLups": p.glups,
    }


def render_ranking_csv(rows: list[SweepRow]) -> str:
    out = [",".join(RANKING_CSV_COLUMNS)]
    for row in rows:
        data = ranking_row_dict(row)
        cells = []
        for col in RANKING_CSV_COLUMNS:
            value = data[col]
            if isinstance(value, str):
                cells.append(value)
            elif isinstance(value, int):
                cells.append(str(value))
            else:
                cells.append(_fmt(value))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"
