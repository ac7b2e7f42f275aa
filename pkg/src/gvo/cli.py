"""Command-line front end: estimate single configurations, sweep and rank
block shapes, calibrate the capacity-miss ratio curves.

Exit codes: 0 success, 2 validation failure, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import api
from .report import (
    render_estimate_csv,
    render_footprint_csv,
    render_json,
    render_ranking_csv,
    render_table,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3


def _triple(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected X,Y,Z, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers in {text!r}") from None


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--machine", default="v100", help="machine name or file (default: v100)")
    parser.add_argument("--grid", type=_triple, default=None, help="element grid X,Y,Z")
    parser.add_argument("--stencil-range", type=int, default=4, help="star stencil range")
    parser.add_argument("--flops", type=int, default=None, help="override flops per lattice update")
    parser.add_argument(
        "--fit",
        default="default",
        help="'default', 'zero', or a calibration JSON file",
    )
    parser.add_argument("--blocks-per-wave", type=int, default=None)
    parser.add_argument("--block-samples", type=int, default=5)
    parser.add_argument("--wave-samples", type=int, default=2)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gvo",
        description="Estimate GPU memory-hierarchy data volumes and performance "
        "from address expressions, without running the kernel.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="volume breakdown and prediction for one configuration")
    est.add_argument("--kernel", required=True, help="builtin:stencil, builtin:lbm, or a spec file")
    est.add_argument("--block", type=_triple, required=True, help="block shape X,Y,Z")
    est.add_argument("--folding", default="none", choices=("none", "2y", "2z"))
    est.add_argument("--format", default="table", choices=("table", "csv", "json"))
    _add_common(est)

    sweep = sub.add_parser("sweep", help="rank all block shapes for a thread count")
    sweep.add_argument("--kernel", required=True)
    sweep.add_argument("--threads", type=int, default=None, help="threads per block (power of two)")
    sweep.add_argument(
        "--folding-variants",
        action="store_true",
        help="cross shapes with 2y/2z thread folding",
    )
    sweep.add_argument("--skip-invalid", action="store_true", help="drop shapes that do not tile the grid")
    sweep.add_argument("--out", default=None, help="write ranking CSV here instead of stdout")
    _add_common(sweep)

    fp = sub.add_parser("footprint", help="raw unique/total footprint of one group")
    fp.add_argument("--kernel", required=True)
    fp.add_argument("--block", type=_triple, required=True)
    fp.add_argument("--folding", default="none", choices=("none", "2y", "2z"))
    fp.add_argument("--granularity", type=int, default=None, help="bytes (default: sector size)")
    fp.add_argument("--level", default="block", choices=("block", "wave"))
    fp.add_argument("--index", type=int, default=None, help="block linear index or wave index")
    _add_common(fp)

    cal = sub.add_parser("calibrate", help="fit ratio curves from measured volumes")
    cal.add_argument("--measurements", required=True, help="CSV: configKey,level,kind,measuredBytesPerLup")
    cal.add_argument("--sweep-output", required=True, help="ranking CSV from 'gvo sweep'")
    cal.add_argument("--out", default=None, help="write fit parameters JSON here instead of stdout")
    return parser


def _cmd_estimate(args) -> int:
    report = api.run_estimate(
        args.kernel,
        args.machine,
        args.block,
        folding=args.folding,
        grid=args.grid,
        stencil_range=args.stencil_range,
        flops_per_lup=args.flops,
        fit=args.fit,
        blocks_per_wave_override=args.blocks_per_wave,
        block_samples=args.block_samples,
        wave_samples=args.wave_samples,
    )
    if args.format == "json":
        sys.stdout.write(render_json(report) + "\n")
    elif args.format == "csv":
        sys.stdout.write(render_estimate_csv(report))
    else:
        sys.stdout.write(render_table(report))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    rows = api.run_sweep(
        args.kernel,
        args.machine,
        args.threads,
        folding_variants=args.folding_variants,
        grid=args.grid,
        stencil_range=args.stencil_range,
        flops_per_lup=args.flops,
        fit=args.fit,
        blocks_per_wave_override=args.blocks_per_wave,
        block_samples=args.block_samples,
        wave_samples=args.wave_samples,
        skip_invalid=args.skip_invalid,
    )
    text = render_ranking_csv(rows)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_footprint(args) -> int:
    result = api.run_footprint(
        args.kernel,
        args.machine,
        args.block,
        granularity=args.granularity,
        level=args.level,
        group_index=args.index,
        folding=args.folding,
        grid=args.grid,
        stencil_range=args.stencil_range,
        blocks_per_wave_override=args.blocks_per_wave,
    )
    sys.stdout.write(render_footprint_csv(result))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    result = api.run_calibrate(args.measurements, args.sweep_output)
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "footprint":
            return _cmd_footprint(args)
        return _cmd_calibrate(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError, json.JSONDecodeError) as exc:
        print(f"gvo: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"gvo: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
