"""Command-line interface.

Exit codes: 0 on success, 1 on operational errors (bad files, failed
validation), 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .analysis import MeasurementSet, compare, coverage, load_settings, run
from .grid import FieldGrid

log = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raylaunch",
        description="Ray-launching radio coverage simulator for box-world scenes.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="trace a scene and write grid, slices and manifest")
    p.add_argument("--scene", required=True, help="scene JSON file")
    p.add_argument("--config", help="run configuration JSON file")
    p.add_argument("--out-dir", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker processes (default 1)")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="single-process tracing; repeated runs give byte-identical dumps",
    )

    p = sub.add_parser("slice", help="extract a horizontal plane from a grid dump")
    p.add_argument("--grid", required=True, help="grid dump (.rlg)")
    p.add_argument("--height", type=float, required=True, help="slice height in metres")
    p.add_argument(
        "--quantity", choices=("power", "delay_spread"), default="power"
    )
    p.add_argument("--csv", required=True, help="output CSV path")
    p.add_argument("--png", help="optional rendered figure")
    p.add_argument("--ppm", help="optional raw PPM heatmap")

    p = sub.add_parser("pdp", help="print the power-delay profile of one cell")
    p.add_argument("--grid", required=True, help="grid dump (.rlg)")
    p.add_argument(
        "--at", nargs=3, type=float, required=True, metavar=("X", "Y", "Z"),
        help="probe position in metres",
    )
    p.add_argument("--csv", help="also write delay_ns,power_dbm rows")
    p.add_argument("--png", help="optional stem plot")

    p = sub.add_parser("compare", help="compare a grid against measured powers")
    p.add_argument("--grid", required=True, help="grid dump (.rlg)")
    p.add_argument("--measurements", required=True, help="CSV with x_m,y_m,z_m,power_dbm")
    p.add_argument("--csv", help="write the per-point table")

    p = sub.add_parser("coverage", help="fraction of cells above a sensitivity")
    p.add_argument("--grid", required=True, help="grid dump (.rlg)")
    p.add_argument("--height", type=float, required=True, help="slice height in metres")
    p.add_argument("--sensitivity", type=float, required=True, help="threshold in dBm")

    p = sub.add_parser("export", help="render a plane to a PPM heatmap")
    p.add_argument("--grid", required=True, help="grid dump (.rlg)")
    p.add_argument("--height", type=float, required=True, help="slice height in metres")
    p.add_argument(
        "--quantity", choices=("power", "delay_spread"), default="power"
    )
    p.add_argument("--ppm", required=True, help="output PPM path")
    p.add_argument("--vmin", type=float, help="colour scale minimum")
    p.add_argument("--vmax", type=float, help="colour scale maximum")
    return parser


def _cmd_simulate(args) -> int:
    settings = load_settings(args.config) if args.config else None
    result = run(
        args.scene,
        settings,
        out_dir=args.out_dir,
        workers=args.workers,
        deterministic=args.deterministic,
    )
    print(f"wrote {len(result.outputs)} files to {args.out_dir}")
    print(
        "rays {rays_launched}, segments {segments}, stored components: ".format(
            **result.stats.as_dict()
        )
        + str(result.grid.n_components)
    )
    return 0


def _cmd_slice(args) -> int:
    grid = FieldGrid.load(args.grid)
    plane = grid.plane_slice(args.height, args.quantity)
    plane.to_csv(args.csv)
    outputs = [args.csv]
    if args.png:
        from .plots import plot_plane

        label = "received power [dBm]" if args.quantity == "power" else "delay spread [ns]"
        plot_plane(plane, args.png, label)
        outputs.append(args.png)
    if args.ppm:
        from .heatmap import write_ppm

        write_ppm(plane, args.ppm)
        outputs.append(args.ppm)
    print("wrote " + ", ".join(outputs))
    return 0


def _cmd_pdp(args) -> int:
    grid = FieldGrid.load(args.grid)
    cell = grid.cell_index(args.at)
    profile = grid.pdp(cell)
    if not profile:
        print("cell holds no multipath components")
    else:
        print("delay_ns  power_dbm")
        for delay, power in profile:
            print(f"{delay:8.2f}  {power:9.2f}")
        print(f"delay spread: {grid.delay_spread_ns(cell):.2f} ns")
        print(f"received power: {grid.received_power_dbm(cell):.2f} dBm")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("delay_ns,power_dbm\n")
            for delay, power in profile:
                fh.write(f"{delay:.3f},{power:.3f}\n")
    if args.png:
        from .plots import plot_pdp

        plot_pdp(profile, args.png, title=f"PDP at {tuple(args.at)}")
    return 0


def _cmd_compare(args) -> int:
    grid = FieldGrid.load(args.grid)
    measurements = MeasurementSet.from_csv(args.measurements)
    report = compare(grid, measurements)
    print(report.summary())
    if args.csv:
        report.to_csv(args.csv)
    return 0


def _cmd_coverage(args) -> int:
    grid = FieldGrid.load(args.grid)
    plane = grid.plane_slice(args.height, "power")
    result = coverage(plane, args.sensitivity)
    print(
        f"coverage at {args.sensitivity:.1f} dBm: {result.fraction:.1%} "
        f"({result.n_covered} of {result.n_valid} cells with data)"
    )
    return 0


def _cmd_export(args) -> int:
    from .heatmap import write_ppm

    grid = FieldGrid.load(args.grid)
    plane = grid.plane_slice(args.height, args.quantity)
    vmin, vmax = write_ppm(plane, args.ppm, vmin=args.vmin, vmax=args.vmax)
    print(f"wrote {args.ppm} (scale {vmin:.2f} .. {vmax:.2f})")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "slice": _cmd_slice,
    "pdp": _cmd_pdp,
    "compare": _cmd_compare,
    "coverage": _cmd_coverage,
    "export": _cmd_export,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
