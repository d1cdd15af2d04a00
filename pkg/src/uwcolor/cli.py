"""Command-line interface.

Subcommands mirror the fieldwork checklist: simulate fixtures, ingest
captures, manage charts, verify linearity, estimate and remove water, fit
calibrations, run the full batch pipeline, and summarize its logs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .chart import ChartRegistry, extract_patch_stats, load_layout, _chart_from_jsonable
from .colorimetry import fit_ccm, patch_xyz, save_calibration
from .errors import UwcolorError, ValidationError
from .imgio import read_depth, write_pfm
from .linearity import fit_linearity, linearity_report_svg, save_report
from .pipeline import (
    EXIT_OK,
    batch_exit_code,
    cmd_ingest,
    cmd_report,
    cmd_run,
    exit_code_for,
    load_config,
)
from .simulate import run_scene_config
from .spectra import SpectrumKind, read_camera_json, read_spectrum_csv
from .water import WaterProperties, estimate_backscatter, remove_water


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwcolor",
        description="Reproducible color measurement from linear underwater imagery",
    )
    parser.add_argument("--version", action="version", version=f"uwcolor {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic fixture set")
    p.add_argument("--scene", help="scene config JSON (defaults used when omitted)")
    p.add_argument("--kind", default=None, choices=["six_chart", "two_camera"])
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("ingest", help="convert a 16-bit PPM/PFM capture to linear PFM")
    p.add_argument("input")
    p.add_argument("--out", required=True)

    p = sub.add_parser("chart", help="chart registry operations")
    chart_sub = p.add_subparsers(dest="chart_command", required=True)
    cp = chart_sub.add_parser("put", help="store a chart JSON document")
    cp.add_argument("chart_json")
    cp.add_argument("--registry", required=True)
    cp.add_argument("--overwrite", action="store_true")
    cg = chart_sub.add_parser("get", help="print a stored chart")
    cg.add_argument("chart_id")
    cg.add_argument("--registry", required=True)
    cg.add_argument("--age-warn-days", type=float, default=365.0)
    cl = chart_sub.add_parser("list", help="list stored chart ids")
    cl.add_argument("--registry", required=True)

    p = sub.add_parser("check-linearity", help="verify an image source is linear")
    p.add_argument("image")
    p.add_argument("--layout", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--chart-id", required=True)
    p.add_argument("--illuminant")
    p.add_argument("--camera")
    p.add_argument("--json-out")
    p.add_argument("--svg-out")

    p = sub.add_parser("estimate-water", help="estimate backscatter from image + depth")
    p.add_argument("image")
    p.add_argument("--depth", required=True)
    p.add_argument("--dark-fraction", type=float, default=0.01)
    p.add_argument("--out", help="write water properties JSON here")

    p = sub.add_parser("remove-water", help="invert the water model with known properties")
    p.add_argument("image")
    p.add_argument("--depth", required=True)
    p.add_argument("--water", required=True, help="water properties JSON")
    p.add_argument("--t-min", type=float, default=0.02)
    p.add_argument("--out", required=True, help="corrected PFM path")
    p.add_argument("--diagnostics-out")

    p = sub.add_parser("calibrate", help="fit a camera->XYZ matrix from chart patches")
    p.add_argument("image", help="illumination-standardized linear capture")
    p.add_argument("--layout", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--chart-id", required=True)
    p.add_argument("--illuminant", required=True)
    p.add_argument("--prefix", default="")
    p.add_argument("--no-white-constraint", action="store_true")
    p.add_argument("--out", required=True, help="calibration JSON path")

    p = sub.add_parser("run", help="run the full batch pipeline from a config file")
    p.add_argument("config", help="TOML or JSON configuration")
    p.add_argument("--output-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--t-min", type=float)
    p.add_argument("--correction", choices=["water_removal", "closeup_wb"])
    p.add_argument("--display-png", action="store_true", default=None)
    p.add_argument("--skip-linearity-abort", action="store_true", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="KEY=VALUE",
                   help="override any config field by dotted key, e.g. "
                        "--set thresholds.linearity.max_intercept=0.03 "
                        "(values parse as JSON, falling back to strings)")

    p = sub.add_parser("report", help="summarize provenance logs")
    p.add_argument("logs", nargs="+")
    return parser


def _cmd_simulate(args) -> int:
    config = {}
    if args.scene:
        config = json.loads(Path(args.scene).read_text(encoding="utf-8"))
    if args.kind:
        config["kind"] = args.kind
    if args.seed is not None:
        config["seed"] = args.seed
    manifest = run_scene_config(config, args.out)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_ingest(args) -> int:
    img, record = cmd_ingest(args.input)
    write_pfm(args.out, img.data)
    record["out"] = str(args.out)
    print(json.dumps(record, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_chart(args) -> int:
    registry = ChartRegistry(args.registry)
    if args.chart_command == "put":
        doc = json.loads(Path(args.chart_json).read_text(encoding="utf-8"))
        chart = _chart_from_jsonable(doc, Path(args.chart_json).parent)
        registry.put(chart, overwrite=args.overwrite)
        print(f"stored chart {chart.chart_id!r} ({len(chart.patches)} patches)")
    elif args.chart_command == "get":
        chart = registry.get(args.chart_id)
        age = chart.calibration_age_days()
        print(f"chart {chart.chart_id!r}: {len(chart.patches)} patches, "
              f"{len(chart.calibrations)} calibrations, "
              f"latest {chart.latest_calibration.date}")
        if age > args.age_warn_days:
            print(f"warning: calibration is {age:.0f} days old "
                  f"(threshold {args.age_warn_days:.0f}); re-measure the chart",
                  file=sys.stderr)
    else:
        for chart_id in registry.list():
            print(chart_id)
    return EXIT_OK


def _cmd_check_linearity(args) -> int:
    img, _ = cmd_ingest(args.image)
    layout = load_layout(args.layout)
    stats = extract_patch_stats(img, layout)
    chart = ChartRegistry(args.registry).get(args.chart_id)
    illuminant = (read_spectrum_csv(args.illuminant, SpectrumKind.ILLUMINANT)
                  if args.illuminant else None)
    camera = read_camera_json(args.camera) if args.camera else None
    report = fit_linearity(stats, chart, illuminant=illuminant, camera=camera)
    print(report.format_table())
    if args.json_out:
        save_report(args.json_out, report)
    if args.svg_out:
        Path(args.svg_out).write_text(linearity_report_svg(report), encoding="utf-8")
    return EXIT_OK if report.verdict else 3


def _cmd_estimate_water(args) -> int:
    img, _ = cmd_ingest(args.image)
    depth = read_depth(args.depth)
    est = estimate_backscatter(img, depth, dark_fraction=args.dark_fraction)
    doc = {
        "B_inf": est.b_inf.tolist(),
        "beta_B": est.beta_b.tolist(),
        "rms_residual": est.rms_residual,
        "note": "beta_D requires chart observations; see the run pipeline",
    }
    print(json.dumps(doc, indent=2, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return EXIT_OK


def _cmd_remove_water(args) -> int:
    img, _ = cmd_ingest(args.image)
    depth = read_depth(args.depth)
    water = WaterProperties.from_jsonable(
        json.loads(Path(args.water).read_text(encoding="utf-8"))
    )
    corrected, diags = remove_water(img, depth, water, t_min=args.t_min)
    write_pfm(args.out, corrected.data)
    summary = diags.summary()
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.diagnostics_out:
        Path(args.diagnostics_out).write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    img, _ = cmd_ingest(args.image)
    layout = load_layout(args.layout)
    chart = ChartRegistry(args.registry).get(args.chart_id)
    illuminant = read_spectrum_csv(args.illuminant, SpectrumKind.ILLUMINANT)
    stats = extract_patch_stats(img, layout)
    if args.prefix:
        stats = {k[len(args.prefix):]: v for k, v in stats.items()
                 if k.startswith(args.prefix)}
    names = [p.name for p in chart.patches if p.name in stats]
    if len(names) < 4:
        raise ValidationError("calibration needs at least 4 chart patches in the layout")
    rgbs = np.array([stats[n].mean_rgb for n in names])
    targets = np.array([patch_xyz(chart.patch(n).reflectance, illuminant) for n in names])
    white_rgb = white_target = None
    if not args.no_white_constraint and "white" in stats:
        white_rgb = stats["white"].mean_rgb
        white_target = targets[names.index("white")]
    cal = fit_ccm(rgbs, targets, illuminant, white_rgb=white_rgb,
                  white_target=white_target, illuminant_ref=args.illuminant)
    save_calibration(args.out, cal)
    print(f"fitted over {len(names)} patches; mean residual "
          f"dE76 = {cal.residual_delta_e:.3f}; wrote {args.out}")
    return EXIT_OK


def _cmd_run(args) -> int:
    overrides = {
        "output_dir": args.output_dir,
        "seed": args.seed,
        "thresholds.t_min": args.t_min,
        "correction": args.correction,
        "display_png": args.display_png,
        "skip_linearity_abort": args.skip_linearity_abort,
    }
    for item in args.sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(value)
        except json.JSONDecodeError:
            overrides[key] = value
    cfg = load_config(args.config, overrides=overrides)
    results = cmd_run(cfg, jobs=args.jobs)
    for r in results:
        line = f"{r.image}: {r.status}"
        if r.error:
            line += f" ({r.error})"
        print(line)
        print(f"  provenance: {r.provenance_path}")
        for kind, path in sorted(r.outputs.items()):
            print(f"  {kind}: {path}")
    return batch_exit_code(results)


def _cmd_report(args) -> int:
    print(cmd_report(args.logs))
    return EXIT_OK


_HANDLERS = {
    "simulate": _cmd_simulate,
    "ingest": _cmd_ingest,
    "chart": _cmd_chart,
    "check-linearity": _cmd_check_linearity,
    "estimate-water": _cmd_estimate_water,
    "remove-water": _cmd_remove_water,
    "calibrate": _cmd_calibrate,
    "run": _cmd_run,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UwcolorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
