"""Batch orchestration: ingest, gate, correct, calibrate, standardize, log.

Each image runs through a strictly ordered stage sequence and leaves behind
exactly one provenance log that reproduces the full effective configuration,
the content digests of its inputs, and per-stage parameters and outcomes.
Scientific outputs are PFM; display PNGs are opt-in and watermarked.

Exit codes are a stable contract: 0 success, 2 validation failure,
3 linearity abort, 4 recovery/estimation failure, 5 I/O.
"""

from __future__ import annotations

import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .chart import ChartRecord, ChartRegistry, PatchLayout, load_layout, extract_patch_stats
from .colorimetry import camera_to_xyz, fit_ccm, patch_xyz, xyz_to_standard_rgb
from .errors import (
    EstimationError,
    FileFormatError,
    LinearityFailure,
    UwcolorError,
    ValidationError,
)
from .image import LinearImage
from .imgio import read_pfm, read_ppm16, read_depth, sha256_file, write_pfm, write_png8
from .linearity import LinearityThresholds, fit_linearity
from .spectra import CameraModel, Spectrum, SpectrumKind, read_camera_json, read_spectrum_csv
from .water import (
    DEFAULT_T_MIN,
    WaterProperties,
    closeup_white_balance,
    estimate_attenuation,
    estimate_backscatter,
    remove_water,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_LINEARITY = 3
EXIT_ESTIMATION = 4
EXIT_IO = 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, LinearityFailure):
        return EXIT_LINEARITY
    if isinstance(exc, EstimationError):
        return EXIT_ESTIMATION
    if isinstance(exc, (FileFormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (ValidationError, UwcolorError)):
        return EXIT_VALIDATION
    return EXIT_VALIDATION


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_DEFAULTS = {
    "images": [],
    "depths": [],
    "output_dir": "out",
    "seed": 0,
    "registry": "registry",
    "chart_id": "",
    "layout": "",
    "chart_prefix": "",
    "camera": "",
    "illuminant": "",
    "correction": "water_removal",
    "water": {
        "mode": "given",
        "properties": None,
        "white_patches": [],
        "reference_image": "",
        "reference_layout": "",
        "reference_patch": "white",
    },
    "closeup": {"white_patch": "white", "white_reflectance": None},
    "linearity": {"image": "", "layout": "", "chart_prefix": None, "use_camera": True},
    "thresholds": {
        "t_min": DEFAULT_T_MIN,
        "linearity": {
            "min_r_squared": 0.995,
            "max_intercept": 0.02,
            "max_relative_deviation": 0.05,
        },
        "chart_age_warn_days": 365,
    },
    "display_png": False,
    "allow_processed": False,
    "skip_linearity_abort": False,
    "camera_firmware": "",
    "survey_metadata": {},
}


def _merge_defaults(doc: dict, defaults: dict) -> dict:
    out = {}
    for key, dv in defaults.items():
        if key in doc and isinstance(dv, dict) and isinstance(doc[key], dict):
            out[key] = _merge_defaults(doc[key], dv)
        elif key in doc:
            out[key] = doc[key]
        else:
            out[key] = json.loads(json.dumps(dv))  # deep copy of the default
    for key in doc:
        if key not in defaults:
            raise ValidationError(f"unknown configuration key {key!r}")
    return out


def load_config(path: str | Path, overrides: dict | None = None) -> "PipelineConfig":
    """Load a TOML or JSON config file, expand defaults, validate paths."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if path.suffix.lower() == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
    if overrides:
        doc = _apply_overrides(doc, overrides)
    return PipelineConfig(base_dir=path.parent, doc=_merge_defaults(doc, _DEFAULTS))


def _apply_overrides(doc: dict, overrides: dict) -> dict:
    out = dict(doc)
    for key, value in overrides.items():
        if value is None:
            continue
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return out


@dataclass
class PipelineConfig:
    """Validated run configuration with the file's directory as path root."""

    base_dir: Path
    doc: dict

    def __post_init__(self):
        d = self.doc
        if not d["images"]:
            raise ValidationError("config lists no input images")
        if d["correction"] not in ("water_removal", "closeup_wb"):
            raise ValidationError(f"unknown correction mode {d['correction']!r}")
        if d["correction"] == "water_removal":
            if len(d["depths"]) != len(d["images"]):
                raise ValidationError("water_removal needs one depth map per image")
        if d["water"]["mode"] not in ("given", "estimate"):
            raise ValidationError(f"unknown water mode {d['water']['mode']!r}")
        th = d["thresholds"]
        if not 0.0 < th["t_min"] < 1.0:
            raise ValidationError("t_min must lie in (0, 1)")
        lt = th["linearity"]
        if not 0.0 <= lt["min_r_squared"] <= 1.0:
            raise ValidationError("linearity r-squared threshold must lie in [0, 1]")
        for key in ("chart_id", "layout", "illuminant"):
            if not d[key]:
                raise ValidationError(f"config field {key!r} is required")
        for p in self._referenced_paths():
            if not p.exists():
                raise ValidationError(f"configured path does not exist: {p}")
        if not isinstance(d["survey_metadata"], dict):
            raise ValidationError("survey_metadata must be a JSON object")

    def _referenced_paths(self) -> list[Path]:
        d = self.doc
        paths = [self.resolve(p) for p in d["images"]]
        paths += [self.resolve(p) for p in d["depths"]]
        paths.append(self.resolve(d["registry"]))
        paths.append(self.resolve(d["layout"]))
        paths.append(self.resolve(d["illuminant"]))
        if d["camera"]:
            paths.append(self.resolve(d["camera"]))
        if isinstance(d["water"]["properties"], str):
            paths.append(self.resolve(d["water"]["properties"]))
        for key in ("reference_image", "reference_layout"):
            if d["water"][key]:
                paths.append(self.resolve(d["water"][key]))
        if d["linearity"]["image"]:
            paths.append(self.resolve(d["linearity"]["image"]))
        if d["linearity"]["layout"]:
            paths.append(self.resolve(d["linearity"]["layout"]))
        return paths

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def linearity_thresholds(self) -> LinearityThresholds:
        lt = self.doc["thresholds"]["linearity"]
        return LinearityThresholds(
            min_r_squared=lt["min_r_squared"],
            max_intercept=lt["max_intercept"],
            max_relative_deviation=lt["max_relative_deviation"],
        )


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------

def cmd_ingest(path: str | Path) -> tuple[LinearImage, dict]:
    """Read a 16-bit PPM or a PFM into a linear camera-space image.

    Returns the image and an ingest record (format, digest). Anything
    8-bit is refused: those values are no longer proportional to radiance.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        data = read_pfm(path)
        if data.ndim != 3:
            raise FileFormatError(f"{path}: expected a 3-channel PFM image")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError(
                f"{path}: PFM values outside [0, 1]; scale to relative exposure first"
            )
        fmt = "pfm"
    elif suffix in (".ppm", ".pnm"):
        data = read_ppm16(path)
        fmt = "ppm16"
    else:
        raise FileFormatError(f"{path}: unsupported input format (use 16-bit PPM or PFM)")
    record = {"path": str(path), "format": fmt, "sha256": sha256_file(path)}
    return LinearImage(data=data), record


# ---------------------------------------------------------------------------
# Per-image run
# ---------------------------------------------------------------------------

def _stats_for_prefix(stats: dict, prefix: str) -> dict:
    if not prefix:
        return stats
    return {
        name[len(prefix):]: s for name, s in stats.items() if name.startswith(prefix)
    }


@dataclass
class RunResult:
    image: str
    status: str
    exit_code: int
    provenance_path: str
    outputs: dict
    error: str = ""


class _ImageRun:
    """Stage executor for one image; accumulates the provenance log."""

    def __init__(self, cfg: PipelineConfig, index: int, shared: dict):
        self.cfg = cfg
        self.index = index
        self.shared = shared
        self.doc = cfg.doc
        self.image_path = cfg.resolve(self.doc["images"][index])
        self.out_dir = cfg.resolve(self.doc["output_dir"])
        self.stem = self.image_path.stem
        self.stages: list[dict] = []
        self.warnings: list[str] = []
        self.digests: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.diagnostics: dict = {}

    def stage(self, name: str, params: dict, outcome: dict) -> None:
        self.stages.append({"stage": name, "params": params, "outcome": outcome})

    def provenance(self, status: str, error: BaseException | None = None) -> dict:
        return {
            "tool": "uwcolor",
            "tool_version": __version__,
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "image": str(self.image_path),
            "input_digests": self.digests,
            "config_effective": self.doc,
            "chart_id": self.doc["chart_id"],
            "chart_calibration_date": self.shared.get("chart_calibration_date", ""),
            "camera_firmware": self.doc["camera_firmware"],
            "survey_metadata": self.doc["survey_metadata"],
            "stages": self.stages,
            "outputs": self.outputs,
            "warnings": self.warnings,
            "status": status,
            "error": None if error is None else {
                "type": type(error).__name__,
                "message": str(error),
            },
        }

    def write_provenance(self, status: str, error: BaseException | None = None) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / f"{self.stem}_provenance.json"
        path.write_text(
            json.dumps(self.provenance(status, error), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return path

    # -- stages ------------------------------------------------------------

    def run(self) -> RunResult:
        try:
            self._execute()
        except Exception as exc:
            path = self.write_provenance("aborted", exc)
            return RunResult(
                image=str(self.image_path), status="aborted",
                exit_code=exit_code_for(exc), provenance_path=str(path),
                outputs=dict(self.outputs), error=f"{type(exc).__name__}: {exc}",
            )
        path = self.write_provenance("ok")
        return RunResult(
            image=str(self.image_path), status="ok", exit_code=EXIT_OK,
            provenance_path=str(path), outputs=dict(self.outputs),
        )

    def _execute(self) -> None:
        doc = self.doc
        cfg = self.cfg
        chart: ChartRecord = self.shared["chart"]
        layout: PatchLayout = self.shared["layout"]
        illuminant: Spectrum = self.shared["illuminant"]
        camera: CameraModel | None = self.shared["camera"]

        img, record = cmd_ingest(self.image_path)
        self.digests["image"] = record["sha256"]
        self.stage("ingest", {"path": record["path"]},
                   {"format": record["format"], "sha256": record["sha256"]})

        stats = extract_patch_stats(img, layout)
        self.stage("patch_extraction",
                   {"layout": doc["layout"], "patches": len(layout.regions)},
                   {"clipped_fractions": {
                       n: s.clipped_fraction for n, s in sorted(stats.items())
                       if s.clipped_fraction > 0}})

        self._linearity_gate(img, stats, chart, layout, illuminant, camera)

        if doc["correction"] == "water_removal":
            corrected, water_used = self._water_stage(img, stats)
        else:
            corrected = self._closeup_stage(img, stats, chart)
            water_used = None

        cal = self._calibrate(corrected, chart, illuminant)
        xyz_img = camera_to_xyz(corrected, cal,
                                override_processed=doc["allow_processed"])
        self.stage("camera_to_xyz", {"matrix": cal.matrix.tolist()},
                   {"space": xyz_img.space})

        srgb, gamut = xyz_to_standard_rgb(xyz_img.data, encode=False)
        self.stage("xyz_to_standard_rgb", {"encode": False}, {
            "out_of_gamut_fraction": gamut.out_of_gamut_fraction,
            "min_linear": gamut.min_linear,
            "max_linear": gamut.max_linear,
        })

        self.out_dir.mkdir(parents=True, exist_ok=True)
        xyz_path = self.out_dir / f"{self.stem}_xyz.pfm"
        srgb_path = self.out_dir / f"{self.stem}_srgb_linear.pfm"
        write_pfm(xyz_path, xyz_img.data)
        write_pfm(srgb_path, srgb)
        self.outputs["xyz_pfm"] = str(xyz_path)
        self.outputs["srgb_linear_pfm"] = str(srgb_path)

        if doc["display_png"]:
            display, _ = xyz_to_standard_rgb(xyz_img.data, encode=True)
            png_path = self.out_dir / f"{self.stem}_display.png"
            write_png8(png_path, display)
            self.outputs["display_png"] = str(png_path)

        self.diagnostics["calibration"] = {
            "matrix": cal.matrix.tolist(),
            "residual_delta_e": cal.residual_delta_e,
            "source": cal.source,
            "white_point": cal.white_xyz.tolist(),
        }
        if water_used is not None:
            self.diagnostics["water_used"] = water_used.to_jsonable()
        diag_path = self.out_dir / f"{self.stem}_diagnostics.json"
        diag_path.write_text(
            json.dumps(self.diagnostics, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        self.outputs["diagnostics_json"] = str(diag_path)

    def _linearity_gate(self, img, scene_stats, chart, scene_layout,
                        illuminant, camera) -> None:
        doc = self.doc
        lcfg = doc["linearity"]
        if lcfg["image"]:
            gate_img, record = cmd_ingest(self.cfg.resolve(lcfg["image"]))
            self.digests["linearity_image"] = record["sha256"]
            gate_layout = (load_layout(self.cfg.resolve(lcfg["layout"]))
                           if lcfg["layout"] else scene_layout)
            gate_stats = extract_patch_stats(gate_img, gate_layout)
            source = lcfg["image"]
        else:
            gate_stats = scene_stats
            source = "scene"
        prefix = lcfg["chart_prefix"]
        if prefix is None:
            prefix = doc["chart_prefix"]
        gate_stats = _stats_for_prefix(gate_stats, prefix)
        use_cam = camera if lcfg["use_camera"] else None
        report = fit_linearity(gate_stats, chart, illuminant=illuminant,
                               camera=use_cam,
                               thresholds=self.cfg.linearity_thresholds)
        self.diagnostics["linearity"] = report.to_jsonable()
        self.stage("linearity_check",
                   {"source": source, "thresholds": doc["thresholds"]["linearity"]},
                   {"verdict": "pass" if report.verdict else "fail"})
        if not report.verdict:
            if doc["skip_linearity_abort"]:
                self.warnings.append(
                    "linearity gate failed but was overridden by configuration"
                )
            else:
                raise LinearityFailure(
                    "linearity gate failed; the source is not radiometrically "
                    "linear (override with skip_linearity_abort to proceed)"
                )

    def _water_stage(self, img, stats) -> tuple[LinearImage, WaterProperties]:
        doc = self.doc
        depth = read_depth(self.cfg.resolve(doc["depths"][self.index]))
        self.digests["depth"] = sha256_file(self.cfg.resolve(doc["depths"][self.index]))
        if (img.height, img.width) != depth.shape:
            raise ValidationError("depth map dimensions do not match the image")

        wcfg = doc["water"]
        if wcfg["mode"] == "given":
            props = wcfg["properties"]
            if isinstance(props, str):
                props = json.loads(self.cfg.resolve(props).read_text(encoding="utf-8"))
            if not isinstance(props, dict):
                raise ValidationError("water.mode 'given' needs water.properties")
            water = WaterProperties.from_jsonable(props)
            self.stage("water_properties", {"mode": "given"}, water.to_jsonable())
        else:
            water = self._estimate_water(img, depth, stats)

        corrected, diags = remove_water(img, depth, water,
                                        t_min=doc["thresholds"]["t_min"],
                                        override_processed=doc["allow_processed"])
        self.diagnostics["recovery"] = diags.summary()
        self.stage("remove_water", {"t_min": doc["thresholds"]["t_min"]},
                   diags.summary())
        return corrected, water

    def _estimate_water(self, img, depth, stats) -> WaterProperties:
        doc = self.doc
        wcfg = doc["water"]
        bs = estimate_backscatter(img, depth,
                                  override_processed=doc["allow_processed"])
        self.stage("estimate_backscatter", {"dark_fraction": 0.01}, {
            "B_inf": bs.b_inf.tolist(),
            "beta_B": bs.beta_b.tolist(),
            "rms_residual": bs.rms_residual,
        })
        if not wcfg["white_patches"]:
            raise ValidationError(
                "water estimation needs water.white_patches naming chart white "
                "regions in the layout"
            )
        if not wcfg["reference_image"]:
            raise ValidationError(
                "water estimation needs a close-range reference capture "
                "(water.reference_image / reference_layout)"
            )
        ref_img, record = cmd_ingest(self.cfg.resolve(wcfg["reference_image"]))
        self.digests["water_reference"] = record["sha256"]
        ref_layout = load_layout(self.cfg.resolve(wcfg["reference_layout"]))
        ref_stats = extract_patch_stats(ref_img, ref_layout)
        ref_patch = wcfg["reference_patch"]
        if ref_patch not in ref_stats:
            raise ValidationError(f"reference capture has no patch {ref_patch!r}")
        ref_rgb = ref_stats[ref_patch].mean_rgb

        observations = []
        for name in wcfg["white_patches"]:
            if name not in stats:
                raise ValidationError(f"white patch {name!r} is not in the layout")
            region = next(r for r in self.shared["layout"].regions if r.name == name)
            x0, y0, x1, y1 = region.shrunk(self.shared["layout"].margin_frac)
            zvals = depth.z[y0:y1, x0:x1][depth.valid[y0:y1, x0:x1]]
            if zvals.size == 0:
                raise ValidationError(f"white patch {name!r} has no valid depth")
            observations.append((stats[name].mean_rgb, float(np.median(zvals)), ref_rgb))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            beta_d = estimate_attenuation(observations, bs.beta_b, bs.b_inf)
        self.warnings.extend(str(w.message) for w in caught)
        water = WaterProperties(beta_d=beta_d, beta_b=bs.beta_b,
                                b_inf=np.clip(bs.b_inf, 0.0, 1.0))
        self.stage("estimate_attenuation",
                   {"observations": len(observations)},
                   {"beta_D": beta_d.tolist()})
        self.diagnostics["water_estimate"] = water.to_jsonable()
        return water

    def _closeup_stage(self, img, stats, chart) -> LinearImage:
        doc = self.doc
        ccfg = doc["closeup"]
        name = doc["chart_prefix"] + ccfg["white_patch"]
        if name not in stats:
            raise ValidationError(f"closeup white patch {name!r} is not in the layout")
        refl = ccfg["white_reflectance"]
        if refl is None:
            refl = chart.patch(ccfg["white_patch"]).grid_mean_reflectance()
        corrected = closeup_white_balance(img, stats[name], float(refl),
                                          override_processed=doc["allow_processed"])
        self.stage("closeup_white_balance",
                   {"white_patch": name, "white_reflectance": refl},
                   {"gains": (float(refl) / stats[name].mean_rgb).tolist()})
        return corrected

    def _calibrate(self, corrected, chart, illuminant):
        doc = self.doc
        prefix = doc["chart_prefix"]
        layout = self.shared["layout"]
        stats = _stats_for_prefix(extract_patch_stats(corrected, layout), prefix)
        names = [p.name for p in chart.patches if p.name in stats]
        if len(names) < 4:
            raise ValidationError(
                f"calibration needs at least 4 chart patches under prefix {prefix!r}"
            )
        rgbs = np.array([stats[n].mean_rgb for n in names])
        targets = np.array([patch_xyz(chart.patch(n).reflectance, illuminant)
                            for n in names])
        white_rgb = white_target = None
        if "white" in stats:
            # pin the physical white patch to its own target XYZ, which lies
            # exactly on the white-point chromaticity ray
            white_rgb = stats["white"].mean_rgb
            white_target = targets[names.index("white")]
        cal = fit_ccm(rgbs, targets, illuminant, white_rgb=white_rgb,
                      white_target=white_target, illuminant_ref=doc["illuminant"])
        self.stage("calibrate", {"patches": len(names), "constrained": white_rgb is not None},
                   {"residual_delta_e": cal.residual_delta_e})
        recovered = {n: (rgbs[i] @ cal.matrix.T).tolist() for i, n in enumerate(names)}
        self.diagnostics["patch_xyz_recovered"] = recovered
        self.diagnostics["patch_xyz_target"] = {n: targets[i].tolist()
                                                for i, n in enumerate(names)}
        return cal


def cmd_run(cfg: PipelineConfig, jobs: int = 1) -> list[RunResult]:
    """Execute the configured pipeline for every image in the batch.

    Images are independent; with ``jobs > 1`` they run concurrently. The
    registry is only read. Results come back in input order.
    """
    doc = cfg.doc
    registry = ChartRegistry(cfg.resolve(doc["registry"]))
    chart = registry.get(doc["chart_id"])
    layout = load_layout(cfg.resolve(doc["layout"]))
    illuminant = read_spectrum_csv(cfg.resolve(doc["illuminant"]), SpectrumKind.ILLUMINANT)
    camera = read_camera_json(cfg.resolve(doc["camera"])) if doc["camera"] else None

    shared = {
        "chart": chart,
        "layout": layout,
        "illuminant": illuminant,
        "camera": camera,
        "chart_calibration_date": chart.latest_calibration.date,
    }
    age = chart.calibration_age_days()
    warn_days = doc["thresholds"]["chart_age_warn_days"]
    age_warning = ""
    if age > warn_days:
        age_warning = (
            f"chart {chart.chart_id!r} calibration is {age:.0f} days old "
            f"(warning threshold {warn_days}); re-measure its spectra"
        )

    runs = [_ImageRun(cfg, i, shared) for i in range(len(doc["images"]))]
    for r in runs:
        if age_warning:
            r.warnings.append(age_warning)

    if jobs <= 1 or len(runs) == 1:
        results = [r.run() for r in runs]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda r: r.run(), runs))
    return results


def batch_exit_code(results: list[RunResult]) -> int:
    for r in results:
        if r.exit_code != EXIT_OK:
            return r.exit_code
    return EXIT_OK


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

PROVENANCE_REQUIRED_KEYS = (
    "tool", "tool_version", "created_utc", "image", "input_digests",
    "config_effective", "chart_id", "chart_calibration_date", "stages",
    "outputs", "warnings", "status", "error",
)


def validate_provenance(doc: dict) -> list[str]:
    """Return a list of schema problems (empty when the log is valid)."""
    problems = []
    for key in PROVENANCE_REQUIRED_KEYS:
        if key not in doc:
            problems.append(f"missing key {key!r}")
    if not isinstance(doc.get("stages"), list):
        problems.append("stages must be a list")
    else:
        for i, st in enumerate(doc["stages"]):
            for key in ("stage", "params", "outcome"):
                if key not in st:
                    problems.append(f"stage {i} missing {key!r}")
    if doc.get("status") not in ("ok", "aborted"):
        problems.append("status must be 'ok' or 'aborted'")
    return problems


def cmd_report(log_paths) -> str:
    """Summarize provenance logs as a fixed-width table."""
    rows = []
    for path in log_paths:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FileFormatError(f"{path}: {exc}") from exc
        flags = []
        if doc.get("tool_version", __version__) != __version__:
            flags.append(f"written by version {doc.get('tool_version')}; best effort")
        problems = validate_provenance(doc)
        if problems:
            flags.append("schema: " + "; ".join(problems))
        residual = ""
        recoverable = ""
        verdict = ""
        for st in doc.get("stages", []):
            if st.get("stage") == "calibrate":
                residual = f"{st['outcome'].get('residual_delta_e', float('nan')):.3f}"
            if st.get("stage") == "remove_water":
                recoverable = f"{st['outcome'].get('fraction_recoverable', float('nan')):.3f}"
            if st.get("stage") == "linearity_check":
                verdict = st["outcome"].get("verdict", "")
        rows.append({
            "image": Path(doc.get("image", "?")).name,
            "status": doc.get("status", "?"),
            "linearity": verdict,
            "residual_dE": residual,
            "recoverable": recoverable,
            "flags": "; ".join(flags),
        })
    headers = ["image", "status", "linearity", "residual_dE", "recoverable", "flags"]
    widths = {h: max(len(h), *(len(str(r[h])) for r in rows)) if rows else len(h)
              for h in headers}
    lines = ["  ".join(h.ljust(widths[h]) for h in headers)]
    lines.append("  ".join("-" * widths[h] for h in headers))
    for r in rows:
        lines.append("  ".join(str(r[h]).ljust(widths[h]) for h in headers))
    return "\n".join(lines)
