"""Synthetic scenes and bundled fixtures.

Everything here is ground-truth-first: charts, cameras and waters are
parametric, scenes are rendered through the spectral forward model and the
water model, and every fixture ships the truth it was generated from so
estimators and pipelines can be scored against it. All randomness flows
from an explicit seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chart import (
    CalibrationEntry,
    ChartRecord,
    ChartRegistry,
    PatchLayout,
    PatchRecord,
    PatchRegion,
    PatchRole,
    save_layout,
)
from .colorimetry import default_d65, patch_xyz
from .errors import ValidationError
from .image import LinearImage
from .imgio import write_pfm
from .spectra import (
    GRID,
    CameraModel,
    SceneSample,
    Spectrum,
    SpectrumKind,
    simulate_raw_rgb,
    write_camera_json,
    write_spectrum_csv,
)
from .water import DepthMap, WaterProperties, forward_degrade

GRAY_REFLECTANCES = {
    "white": 0.90,
    "neutral_8": 0.59,
    "neutral_65": 0.36,
    "neutral_5": 0.20,
    "neutral_35": 0.09,
    "black": 0.03,
}

# name -> (base level, [(center nm, width nm, amplitude), ...])
_CHROMATIC_PARAMS = {
    "deep_blue": (0.06, [(450, 35, 0.45)]),
    "sky_blue": (0.10, [(470, 45, 0.55)]),
    "teal": (0.08, [(500, 40, 0.50)]),
    "green": (0.06, [(535, 38, 0.55)]),
    "leaf": (0.08, [(550, 50, 0.45)]),
    "yellow_green": (0.08, [(565, 45, 0.60)]),
    "yellow": (0.05, [(585, 60, 0.75)]),
    "orange": (0.05, [(605, 55, 0.70)]),
    "red": (0.04, [(635, 45, 0.65)]),
    "dark_red": (0.03, [(650, 40, 0.45)]),
    "magenta": (0.06, [(450, 40, 0.40), (640, 45, 0.50)]),
    "purple": (0.05, [(440, 35, 0.35), (660, 50, 0.25)]),
    "pink": (0.25, [(620, 70, 0.40)]),
    "dark_skin": (0.10, [(620, 80, 0.22)]),
    "cyan": (0.06, [(485, 42, 0.50)]),
    "azure": (0.08, [(460, 55, 0.45)]),
    "olive": (0.10, [(575, 50, 0.35)]),
    "tan": (0.20, [(600, 90, 0.35)]),
}


def gaussian_bump(center: float, width: float, amplitude: float = 1.0) -> np.ndarray:
    return amplitude * np.exp(-0.5 * ((GRID - center) / width) ** 2)


def chromatic_reflectance(base: float, bumps) -> Spectrum:
    vals = np.full(GRID.size, base)
    for center, width, amp in bumps:
        vals += gaussian_bump(center, width, amp)
    return Spectrum(GRID, np.clip(vals, 0.02, 0.90), SpectrumKind.REFLECTANCE)


def demo_chart(chart_id: str = "uw-24-001") -> ChartRecord:
    """A synthetic 24-patch chart: 18 smooth chromatic patches plus the six
    flat grays, with one calibration entry so it is usable scientifically."""
    patches = [
        PatchRecord(name, chromatic_reflectance(base, bumps), PatchRole.CHROMATIC)
        for name, (base, bumps) in _CHROMATIC_PARAMS.items()
    ]
    patches += [
        PatchRecord(
            name,
            Spectrum(GRID, np.full(GRID.size, r), SpectrumKind.REFLECTANCE),
            PatchRole.ACHROMATIC,
        )
        for name, r in GRAY_REFLECTANCES.items()
    ]
    return ChartRecord(
        chart_id=chart_id,
        patches=patches,
        calibrations=[
            CalibrationEntry(date="2026-01-15", operator="lab", instrument="spectro-01")
        ],
    )


# observer-curve mixing weights plus smooth perturbations per channel; the
# "beta" unit has much heavier channel overlap, so the two record visibly
# different RAW triples for the same scene while both stay 3x3-correctable
_CAMERA_PARAMS = {
    "alpha": (
        [[0.92, 0.08, 0.00], [0.06, 0.90, 0.04], [0.00, 0.05, 0.95]],
        [(610, 30, 0.05), (530, 35, 0.04), (460, 25, 0.04)],
    ),
    "beta": (
        [[0.42, 0.56, 0.02], [0.32, 0.62, 0.06], [0.03, 0.36, 0.61]],
        [(595, 40, 0.06), (560, 30, 0.05), (450, 30, 0.05)],
    ),
}


def demo_camera(which: str = "alpha") -> CameraModel:
    """Two plausible smooth sensor responses with distinctly different curves."""
    if which not in _CAMERA_PARAMS:
        raise ValidationError(f"unknown demo camera {which!r}")
    from .colorimetry import default_cmfs
    from .spectra import on_grid

    cmfs = default_cmfs()
    base = np.array([on_grid(s).values for s in (cmfs.xbar, cmfs.ybar, cmfs.zbar)])
    mix, bumps = _CAMERA_PARAMS[which]
    sens = np.array(mix) @ base
    for c, (center, width, amp) in enumerate(bumps):
        sens[c] += gaussian_bump(center, width, amp)
    return CameraModel(
        name=f"demo-{which}",
        sensitivities=tuple(
            Spectrum(GRID, np.clip(v, 0.0, None), SpectrumKind.SENSITIVITY) for v in sens
        ),
    )


def coastal_water() -> WaterProperties:
    """Green-blue coastal-like water: red dies fastest, modest veil."""
    return WaterProperties(
        beta_d=np.array([0.55, 0.20, 0.12]),
        beta_b=np.array([0.25, 0.18, 0.15]),
        b_inf=np.array([0.04, 0.12, 0.16]),
    )


def symmetric_water() -> WaterProperties:
    """A configuration with equal attenuation and backscatter coefficients;
    in it, every color converges monotonically to the veiling color."""
    beta = np.array([0.60, 0.30, 0.22])
    return WaterProperties(beta_d=beta, beta_b=beta,
                           b_inf=np.array([0.05, 0.14, 0.18]))


def exposure_for(camera: CameraModel, illuminant: Spectrum,
                 reflectance: float = 0.90, target: float = 0.55,
                 channel: int | None = None) -> float:
    """Exposure that maps a flat patch of the given reflectance to ``target``
    in the brightest channel (or in one specific channel)."""
    flat = Spectrum(GRID, np.full(GRID.size, reflectance), SpectrumKind.REFLECTANCE)
    raw = simulate_raw_rgb(SceneSample(flat, illuminant, 1.0), camera).unclipped
    level = float(raw.max()) if channel is None else float(raw[channel])
    return target / level


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------

def grid_layout(names, width: int, height: int, cols: int = 6,
                margin_frac: float = 0.1, gap: int = 4, prefix: str = "",
                x_off: int = 0, y_off: int = 0, cell_w: int | None = None,
                cell_h: int | None = None) -> PatchLayout:
    """Lay patches out in a left-to-right grid of rectangles."""
    names = list(names)
    rows = -(-len(names) // cols)
    cell_w = cell_w or (width - x_off) // cols
    cell_h = cell_h or (height - y_off) // rows
    regions = []
    for i, name in enumerate(names):
        r, c = divmod(i, cols)
        x0 = x_off + c * cell_w + gap
        y0 = y_off + r * cell_h + gap
        regions.append(PatchRegion(prefix + name, x0, y0,
                                   x0 + cell_w - 2 * gap, y0 + cell_h - 2 * gap))
    return PatchLayout(width=width, height=height, regions=tuple(regions),
                       margin_frac=margin_frac)


def render_chart_image(chart: ChartRecord, layout: PatchLayout,
                       scene_illuminant: Spectrum, camera: CameraModel,
                       exposure_k: float, noise_sigma: float = 0.0,
                       seed: int | None = None,
                       background: float = 0.0) -> LinearImage:
    """Render a synthetic RAW capture of a chart.

    Each patch rectangle is filled with its simulated RGB; optional additive
    Gaussian noise is applied afterwards and the result clipped back to
    [0, 1]. Deterministic whenever sigma is zero or a seed is supplied.
    """
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be >= 0")
    occupancy = np.zeros((layout.height, layout.width), dtype=bool)
    data = np.full((layout.height, layout.width, 3), float(background))
    for region in layout.regions:
        name = region.name.split(":", 1)[-1]
        patch = chart.patch(name)
        block = occupancy[region.y0:region.y1, region.x0:region.x1]
        if block.any():
            raise ValidationError(f"region {region.name!r} overlaps another patch")
        block[:] = True
        rgb = simulate_raw_rgb(
            SceneSample(patch.reflectance, scene_illuminant, exposure_k), camera
        ).rgb
        data[region.y0:region.y1, region.x0:region.x1, :] = rgb
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        data = data + rng.normal(0.0, noise_sigma, size=data.shape)
    return LinearImage(data=np.clip(data, 0.0, 1.0))


@dataclass(frozen=True)
class SixChartScene:
    """A rendered multi-chart scene with everything needed to score it."""

    air: LinearImage
    underwater: LinearImage
    depth: DepthMap
    layout: PatchLayout
    chart: ChartRecord
    camera: CameraModel
    illuminant: Spectrum
    water: WaterProperties
    exposure_k: float
    depths: tuple[float, ...]

    def chart_prefix(self, index: int) -> str:
        return f"c{index}:"


def six_chart_scene(depths=(0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
                    water: WaterProperties | None = None,
                    camera: CameraModel | None = None,
                    illuminant: Spectrum | None = None,
                    chart: ChartRecord | None = None,
                    chart_px: int = 120,
                    noise_sigma: float = 0.0,
                    seed: int | None = 7,
                    background_reflectance: float = 0.0005) -> SixChartScene:
    """Charts at increasing distances over a dark sloping background.

    The background is a near-black surface whose distance ramps smoothly over
    the observed range, so every depth carries dark pixels (what backscatter
    estimation feeds on). Each chart block sits at its own constant distance.
    """
    depths = tuple(float(d) for d in depths)
    if len(depths) == 0:
        raise ValidationError("at least one chart distance is required")
    water = water or symmetric_water()
    camera = camera or demo_camera("alpha")
    illuminant = illuminant or default_d65()
    chart = chart or demo_chart()
    exposure_k = exposure_for(camera, illuminant)

    n = len(depths)
    names = [p.name for p in chart.patches]
    block_w = chart_px
    block_h = chart_px
    width = n * block_w
    height = block_h + 40
    regions = []
    for i in range(n):
        sub = grid_layout(
            names, width=width, height=height, cols=4, gap=2,
            prefix=f"c{i}:", x_off=i * block_w, y_off=20,
            cell_w=block_w // 4, cell_h=block_h // 6,
        )
        regions.extend(sub.regions)
    layout = PatchLayout(width=width, height=height, regions=tuple(regions),
                         margin_frac=0.15)

    bg_rgb = simulate_raw_rgb(
        SceneSample(
            Spectrum(GRID, np.full(GRID.size, background_reflectance), SpectrumKind.REFLECTANCE),
            illuminant, exposure_k,
        ),
        camera,
    ).rgb
    data = np.tile(bg_rgb, (height, width, 1))
    # the dark background slopes away over the full observed range; only the
    # chart rectangles sit at their chart's constant distance
    zmap = np.tile(np.linspace(min(depths), max(depths), width), (height, 1))
    for region in layout.regions:
        prefix, name = region.name.split(":", 1)
        rgb = simulate_raw_rgb(
            SceneSample(chart.patch(name).reflectance, illuminant, exposure_k), camera
        ).rgb
        data[region.y0:region.y1, region.x0:region.x1, :] = rgb
        zmap[region.y0:region.y1, region.x0:region.x1] = depths[int(prefix[1:])]
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        data = np.clip(data + rng.normal(0.0, noise_sigma, size=data.shape), 0.0, 1.0)

    air = LinearImage(data=np.clip(data, 0.0, 1.0))
    depth = DepthMap.from_array(zmap)
    underwater = forward_degrade(air, depth, water)
    return SixChartScene(air=air, underwater=underwater, depth=depth, layout=layout,
                         chart=chart, camera=camera, illuminant=illuminant, water=water,
                         exposure_k=exposure_k, depths=depths)


# ---------------------------------------------------------------------------
# Fixture emission
# ---------------------------------------------------------------------------

def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _truth_for_chart(chart: ChartRecord, camera: CameraModel, illuminant: Spectrum,
                     exposure_k: float) -> dict:
    truth = {}
    for p in chart.patches:
        raw = simulate_raw_rgb(SceneSample(p.reflectance, illuminant, exposure_k), camera)
        truth[p.name] = {
            "raw_rgb": raw.rgb.tolist(),
            "xyz": patch_xyz(p.reflectance, illuminant).tolist(),
        }
    return truth


def emit_six_chart_fixture(out_dir: str | Path,
                           depths=(0.5, 1.0, 2.0, 4.0, 8.0, 16.0),
                           water: WaterProperties | None = None,
                           noise_sigma: float = 0.0,
                           seed: int = 7,
                           chart_px: int = 120) -> dict:
    """Write the multi-distance estimation fixture plus a ready-to-run
    pipeline config. Returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    water = water or symmetric_water()
    scene = six_chart_scene(depths=depths, water=water, noise_sigma=noise_sigma,
                            seed=seed, chart_px=chart_px)

    write_pfm(out / "scene.pfm", scene.underwater.data)
    write_pfm(out / "depth.pfm", np.where(scene.depth.valid, scene.depth.z, -1.0))
    save_layout(out / "layout.json", scene.layout)

    # close-range reference capture of the same chart: linearity gate input
    # and the clean per-patch reference for attenuation fitting
    ref_layout = grid_layout([p.name for p in scene.chart.patches],
                             width=240, height=240, cols=4, gap=3, margin_frac=0.15)
    reference = render_chart_image(scene.chart, ref_layout, scene.illuminant,
                                   scene.camera, scene.exposure_k)
    write_pfm(out / "reference.pfm", reference.data)
    save_layout(out / "reference_layout.json", ref_layout)

    write_camera_json(out / "camera.json", scene.camera)
    write_spectrum_csv(out / "illuminant.csv", scene.illuminant)
    registry = ChartRegistry(out / "registry")
    registry.put(scene.chart, overwrite=True)
    _write_json(out / "water_true.json", water.to_jsonable())

    truth = {
        "exposure_k": scene.exposure_k,
        "depths": list(scene.depths),
        "water": water.to_jsonable(),
        "patches": _truth_for_chart(scene.chart, scene.camera, scene.illuminant,
                                    scene.exposure_k),
        "white_underwater_rgb": {
            f"c{i}": scene.underwater.data[
                scene.layout.region(f"c{i}:white").y0 + 5,
                scene.layout.region(f"c{i}:white").x0 + 5,
            ].tolist()
            for i in range(len(scene.depths))
        },
    }
    _write_json(out / "truth.json", truth)

    config = {
        "images": ["scene.pfm"],
        "depths": ["depth.pfm"],
        "output_dir": "out",
        "seed": seed,
        "registry": "registry",
        "chart_id": scene.chart.chart_id,
        "layout": "layout.json",
        "chart_prefix": "c0:",
        "camera": "camera.json",
        "illuminant": "illuminant.csv",
        "correction": "water_removal",
        "water": {
            "mode": "estimate",
            "white_patches": [f"c{i}:white" for i in range(len(scene.depths))],
            "reference_image": "reference.pfm",
            "reference_layout": "reference_layout.json",
            "reference_patch": "white",
        },
        "linearity": {
            "image": "reference.pfm",
            "layout": "reference_layout.json",
            "chart_prefix": "",
            "use_camera": True,
        },
    }
    _write_json(out / "config.json", config)
    return {"dir": str(out), "files": sorted(p.name for p in out.iterdir())}


def emit_two_camera_fixture(out_dir: str | Path, seed: int = 7,
                            noise_sigma: float = 0.0) -> dict:
    """Write the cross-camera reproducibility fixture: the same chart captured
    by two cameras with different sensitivities, plus per-camera run configs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chart = demo_chart()
    illuminant = default_d65()
    layout = grid_layout([p.name for p in chart.patches], width=240, height=240,
                         cols=4, gap=3, margin_frac=0.15)
    save_layout(out / "layout.json", layout)
    registry = ChartRegistry(out / "registry")
    registry.put(chart, overwrite=True)
    write_spectrum_csv(out / "illuminant.csv", illuminant)

    manifest = {"cameras": {}}
    for which in ("alpha", "beta"):
        camera = demo_camera(which)
        # equalize on the white patch's green channel so residual per-channel
        # differences reflect the sensitivities, not the exposure choice
        k = exposure_for(camera, illuminant, target=0.6, channel=1)
        img = render_chart_image(chart, layout, illuminant, camera, k,
                                 noise_sigma=noise_sigma, seed=seed)
        write_pfm(out / f"capture_{which}.pfm", img.data)
        write_camera_json(out / f"camera_{which}.json", camera)
        _write_json(out / f"truth_{which}.json", {
            "exposure_k": k,
            "patches": _truth_for_chart(chart, camera, illuminant, k),
        })
        config = {
            "images": [f"capture_{which}.pfm"],
            "output_dir": f"out_{which}",
            "seed": seed,
            "registry": "registry",
            "chart_id": chart.chart_id,
            "layout": "layout.json",
            "chart_prefix": "",
            "camera": f"camera_{which}.json",
            "illuminant": "illuminant.csv",
            "correction": "closeup_wb",
            "closeup": {"white_patch": "white"},
            "linearity": {"chart_prefix": "", "use_camera": True},
        }
        _write_json(out / f"config_{which}.json", config)
        manifest["cameras"][which] = {"exposure_k": k}
    manifest["dir"] = str(out)
    manifest["files"] = sorted(p.name for p in out.iterdir())
    return manifest


def run_scene_config(config: dict, out_dir: str | Path) -> dict:
    """Entry point behind the ``simulate`` CLI subcommand."""
    kind = config.get("kind", "six_chart")
    seed = int(config.get("seed", 7))
    noise = float(config.get("noise_sigma", 0.0))
    if kind == "six_chart":
        n = int(config.get("charts", 6))
        if n <= 0:
            raise ValidationError("at least one chart is required")
        depths = config.get("depths") or [0.5 * 2 ** i for i in range(n)]
        if len(depths) != n:
            raise ValidationError("depths must match the chart count")
        water = config.get("water", "symmetric")
        if isinstance(water, str):
            water = {"symmetric": symmetric_water(), "coastal": coastal_water()}[water]
        else:
            water = WaterProperties.from_jsonable(water)
        return emit_six_chart_fixture(out_dir, depths=depths, water=water,
                                      noise_sigma=noise, seed=seed,
                                      chart_px=int(config.get("chart_px", 120)))
    if kind == "two_camera":
        return emit_two_camera_fixture(out_dir, seed=seed, noise_sigma=noise)
    raise ValidationError(f"unknown scene kind {kind!r}")
