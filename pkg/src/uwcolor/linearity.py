"""Radiometric linearity verification from gray patches or exposure series.

A linear sensor doubles its output when the light doubles. Gray patches make
that testable without knowing the camera: they are spectrally flat, so the
expected relative response of every channel is simply each patch's
reflectance. The verdict demands proportionality through the origin, not
mere affinity, since an offset already breaks radiometric interpretation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chart import ChartRecord, PatchStats
from .errors import ValidationError
from .spectra import CameraModel, SceneSample, Spectrum, simulate_raw_rgb

CHANNEL_NAMES = ("r", "g", "b")


@dataclass(frozen=True)
class LinearityThresholds:
    """Pass criteria. Defaults separate clean RAW data from photofinished
    data by a wide margin; override through configuration if needed."""

    min_r_squared: float = 0.995
    max_intercept: float = 0.02
    max_relative_deviation: float = 0.05


@dataclass(frozen=True)
class ChannelFit:
    slope: float
    intercept: float
    r_squared: float
    max_relative_deviation: float
    points: tuple[tuple[float, float], ...]

    def passes(self, th: LinearityThresholds) -> bool:
        return (
            self.r_squared >= th.min_r_squared
            and abs(self.intercept) <= th.max_intercept
            and self.max_relative_deviation <= th.max_relative_deviation
        )


@dataclass(frozen=True)
class LinearityReport:
    channels: dict[str, ChannelFit]
    verdict: bool
    thresholds: LinearityThresholds
    reflectance_source: str = "measured"

    def to_jsonable(self) -> dict:
        return {
            "verdict": "pass" if self.verdict else "fail",
            "thresholds": {
                "min_r_squared": self.thresholds.min_r_squared,
                "max_intercept": self.thresholds.max_intercept,
                "max_relative_deviation": self.thresholds.max_relative_deviation,
            },
            "reflectance_source": self.reflectance_source,
            "channels": {
                name: {
                    "slope": fit.slope,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "max_relative_deviation": fit.max_relative_deviation,
                    "points": [list(p) for p in fit.points],
                }
                for name, fit in self.channels.items()
            },
        }

    def format_table(self) -> str:
        lines = [
            f"linearity verdict: {'PASS' if self.verdict else 'FAIL'}",
            f"{'channel':<8} {'slope':>10} {'intercept':>10} {'r^2':>10} {'max rel dev':>12}",
        ]
        for name, fit in self.channels.items():
            lines.append(
                f"{name:<8} {fit.slope:>10.5f} {fit.intercept:>10.5f} "
                f"{fit.r_squared:>10.7f} {fit.max_relative_deviation:>12.5f}"
            )
        return "\n".join(lines)


def _fit_channel(x: np.ndarray, y: np.ndarray) -> ChannelFit:
    if np.ptp(x) <= 0:
        raise ValidationError("zero-variance abscissa: all expected responses are equal")
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    sxy = float(np.sum((x - xm) * (y - ym)))
    slope = sxy / sxx
    intercept = ym - slope * xm
    ss_res = float(np.sum((y - slope * x - intercept) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot <= 0:
        r_squared = 1.0 if ss_res <= 1e-30 else 0.0
    else:
        r_squared = max(0.0, min(1.0, 1.0 - ss_res / ss_tot))
    # deviation is judged against the through-origin proportional fit: the
    # physical claim is proportionality, not affinity
    s0 = float(x @ y) / float(x @ x)
    if s0 <= 0:
        max_rel = float("inf")
    else:
        max_rel = float(np.max(np.abs(y - s0 * x) / (s0 * x)))
    points = tuple((float(a), float(b)) for a, b in zip(x, y))
    return ChannelFit(slope=slope, intercept=intercept, r_squared=r_squared,
                      max_relative_deviation=max_rel, points=points)


def fit_linearity(stats: dict[str, PatchStats], chart: ChartRecord,
                  illuminant: Spectrum | None = None,
                  camera: CameraModel | None = None,
                  thresholds: LinearityThresholds = LinearityThresholds(),
                  max_clipped_fraction: float = 0.01) -> LinearityReport:
    """Fit measured patch values against expected response per channel.

    Uses the chart's achromatic patches (at least 3, none clipped). When the
    camera and illuminant are known, the abscissa is each patch's simulated
    channel response; otherwise the grid-mean reflectance stands in, which is
    exact for spectrally flat patches.
    """
    gray = [p for p in chart.achromatic_patches() if p.name in stats]
    if len(gray) < 3:
        raise ValidationError(
            f"need at least 3 achromatic patches with statistics, got {len(gray)}"
        )
    for p in gray:
        if stats[p.name].clipped_fraction > max_clipped_fraction:
            raise ValidationError(
                f"achromatic patch {p.name!r} is clipped "
                f"({stats[p.name].clipped_fraction:.1%} of pixels); linearity "
                "cannot be judged from saturated values"
            )

    if camera is not None:
        if illuminant is None:
            raise ValidationError("an illuminant is required when a camera model is given")
        expected = np.array([
            simulate_raw_rgb(SceneSample(p.reflectance, illuminant, 1.0), camera).unclipped
            for p in gray
        ])
    else:
        ref = np.array([p.grid_mean_reflectance() for p in gray])
        expected = np.repeat(ref[:, None], 3, axis=1)

    measured = np.array([stats[p.name].mean_rgb for p in gray])
    channels = {
        name: _fit_channel(expected[:, c], measured[:, c])
        for c, name in enumerate(CHANNEL_NAMES)
    }
    verdict = all(fit.passes(thresholds) for fit in channels.values())
    return LinearityReport(channels=channels, verdict=verdict, thresholds=thresholds)


def linearity_from_exposure_series(values, thresholds: LinearityThresholds = LinearityThresholds(),
                                   clip_level: float = 0.999) -> LinearityReport:
    """Same machinery with exposure as the abscissa.

    ``values`` is a list of (exposure_k, pixel_value) pairs where the pixel
    value is a scalar or an RGB triple. All exposures must be distinct and
    no value may be clipped, since a saturated sample is not a measurement.
    """
    if not values:
        raise ValidationError("empty exposure series")
    vals = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for _, v in values]
    widths = {v.size for v in vals}
    if widths not in ({1}, {3}):
        raise ValidationError("values must be all scalars or all RGB triples")
    arr = np.stack(vals)
    if np.any(arr >= clip_level):
        raise ValidationError("series contains clipped values; reduce exposure and retake")
    if len(values) < 3:
        raise ValidationError("need at least 3 exposure points")
    ks = np.array([float(k) for k, _ in values])
    if np.unique(ks).size != ks.size:
        raise ValidationError("exposures must be distinct")
    names = CHANNEL_NAMES if arr.shape[1] == 3 else ("value",)
    channels = {name: _fit_channel(ks, arr[:, c]) for c, name in enumerate(names)}
    verdict = all(fit.passes(thresholds) for fit in channels.values())
    return LinearityReport(channels=channels, verdict=verdict, thresholds=thresholds)


# ---------------------------------------------------------------------------
# Plot output
# ---------------------------------------------------------------------------

_SVG_COLORS = {"r": "#cc3333", "g": "#2a9d2a", "b": "#3355cc", "value": "#444444"}


def linearity_report_svg(report: LinearityReport, width: int = 480, height: int = 360) -> str:
    """Scatter of measured vs expected with the per-channel OLS lines."""
    pad = 48
    xs = [p[0] for fit in report.channels.values() for p in fit.points]
    ys = [p[1] for fit in report.channels.values() for p in fit.points]
    xmax = max(xs) * 1.08 or 1.0
    ymax = max(max(ys) * 1.08, 1e-9)

    def sx(v):
        return pad + v / xmax * (width - 2 * pad)

    def sy(v):
        return height - pad - v / ymax * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        'font-size="12">expected relative response</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">measured pixel value</text>',
    ]
    for name, fit in report.channels.items():
        color = _SVG_COLORS.get(name, "#888888")
        x0, x1 = 0.0, xmax / 1.08
        parts.append(
            f'<line x1="{sx(x0):.2f}" y1="{sy(fit.intercept):.2f}" '
            f'x2="{sx(x1):.2f}" y2="{sy(fit.slope * x1 + fit.intercept):.2f}" '
            f'stroke="{color}" stroke-width="1" stroke-dasharray="4 3"/>'
        )
        for px, py in fit.points:
            parts.append(
                f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="3.5" fill="{color}"/>'
            )
    verdict = "PASS" if report.verdict else "FAIL"
    parts.append(
        f'<text x="{width - pad}" y="{pad - 10}" text-anchor="end" font-size="13" '
        f'font-weight="bold">{verdict}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts)


def save_report(path: str | Path, report: LinearityReport) -> None:
    Path(path).write_text(json.dumps(report.to_jsonable(), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")
