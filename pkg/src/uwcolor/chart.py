"""Calibrated color charts, their registry, and patch statistics extraction.

Charts are physical objects with a measurement history: every unit gets its
own identifier and its own periodically re-measured reflectance spectra.
The registry persists one JSON document per chart and never overwrites
calibration history.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import date, datetime
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import NotFoundError, ValidationError
from .image import LinearImage
from .spectra import (
    Spectrum,
    SpectrumKind,
    _spectrum_from_jsonable,
    _spectrum_to_jsonable,
    on_grid,
)

#: Largest allowed (max - min) reflectance over the grid for a gray patch.
ACHROMATIC_FLATNESS = 0.05

#: Per-tail fraction removed by the trimmed mean.
TRIM_FRACTION = 0.10

#: Any channel at or above this value counts as a clipped pixel.
CLIP_LEVEL = 0.999


class PatchRole(str, Enum):
    CHROMATIC = "chromatic"
    ACHROMATIC = "achromatic"


@dataclass(frozen=True, eq=False)
class PatchRecord:
    """One chart patch: a name, its reflectance spectrum, and its role."""

    name: str
    reflectance: Spectrum
    role: PatchRole = PatchRole.CHROMATIC

    def __post_init__(self):
        if not self.name:
            raise ValidationError("patch name must be nonempty")
        if self.reflectance.kind is not SpectrumKind.REFLECTANCE:
            raise ValidationError(f"patch {self.name!r}: spectrum kind must be reflectance")
        object.__setattr__(self, "role", PatchRole(self.role))
        if self.role is PatchRole.ACHROMATIC:
            vals = on_grid(self.reflectance).values
            if float(vals.max() - vals.min()) > ACHROMATIC_FLATNESS:
                raise ValidationError(
                    f"patch {self.name!r}: achromatic patches must be spectrally flat "
                    f"(reflectance range <= {ACHROMATIC_FLATNESS})"
                )

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatchRecord):
            return NotImplemented
        return (self.name, self.role, self.reflectance) == (other.name, other.role, other.reflectance)

    def grid_mean_reflectance(self) -> float:
        return float(on_grid(self.reflectance).values.mean())


@dataclass(frozen=True)
class CalibrationEntry:
    """One laboratory measurement event for a chart."""

    date: str
    operator: str = ""
    instrument: str = ""
    spectra_file: str = ""

    def __post_init__(self):
        try:
            datetime.fromisoformat(self.date)
        except ValueError as exc:
            raise ValidationError(f"calibration date {self.date!r} is not ISO formatted") from exc


@dataclass(eq=False)
class ChartRecord:
    """A labeled chart with its patches and append-only calibration history."""

    chart_id: str
    patches: list[PatchRecord]
    calibrations: list[CalibrationEntry]

    def __post_init__(self):
        if not self.chart_id:
            raise ValidationError("chart_id must be nonempty")
        names = [p.name for p in self.patches]
        if len(names) != len(set(names)):
            raise ValidationError(f"chart {self.chart_id!r}: patch names must be unique")
        if not self.calibrations:
            raise ValidationError(
                f"chart {self.chart_id!r}: at least one calibration entry is required "
                "before scientific use"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ChartRecord):
            return NotImplemented
        return (
            self.chart_id == other.chart_id
            and self.patches == other.patches
            and self.calibrations == other.calibrations
        )

    def patch(self, name: str) -> PatchRecord:
        for p in self.patches:
            if p.name == name:
                return p
        raise NotFoundError(f"chart {self.chart_id!r} has no patch {name!r}")

    def achromatic_patches(self) -> list[PatchRecord]:
        return [p for p in self.patches if p.role is PatchRole.ACHROMATIC]

    @property
    def latest_calibration(self) -> CalibrationEntry:
        return max(self.calibrations, key=lambda c: c.date)

    def calibration_age_days(self, today: date | None = None) -> float:
        today = today or date.today()
        latest = datetime.fromisoformat(self.latest_calibration.date).date()
        return (today - latest).days


# ---------------------------------------------------------------------------
# Patch layout and statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PatchRegion:
    """Axis-aligned pixel rectangle, end-exclusive: x0 <= x < x1."""

    name: str
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValidationError(f"region {self.name!r}: empty or inverted rectangle")

    def shrunk(self, margin_frac: float) -> tuple[int, int, int, int]:
        """Inset the rectangle by a fraction of its size on every side."""
        dx = math.ceil(margin_frac * (self.x1 - self.x0))
        dy = math.ceil(margin_frac * (self.y1 - self.y0))
        return self.x0 + dx, self.y0 + dy, self.x1 - dx, self.y1 - dy


@dataclass(frozen=True)
class PatchLayout:
    """Pixel regions for each patch in an image of known dimensions."""

    width: int
    height: int
    regions: tuple[PatchRegion, ...]
    margin_frac: float = 0.1

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("layout dimensions must be positive")
        if not 0.0 <= self.margin_frac <= 0.45:
            raise ValidationError("margin_frac must lie in [0, 0.45]")
        object.__setattr__(self, "regions", tuple(self.regions))
        names = [r.name for r in self.regions]
        if len(names) != len(set(names)):
            raise ValidationError("layout patch names must be unique")
        for r in self.regions:
            if r.x0 < 0 or r.y0 < 0 or r.x1 > self.width or r.y1 > self.height:
                raise ValidationError(f"region {r.name!r} lies outside the image bounds")

    def region(self, name: str) -> PatchRegion:
        for r in self.regions:
            if r.name == name:
                return r
        raise NotFoundError(f"layout has no region {name!r}")

    def to_jsonable(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "margin_frac": self.margin_frac,
            "patches": [
                {"name": r.name, "x0": r.x0, "y0": r.y0, "x1": r.x1, "y1": r.y1}
                for r in self.regions
            ],
        }

    @classmethod
    def from_jsonable(cls, doc: dict) -> "PatchLayout":
        regions = tuple(
            PatchRegion(p["name"], int(p["x0"]), int(p["y0"]), int(p["x1"]), int(p["y1"]))
            for p in doc["patches"]
        )
        return cls(
            width=int(doc["width"]),
            height=int(doc["height"]),
            regions=regions,
            margin_frac=float(doc.get("margin_frac", 0.1)),
        )


def load_layout(path: str | Path) -> PatchLayout:
    return PatchLayout.from_jsonable(json.loads(Path(path).read_text(encoding="utf-8")))


def save_layout(path: str | Path, layout: PatchLayout) -> None:
    Path(path).write_text(
        json.dumps(layout.to_jsonable(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


@dataclass(frozen=True)
class PatchStats:
    """Robust per-patch pixel statistics: 10%-per-tail trimmed mean/std."""

    mean_rgb: np.ndarray
    std_rgb: np.ndarray
    pixel_count: int
    clipped_fraction: float

    def __post_init__(self):
        if self.pixel_count <= 0:
            raise ValidationError("pixel_count must be positive")
        if not 0.0 <= self.clipped_fraction <= 1.0:
            raise ValidationError("clipped_fraction must lie in [0, 1]")


def _trimmed(channel: np.ndarray, trim: float) -> np.ndarray:
    k = int(trim * channel.size)
    s = np.sort(channel)
    return s[k:channel.size - k] if k > 0 else s


def extract_patch_stats(img: LinearImage, layout: PatchLayout,
                        trim: float = TRIM_FRACTION) -> dict[str, PatchStats]:
    """Compute per-patch statistics from user-specified regions.

    Each rectangle is inset by the layout margin, then per channel the
    trimmed mean and (population) standard deviation are taken. Statistics
    are order-free, so specular glints and sediment in the tails drop out.
    """
    if (img.height, img.width) != (layout.height, layout.width):
        raise ValidationError(
            f"layout is {layout.width}x{layout.height} but image is {img.width}x{img.height}"
        )
    if not 0.0 <= trim < 0.5:
        raise ValidationError("trim fraction must lie in [0, 0.5)")
    out: dict[str, PatchStats] = {}
    for region in layout.regions:
        x0, y0, x1, y1 = region.shrunk(layout.margin_frac)
        if x0 >= x1 or y0 >= y1:
            raise ValidationError(f"region {region.name!r} is empty after margin shrink")
        pixels = img.data[y0:y1, x0:x1, :].reshape(-1, 3)
        clipped = float(np.mean(np.any(pixels >= CLIP_LEVEL, axis=1)))
        mean = np.empty(3)
        std = np.empty(3)
        for c in range(3):
            t = _trimmed(pixels[:, c], trim)
            mean[c] = t.mean()
            std[c] = t.std()
        out[region.name] = PatchStats(
            mean_rgb=mean, std_rgb=std,
            pixel_count=pixels.shape[0], clipped_fraction=clipped,
        )
    return out


# ---------------------------------------------------------------------------
# Registry: one JSON document per chart, atomic writes
# ---------------------------------------------------------------------------

def _chart_to_jsonable(chart: ChartRecord) -> dict:
    return {
        "chart_id": chart.chart_id,
        "patches": [
            {
                "name": p.name,
                "role": p.role.value,
                "reflectance": _spectrum_to_jsonable(p.reflectance),
            }
            for p in chart.patches
        ],
        "calibrations": [
            {
                "date": c.date,
                "operator": c.operator,
                "instrument": c.instrument,
                "spectra_file": c.spectra_file,
            }
            for c in chart.calibrations
        ],
    }


def _chart_from_jsonable(doc: dict, base_dir: Path) -> ChartRecord:
    patches = [
        PatchRecord(
            name=p["name"],
            reflectance=_spectrum_from_jsonable(
                p["reflectance"], SpectrumKind.REFLECTANCE, base_dir
            ),
            role=PatchRole(p.get("role", "chromatic")),
        )
        for p in doc["patches"]
    ]
    calibrations = [
        CalibrationEntry(
            date=c["date"],
            operator=c.get("operator", ""),
            instrument=c.get("instrument", ""),
            spectra_file=c.get("spectra_file", ""),
        )
        for c in doc["calibrations"]
    ]
    return ChartRecord(chart_id=doc["chart_id"], patches=patches, calibrations=calibrations)


class ChartRegistry:
    """Durable chart store: ``<root>/<chart_id>.json``.

    Writes go through a temporary file and an atomic rename, so concurrent
    readers never observe partial state. Single-writer discipline is assumed.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, chart_id: str) -> Path:
        if not chart_id or "/" in chart_id or chart_id.startswith("."):
            raise ValidationError(f"invalid chart_id {chart_id!r}")
        return self.root / f"{chart_id}.json"

    def put(self, chart: ChartRecord, overwrite: bool = False) -> None:
        path = self._path(chart.chart_id)
        if path.exists():
            if not overwrite:
                raise ValidationError(
                    f"chart {chart.chart_id!r} already exists; pass overwrite to replace"
                )
            existing = self.get(chart.chart_id)
            if chart.calibrations[: len(existing.calibrations)] != existing.calibrations:
                raise ValidationError(
                    f"chart {chart.chart_id!r}: calibration history is append-only; "
                    "the stored entries must be preserved"
                )
        doc = _chart_to_jsonable(chart)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(doc, f, indent=2, sort_keys=True)
                f.write("\n")
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def get(self, chart_id: str) -> ChartRecord:
        path = self._path(chart_id)
        if not path.exists():
            raise NotFoundError(f"no chart {chart_id!r} in registry {self.root}")
        doc = json.loads(path.read_text(encoding="utf-8"))
        return _chart_from_jsonable(doc, self.root)

    def list(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))
