"""Spectral data types, resampling/integration, and RAW RGB simulation.

Everything downstream (chart targets, calibration fits, synthetic fixtures)
is grounded in the forward model implemented here: a camera channel's linear
response is the exposure-scaled integral of sensitivity x illuminant x
reflectance over the visible range.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import FileFormatError, GridMismatchError, ValidationError

#: Hard bounds for any stored wavelength sample (nm).
WL_MIN = 300.0
WL_MAX = 830.0

#: Internal integration grid: 380..690 nm inclusive at 5 nm steps (63 samples).
#: All spectra are resampled onto this grid before integration.
GRID = np.arange(380.0, 691.0, 5.0)
GRID.setflags(write=False)


class SpectrumKind(str, Enum):
    REFLECTANCE = "reflectance"
    ILLUMINANT = "illuminant"
    SENSITIVITY = "sensitivity"
    CMF = "cmf"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A sampled function of wavelength.

    The common carrier for surface reflectance, illuminant power, channel
    sensitivity and observer curves. Values are unitless: reflectance lies in
    [0, 1]; the other kinds are relative and only need to be nonnegative.
    """

    wavelengths_nm: np.ndarray
    values: np.ndarray
    kind: SpectrumKind = SpectrumKind.REFLECTANCE

    def __post_init__(self):
        wl = np.asarray(self.wavelengths_nm, dtype=np.float64)
        vals = np.asarray(self.values, dtype=np.float64)
        if wl.ndim != 1 or vals.ndim != 1 or wl.size != vals.size:
            raise ValidationError("wavelengths and values must be 1-D arrays of equal length")
        # single-sample spectra are degenerate but arise as resampling output;
        # interpolation and integration stay well defined for them
        if wl.size < 1:
            raise ValidationError("a spectrum needs at least 1 sample")
        if not np.all(np.diff(wl) > 0):
            raise ValidationError("wavelengths must be strictly increasing")
        if wl[0] < WL_MIN or wl[-1] > WL_MAX:
            raise ValidationError(f"wavelengths must lie within [{WL_MIN:g}, {WL_MAX:g}] nm")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("spectrum values must be finite")
        kind = SpectrumKind(self.kind)
        if kind is SpectrumKind.REFLECTANCE:
            if vals.min() < 0.0 or vals.max() > 1.0:
                raise ValidationError("reflectance values must lie in [0, 1]")
        elif vals.min() < 0.0:
            raise ValidationError(f"{kind.value} values must be nonnegative")
        wl.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "wavelengths_nm", wl)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", kind)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Spectrum):
            return NotImplemented
        return (
            self.kind is other.kind
            and np.array_equal(self.wavelengths_nm, other.wavelengths_nm)
            and np.array_equal(self.values, other.values)
        )

    def __len__(self) -> int:
        return int(self.wavelengths_nm.size)


def flat_spectrum(value: float, kind: SpectrumKind = SpectrumKind.REFLECTANCE) -> Spectrum:
    """Spectrally flat curve with the given value over the internal grid."""
    return Spectrum(GRID, np.full(GRID.size, float(value)), kind)


def resample(s: Spectrum, grid: np.ndarray) -> Spectrum:
    """Resample a spectrum onto ``grid`` by linear interpolation.

    Inside the source support the piecewise-linear form is evaluated exactly;
    outside it the result is zero (sensitivities are physically zero outside
    their measured support, so zero-fill, never extrapolation).
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValidationError("resample grid is empty")
    if grid.ndim != 1 or (grid.size > 1 and not np.all(np.diff(grid) > 0)):
        raise ValidationError("resample grid must be strictly increasing")
    vals = np.interp(grid, s.wavelengths_nm, s.values, left=0.0, right=0.0)
    if s.kind is SpectrumKind.REFLECTANCE:
        # interpolation of in-range values cannot escape [0, 1]; guard rounding
        vals = np.clip(vals, 0.0, 1.0)
    return Spectrum(grid, vals, s.kind)


def on_grid(s: Spectrum) -> Spectrum:
    """Resample onto the internal integration grid (no-op if already there)."""
    if s.wavelengths_nm.size == GRID.size and np.array_equal(s.wavelengths_nm, GRID):
        return s
    return resample(s, GRID)


def integrate_product(a: Spectrum, b: Spectrum, c: Spectrum) -> float:
    """Trapezoidal integral of a(l)*b(l)*c(l) dl over their shared grid.

    All three spectra must already sit on the same grid; callers resample
    first (:func:`on_grid`). Trapezoidal quadrature is exact for the
    piecewise-linear representation used throughout.
    """
    wl = a.wavelengths_nm
    if not (np.array_equal(wl, b.wavelengths_nm) and np.array_equal(wl, c.wavelengths_nm)):
        raise GridMismatchError("spectra must share one grid; resample before integrating")
    return float(np.trapezoid(a.values * b.values * c.values, wl))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """A named camera: three channel sensitivity spectra (R, G, B order)."""

    name: str
    sensitivities: tuple[Spectrum, Spectrum, Spectrum]

    def __post_init__(self):
        if not self.name:
            raise ValidationError("camera name must be nonempty")
        sens = tuple(self.sensitivities)
        if len(sens) != 3:
            raise ValidationError("a camera model has exactly three channels")
        for s in sens:
            if s.kind is not SpectrumKind.SENSITIVITY:
                raise ValidationError("camera channels must be sensitivity spectra")
            if not np.any(s.values > 0):
                raise ValidationError("channel sensitivity must not be identically zero")
        object.__setattr__(self, "sensitivities", sens)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CameraModel):
            return NotImplemented
        return self.name == other.name and self.sensitivities == other.sensitivities


@dataclass(frozen=True)
class SceneSample:
    """One surface under one light at a relative exposure."""

    reflectance: Spectrum
    illuminant: Spectrum
    exposure_k: float = 1.0

    def __post_init__(self):
        if not self.exposure_k > 0:
            raise ValidationError("exposure_k must be positive")


@dataclass(frozen=True)
class RawRgb:
    """Simulated linear RAW response. ``rgb`` is clipped to [0, 1]; the
    pre-clip values stay available for linearity and scaling analyses."""

    rgb: np.ndarray
    unclipped: np.ndarray
    clipped: bool


def simulate_raw_rgb(scene: SceneSample, camera: CameraModel) -> RawRgb:
    """Forward-model the camera's linear RAW triple for a scene sample.

    Per channel: exposure_k times the integral of sensitivity x illuminant x
    reflectance over the internal grid. Saturation is reported through the
    ``clipped`` flag rather than silently discarded.
    """
    refl = on_grid(scene.reflectance)
    illum = on_grid(scene.illuminant)
    raw = np.empty(3)
    for i, sens in enumerate(camera.sensitivities):
        raw[i] = scene.exposure_k * integrate_product(on_grid(sens), illum, refl)
    clipped = bool(np.any(raw > 1.0))
    return RawRgb(rgb=np.clip(raw, 0.0, 1.0), unclipped=raw, clipped=clipped)


# ---------------------------------------------------------------------------
# Disk formats: spectra as two-column CSV, cameras as JSON.
# ---------------------------------------------------------------------------

CSV_HEADER = ("wavelength_nm", "value")


def read_spectrum_csv(path: str | Path, kind: SpectrumKind) -> Spectrum:
    """Read a spectrum from CSV with header ``wavelength_nm,value``."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != list(CSV_HEADER):
                raise FileFormatError(f"{path}: expected header 'wavelength_nm,value'")
            wl, vals = [], []
            for row in reader:
                if not row:
                    continue
                try:
                    wl.append(float(row[0]))
                    vals.append(float(row[1]))
                except (ValueError, IndexError) as exc:
                    raise FileFormatError(f"{path}: bad row {row!r}") from exc
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return Spectrum(np.array(wl), np.array(vals), kind)


def write_spectrum_csv(path: str | Path, s: Spectrum) -> None:
    """Write a spectrum as CSV. Floats are written with ``repr`` so a
    read-back reproduces every value bit-exactly."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write("wavelength_nm,value\n")
        for w, v in zip(s.wavelengths_nm, s.values):
            f.write(f"{_numstr(w)},{_numstr(v)}\n")


def _numstr(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 1e15 else repr(x)


def _spectrum_to_jsonable(s: Spectrum) -> dict:
    return {"wavelengths_nm": s.wavelengths_nm.tolist(), "values": s.values.tolist()}


def _spectrum_from_jsonable(obj, kind: SpectrumKind, base_dir: Path) -> Spectrum:
    if isinstance(obj, str):
        return read_spectrum_csv(base_dir / obj, kind)
    if isinstance(obj, dict) and "wavelengths_nm" in obj and "values" in obj:
        return Spectrum(np.array(obj["wavelengths_nm"]), np.array(obj["values"]), kind)
    raise FileFormatError("spectrum entry must be a CSV path or inline arrays")


def read_camera_json(path: str | Path) -> CameraModel:
    """Load a camera model: ``{name, channels: {r, g, b}}`` where each channel
    is a spectrum CSV path (relative to the JSON file) or inline arrays."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    try:
        channels = doc["channels"]
        sens = tuple(
            _spectrum_from_jsonable(channels[ch], SpectrumKind.SENSITIVITY, path.parent)
            for ch in ("r", "g", "b")
        )
        return CameraModel(name=doc["name"], sensitivities=sens)
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing camera field {exc}") from exc


def write_camera_json(path: str | Path, camera: CameraModel) -> None:
    doc = {
        "name": camera.name,
        "channels": {
            ch: _spectrum_to_jsonable(s)
            for ch, s in zip(("r", "g", "b"), camera.sensitivities)
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
