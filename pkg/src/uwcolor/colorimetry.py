"""Device-independent color: camera RGB -> CIE XYZ -> standard RGB, plus the
CIE 1976 L*a*b* difference metric used for every agreement threshold.

The standard-observer curves and the D65 power distribution ship as
versioned CSV assets under ``uwcolor/data`` rather than hardcoded tables, so
their provenance is inspectable and they can be swapped out.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .image import LinearImage
from .spectra import (
    GRID,
    Spectrum,
    SpectrumKind,
    integrate_product,
    on_grid,
    read_spectrum_csv,
    _spectrum_from_jsonable,
    _spectrum_to_jsonable,
)

#: Linear transform from XYZ (D65 white) to the IEC 61966-2-1 standard RGB
#: primaries. Published constants; the inverse is computed, not re-keyed.
M_XYZ_TO_SRGB = np.array([
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
])
M_SRGB_TO_XYZ = np.linalg.inv(M_XYZ_TO_SRGB)

#: The standard's own D65 white point (Y = 1).
D65_WHITE_XYZ = np.array([0.95047, 1.0, 1.08883])

_DATA_VERSION = "v1"


@dataclass(frozen=True)
class CmfSet:
    """Standard-observer color matching functions (xbar, ybar, zbar)."""

    xbar: Spectrum
    ybar: Spectrum
    zbar: Spectrum

    def __post_init__(self):
        for s in (self.xbar, self.ybar, self.zbar):
            if s.kind is not SpectrumKind.CMF:
                raise ValidationError("CMF curves must have kind=cmf")
        if not np.any(self.ybar.values > 0):
            raise ValidationError("ybar must not be identically zero")


def _asset(name: str) -> Path:
    return resources.files("uwcolor.data").joinpath(name)


def default_cmfs() -> CmfSet:
    """CIE 1931 2-degree observer, 5 nm tabulation (shipped asset)."""
    return CmfSet(
        xbar=read_spectrum_csv(_asset(f"cie1931_xbar_2deg_{_DATA_VERSION}.csv"), SpectrumKind.CMF),
        ybar=read_spectrum_csv(_asset(f"cie1931_ybar_2deg_{_DATA_VERSION}.csv"), SpectrumKind.CMF),
        zbar=read_spectrum_csv(_asset(f"cie1931_zbar_2deg_{_DATA_VERSION}.csv"), SpectrumKind.CMF),
    )


def default_d65() -> Spectrum:
    """CIE D65 daylight power distribution, 5 nm tabulation (shipped asset)."""
    return read_spectrum_csv(_asset(f"illuminant_d65_{_DATA_VERSION}.csv"), SpectrumKind.ILLUMINANT)


def patch_xyz(reflectance: Spectrum, illuminant: Spectrum, cmf: CmfSet | None = None) -> np.ndarray:
    """Tristimulus values of a surface under an illuminant.

    Normalized so a perfect reflector has Y = 1 for any illuminant:
    X = K * integral(xbar * E * R) with K = 1 / integral(ybar * E).
    """
    cmf = cmf or default_cmfs()
    e = on_grid(illuminant)
    r = on_grid(reflectance)
    ones = Spectrum(GRID, np.ones(GRID.size), SpectrumKind.REFLECTANCE)
    norm = integrate_product(on_grid(cmf.ybar), e, ones)
    if norm <= 0:
        raise ValidationError("illuminant carries no power under ybar; cannot normalize")
    k = 1.0 / norm
    return np.array([
        k * integrate_product(on_grid(cmf.xbar), e, r),
        k * integrate_product(on_grid(cmf.ybar), e, r),
        k * integrate_product(on_grid(cmf.zbar), e, r),
    ])


def white_point(illuminant: Spectrum, cmf: CmfSet | None = None) -> np.ndarray:
    """XYZ of the perfect reflector under the illuminant (Y = 1 exactly)."""
    return patch_xyz(Spectrum(GRID, np.ones(GRID.size), SpectrumKind.REFLECTANCE),
                     illuminant, cmf)


# ---------------------------------------------------------------------------
# L*a*b* and the difference metric
# ---------------------------------------------------------------------------

_LAB_DELTA = 6.0 / 29.0
_LAB_EPS = _LAB_DELTA ** 3


def xyz_to_lab(xyz: np.ndarray, white: np.ndarray) -> np.ndarray:
    """CIE 1976 L*a*b* relative to a white point (vectorized over leading axes)."""
    white = np.asarray(white, dtype=np.float64)
    if white.shape != (3,) or np.any(white <= 0):
        raise ValidationError("white point must be 3 positive components")
    t = np.asarray(xyz, dtype=np.float64) / white

    def f(v):
        return np.where(v > _LAB_EPS, np.cbrt(v), v / (3 * _LAB_DELTA ** 2) + 4.0 / 29.0)

    fx, fy, fz = f(t[..., 0]), f(t[..., 1]), f(t[..., 2])
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def delta_e76(lab1: np.ndarray, lab2: np.ndarray) -> np.ndarray | float:
    """Euclidean distance in L*a*b* (the CIE 1976 color difference)."""
    d = np.asarray(lab1, dtype=np.float64) - np.asarray(lab2, dtype=np.float64)
    out = np.sqrt(np.sum(d * d, axis=-1))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# Color correction matrix
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ColorCalibration:
    """A fitted camera-RGB -> XYZ map with its fitting context."""

    matrix: np.ndarray
    illuminant: Spectrum
    white_xyz: np.ndarray
    source: str = "chart_fit"
    residual_delta_e: float = 0.0
    illuminant_ref: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValidationError("calibration matrix must be 3x3")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValidationError("calibration matrix is singular")
        wp = np.asarray(self.white_xyz, dtype=np.float64)
        if wp.shape != (3,) or abs(wp[1] - 1.0) > 1e-9:
            raise ValidationError("white point must have Y normalized to 1")
        if self.source not in ("chart_fit", "sensitivity_fit"):
            raise ValidationError(f"unknown calibration source {self.source!r}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "white_xyz", wp)


def fit_ccm(camera_rgbs: np.ndarray, target_xyzs: np.ndarray, illuminant: Spectrum,
            weights: np.ndarray | None = None, *,
            cmf: CmfSet | None = None,
            white_rgb: np.ndarray | None = None,
            white_target: np.ndarray | None = None,
            source: str = "chart_fit",
            illuminant_ref: str = "") -> ColorCalibration:
    """Least-squares fit of the 3x3 camera-RGB -> XYZ matrix over patches.

    When ``white_rgb`` is given the fit is constrained so that triple maps
    exactly to the white point (neutrals stay neutral, the property users
    check first). The residual is the mean L*a*b* distance over the fitted
    patches; it is invariant to a global rescaling of all camera RGBs since
    the matrix simply absorbs exposure.
    """
    rgbs = np.asarray(camera_rgbs, dtype=np.float64)
    xyzs = np.asarray(target_xyzs, dtype=np.float64)
    if rgbs.ndim != 2 or rgbs.shape[1] != 3 or rgbs.shape != xyzs.shape:
        raise ValidationError("camera_rgbs and target_xyzs must both be (N, 3)")
    n = rgbs.shape[0]
    if n < 4:
        raise ValidationError("matrix fit needs at least 4 patch pairs")
    if np.linalg.matrix_rank(rgbs, tol=1e-9 * max(1.0, float(np.abs(rgbs).max()))) < 3:
        raise ValidationError("camera RGBs are rank deficient; add more distinct colors")
    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0):
            raise ValidationError("weights must be nonnegative, one per patch")

    wp = white_point(illuminant, cmf)
    sw = np.sqrt(w)[:, None]
    a = rgbs * sw
    b = xyzs * sw

    if white_rgb is None:
        m_t, *_ = np.linalg.lstsq(a, b, rcond=None)
        m = m_t.T
    else:
        wr = np.asarray(white_rgb, dtype=np.float64)
        wt = np.asarray(white_target, dtype=np.float64) if white_target is not None else wp
        if wr.shape != (3,) or np.all(wr == 0):
            raise ValidationError("white_rgb must be a nonzero triple")
        # per output row: minimize |a m - b_col|^2 subject to m . wr = wt_col
        m = np.empty((3, 3))
        ata = a.T @ a
        for row in range(3):
            kkt = np.zeros((4, 4))
            kkt[:3, :3] = 2.0 * ata
            kkt[:3, 3] = wr
            kkt[3, :3] = wr
            rhs = np.concatenate([2.0 * a.T @ b[:, row], [wt[row]]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError as exc:
                raise ValidationError("constrained fit is singular") from exc
            m[row] = sol[:3]

    fitted = rgbs @ m.T
    residual = float(np.mean(delta_e76(xyz_to_lab(fitted, wp), xyz_to_lab(xyzs, wp))))
    return ColorCalibration(matrix=m, illuminant=illuminant, white_xyz=wp,
                            source=source, residual_delta_e=residual,
                            illuminant_ref=illuminant_ref)


def fit_ccm_from_sensitivities(camera, illuminant: Spectrum,
                               training_reflectances: list[Spectrum],
                               cmf: CmfSet | None = None,
                               constrain_white: bool = False,
                               illuminant_ref: str = "") -> ColorCalibration:
    """Precompute a calibration from measured sensitivities alone.

    Simulates the camera's response to a reflectance training set under the
    illuminant and fits against colorimetric ground truth; no chart capture
    needed at use time.
    """
    from .spectra import SceneSample, simulate_raw_rgb

    if len(training_reflectances) < 4:
        raise ValidationError("need at least 4 training reflectances")
    rgbs = np.array([
        simulate_raw_rgb(SceneSample(r, illuminant, 1.0), camera).unclipped
        for r in training_reflectances
    ])
    scale = rgbs.max()
    if scale <= 0:
        raise ValidationError("camera produced no response over the training set")
    rgbs /= scale
    xyzs = np.array([patch_xyz(r, illuminant, cmf) for r in training_reflectances])
    white_rgb = None
    if constrain_white:
        ones = Spectrum(GRID, np.ones(GRID.size), SpectrumKind.REFLECTANCE)
        white_rgb = simulate_raw_rgb(SceneSample(ones, illuminant, 1.0), camera).unclipped / scale
    return fit_ccm(rgbs, xyzs, illuminant, cmf=cmf, white_rgb=white_rgb,
                   source="sensitivity_fit", illuminant_ref=illuminant_ref)


def camera_to_xyz(img_or_rgb, cal: ColorCalibration, override_processed: bool = False):
    """Apply a calibration: per pixel M @ rgb, retagged device-independent."""
    if isinstance(img_or_rgb, LinearImage):
        img_or_rgb.require_linear("camera_to_xyz", override=override_processed)
        data = img_or_rgb.data @ cal.matrix.T
        return LinearImage(data=data, space="xyz", state=img_or_rgb.state)
    rgb = np.asarray(img_or_rgb, dtype=np.float64)
    return rgb @ cal.matrix.T


@dataclass(frozen=True)
class GamutReport:
    """Out-of-gamut accounting for a standard-RGB conversion."""

    out_of_gamut_count: int
    out_of_gamut_fraction: float
    min_linear: float
    max_linear: float


def xyz_to_standard_rgb(xyz, encode: bool = False) -> tuple[np.ndarray, GamutReport]:
    """XYZ -> standard RGB (IEC 61966-2-1, D65).

    ``encode=False`` (the scientific path) returns linear values and
    preserves out-of-gamut components so nothing is lost; ``encode=True``
    additionally clips and applies the standard transfer curve, for display
    only. Out-of-gamut values are reported either way.
    """
    arr = np.asarray(xyz, dtype=np.float64)
    rgb = arr @ M_XYZ_TO_SRGB.T
    flat = rgb.reshape(-1, 3)
    # small tolerance so float noise at the gamut boundary is not reported
    # (the published matrix maps the white point to 1 +/- a few 1e-8)
    out_mask = np.any((flat < -1e-6) | (flat > 1.0 + 1e-6), axis=1)
    report = GamutReport(
        out_of_gamut_count=int(out_mask.sum()),
        out_of_gamut_fraction=float(out_mask.mean()),
        min_linear=float(flat.min()),
        max_linear=float(flat.max()),
    )
    if encode:
        rgb = srgb_encode(np.clip(rgb, 0.0, 1.0))
    return rgb, report


def srgb_encode(linear: np.ndarray) -> np.ndarray:
    """The standard RGB transfer curve (display encoding)."""
    linear = np.asarray(linear, dtype=np.float64)
    return np.where(linear <= 0.0031308,
                    12.92 * linear,
                    1.055 * np.power(np.maximum(linear, 1e-12), 1.0 / 2.4) - 0.055)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_calibration(path: str | Path, cal: ColorCalibration) -> None:
    doc = {
        "matrix": cal.matrix.tolist(),
        "illuminant_ref": cal.illuminant_ref,
        "illuminant_spd": _spectrum_to_jsonable(cal.illuminant),
        "white_point": cal.white_xyz.tolist(),
        "source": cal.source,
        "residual": cal.residual_delta_e,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_calibration(path: str | Path) -> ColorCalibration:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    illum = _spectrum_from_jsonable(doc["illuminant_spd"], SpectrumKind.ILLUMINANT,
                                    Path(path).parent)
    return ColorCalibration(
        matrix=np.array(doc["matrix"]),
        illuminant=illum,
        white_xyz=np.array(doc["white_point"]),
        source=doc.get("source", "chart_fit"),
        residual_delta_e=float(doc.get("residual", 0.0)),
        illuminant_ref=doc.get("illuminant_ref", ""),
    )
