"""Distance-dependent underwater degradation: forward model, inversion, and
parameter estimation.

Model, per pixel and channel with camera-to-scene distance z:

    I_c = J_c * exp(-beta_D_c * z) + B_inf_c * (1 - exp(-beta_B_c * z))

Direct signal decays with its own attenuation coefficient while backscatter
saturates toward the veiling color; both coefficients are held constant per
channel, which keeps desk-scale estimation well posed. Pixels whose direct
transmission falls below a threshold are flagged unrecoverable, never
silently filled in: this is a measurement tool, not an enhancer.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .chart import PatchStats
from .errors import EstimationError, ValidationError
from .image import LinearImage

#: Below this direct transmission a recovered value is numerically
#: meaningless (a single 12-bit quantization step exceeds 1% of the signal).
DEFAULT_T_MIN = 0.02


@dataclass(frozen=True)
class WaterProperties:
    """Per-channel attenuation/backscatter coefficients (1/m) and the
    veiling color the image converges to at large distance."""

    beta_d: np.ndarray
    beta_b: np.ndarray
    b_inf: np.ndarray

    def __post_init__(self):
        bd = np.asarray(self.beta_d, dtype=np.float64)
        bb = np.asarray(self.beta_b, dtype=np.float64)
        bi = np.asarray(self.b_inf, dtype=np.float64)
        for name, arr in (("beta_d", bd), ("beta_b", bb), ("b_inf", bi)):
            if arr.shape != (3,):
                raise ValidationError(f"{name} must have exactly 3 components")
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite")
        if np.any(bd <= 0) or np.any(bb <= 0):
            raise ValidationError("attenuation and backscatter coefficients must be positive")
        if np.any(bi < 0) or np.any(bi > 1):
            raise ValidationError("veiling color must lie in [0, 1]")
        for arr in (bd, bb, bi):
            arr.setflags(write=False)
        object.__setattr__(self, "beta_d", bd)
        object.__setattr__(self, "beta_b", bb)
        object.__setattr__(self, "b_inf", bi)

    def to_jsonable(self) -> dict:
        return {
            "beta_D": self.beta_d.tolist(),
            "beta_B": self.beta_b.tolist(),
            "B_inf": self.b_inf.tolist(),
        }

    @classmethod
    def from_jsonable(cls, doc: dict) -> "WaterProperties":
        try:
            return cls(
                beta_d=np.array(doc["beta_D"], dtype=np.float64),
                beta_b=np.array(doc["beta_B"], dtype=np.float64),
                b_inf=np.array(doc["B_inf"], dtype=np.float64),
            )
        except KeyError as exc:
            raise ValidationError(f"water properties document is missing {exc}") from exc


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel camera-to-scene distance in meters with a validity mask.

    "Depth" here means distance along the viewing ray, not water-column
    depth. Non-positive or non-finite input distances are marked invalid and
    stored as zero so downstream exponentials stay tame.
    """

    z: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if z.ndim != 2 or valid.shape != z.shape:
            raise ValidationError("depth map and validity mask must be matching 2-D arrays")
        if np.any(valid & ~(z > 0)):
            raise ValidationError("valid depth entries must be positive")
        z = np.where(valid & np.isfinite(z), z, 0.0)
        z.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, z: np.ndarray) -> "DepthMap":
        z = np.asarray(z, dtype=np.float64)
        valid = np.isfinite(z) & (z > 0)
        return cls(z=np.where(valid, z, 0.0), valid=valid)

    @property
    def shape(self) -> tuple[int, int]:
        return self.z.shape


def _check_dims(img: LinearImage, z: DepthMap) -> None:
    if (img.height, img.width) != z.shape:
        raise ValidationError(
            f"image is {img.height}x{img.width} but depth map is {z.shape[0]}x{z.shape[1]}"
        )


@dataclass(frozen=True)
class RecoveryDiagnostics:
    """Per-pixel transmission/flags plus summary fractions for a recovery."""

    transmission: np.ndarray          # (H, W, 3) exp(-beta_D * z)
    recoverable: np.ndarray           # (H, W) min-channel transmission >= t_min
    valid: np.ndarray                 # (H, W) copied from the depth map
    clamped: np.ndarray | None = None  # (H, W) recovery hit the [0, 1] clamp
    t_min: float = DEFAULT_T_MIN

    @property
    def fraction_recoverable(self) -> float:
        return float(np.mean(self.recoverable))

    @property
    def fraction_valid(self) -> float:
        return float(np.mean(self.valid))

    @property
    def fraction_clamped(self) -> float:
        return 0.0 if self.clamped is None else float(np.mean(self.clamped))

    def summary(self) -> dict:
        return {
            "t_min": self.t_min,
            "fraction_recoverable": self.fraction_recoverable,
            "fraction_valid": self.fraction_valid,
            "fraction_clamped": self.fraction_clamped,
        }


def recoverability_map(z: DepthMap, w: WaterProperties,
                       t_min: float = DEFAULT_T_MIN) -> RecoveryDiagnostics:
    """Where does enough direct signal survive for recovery to mean anything?

    A pixel is recoverable when its worst channel still transmits at least
    ``t_min`` (inclusive). Invalid depth pixels are never recoverable.
    """
    if not 0.0 < t_min < 1.0:
        raise ValidationError("t_min must lie in (0, 1)")
    t = _kernels.transmission(z.z, w.beta_d)
    recoverable = (t.min(axis=-1) >= t_min) & z.valid
    return RecoveryDiagnostics(transmission=t, recoverable=recoverable,
                               valid=z.valid, t_min=t_min)


def forward_degrade(j: LinearImage, z: DepthMap, w: WaterProperties,
                    override_processed: bool = False) -> LinearImage:
    """Push a clear-scene image through the water model.

    Colors fade and backscatter builds with distance; at large z every pixel
    approaches the veiling color. Invalid-depth pixels are copied through
    (they are flagged by :func:`recoverability_map` diagnostics).
    """
    j.require_linear("forward_degrade", override=override_processed)
    _check_dims(j, z)
    out = _kernels.degrade(j.data, z.z, z.valid, w.beta_d, w.beta_b, w.b_inf)
    return j.with_data(np.clip(out, 0.0, 1.0))


def remove_water(i: LinearImage, z: DepthMap, w: WaterProperties,
                 t_min: float = DEFAULT_T_MIN,
                 override_processed: bool = False) -> tuple[LinearImage, RecoveryDiagnostics]:
    """Subtract backscatter and reverse attenuation using known properties.

    Values are emitted for every valid pixel, but pixels whose minimum
    channel transmission is below ``t_min`` are flagged unrecoverable: at
    that point the direct signal carries essentially no information. Clamped
    values (negative after backscatter subtraction, or above 1 after
    amplification) are recorded in the diagnostics.
    """
    i.require_linear("remove_water", override=override_processed)
    _check_dims(i, z)
    if not 0.0 < t_min < 1.0:
        raise ValidationError("t_min must lie in (0, 1)")
    j_hat, clamped = _kernels.restore(i.data, z.z, z.valid, w.beta_d, w.beta_b, w.b_inf)
    t = _kernels.transmission(z.z, w.beta_d)
    recoverable = (t.min(axis=-1) >= t_min) & z.valid
    diags = RecoveryDiagnostics(transmission=t, recoverable=recoverable,
                                valid=z.valid, clamped=clamped, t_min=t_min)
    return i.with_data(j_hat), diags


# ---------------------------------------------------------------------------
# Estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BackscatterEstimate:
    b_inf: np.ndarray
    beta_b: np.ndarray
    rms_residual: float


def fit_saturating_exponential(z: np.ndarray, y: np.ndarray,
                               max_iter: int = 200,
                               rel_step_tol: float = 1e-10) -> tuple[float, float, float]:
    """Fit y ~= b * (1 - exp(-beta * z)) by damped Gauss-Newton.

    Returns (b, beta, rms residual). The starting point takes b from the
    farthest observation and beta from a log-linear fit of the remaining
    decay; bounds (b in [0, 1], beta > 0) are enforced by projection. A step
    that does not reduce the squared error is halved until it does.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if z.size < 3:
        raise EstimationError("backscatter fit needs at least 3 samples")

    b = max(float(y[np.argmax(z)]), 1e-6)
    # log-linear initialization: log(1 - y/b) = -beta * z
    frac = 1.0 - y / b
    ok = frac > 1e-9
    if np.count_nonzero(ok) >= 2 and np.ptp(z[ok]) > 0:
        slope = np.polyfit(z[ok], np.log(frac[ok]), 1)[0]
        beta = max(-float(slope), 1e-3)
    else:
        beta = 1.0 / max(float(np.median(z)), 1e-6)

    def sse(b_, beta_):
        r = b_ * (1.0 - np.exp(-beta_ * z)) - y
        return float(r @ r)

    current = sse(b, beta)
    for _ in range(max_iter):
        e = np.exp(-beta * z)
        model = b * (1.0 - e)
        r = model - y
        jac = np.column_stack([1.0 - e, b * z * e])
        try:
            step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("backscatter fit: singular Jacobian") from exc
        damp = 1.0
        for _ in range(30):
            b_new = min(max(b + damp * step[0], 0.0), 1.0)
            beta_new = max(beta + damp * step[1], 1e-9)
            new = sse(b_new, beta_new)
            if new <= current:
                break
            damp *= 0.5
        else:
            b_new, beta_new, new = b, beta, current
        rel = max(abs(b_new - b) / max(abs(b), 1e-12),
                  abs(beta_new - beta) / max(abs(beta), 1e-12))
        b, beta, current = b_new, beta_new, new
        if rel < rel_step_tol:
            break
    else:
        if current > 1e-4 * y.size:
            raise EstimationError("backscatter fit did not converge")
    return b, beta, float(np.sqrt(current / z.size))


def estimate_backscatter(i: LinearImage, z: DepthMap,
                         dark_fraction: float = 0.01,
                         n_bins: int = 10,
                         override_processed: bool = False) -> BackscatterEstimate:
    """Estimate the veiling color and backscatter coefficients from an image.

    The darkest pixels at each distance are nearly pure backscatter, so per
    depth bin (10 bins over the observed range) the darkest ``dark_fraction``
    of pixels per channel are pooled and the saturating-exponential model is
    fitted per channel. Needs real depth diversity: max/min observed z of at
    least 3.
    """
    i.require_linear("estimate_backscatter", override=override_processed)
    _check_dims(i, z)
    if not 0.0 < dark_fraction <= 0.5:
        raise ValidationError("dark_fraction must lie in (0, 0.5]")
    zv = z.z[z.valid]
    if zv.size == 0:
        raise EstimationError("no valid depth pixels")
    zmin, zmax = float(zv.min()), float(zv.max())
    if zmax < 3.0 * zmin:
        raise EstimationError(
            f"insufficient depth diversity: observed range {zmin:.3g}-{zmax:.3g} m "
            "spans less than a factor of 3"
        )
    pixels = i.data[z.valid]
    edges = np.linspace(zmin, zmax, n_bins + 1)
    which = np.clip(np.digitize(zv, edges) - 1, 0, n_bins - 1)

    b_inf = np.empty(3)
    beta_b = np.empty(3)
    residuals = np.empty(3)
    for c in range(3):
        zs, ys = [], []
        for k in range(n_bins):
            sel = which == k
            n = int(np.count_nonzero(sel))
            if n == 0:
                continue
            vals = pixels[sel, c]
            m = max(1, int(np.ceil(dark_fraction * n)))
            order = np.argsort(vals)[:m]
            ys.append(vals[order])
            zs.append(zv[sel][order])
        zs = np.concatenate(zs)
        ys = np.concatenate(ys)
        b_inf[c], beta_b[c], residuals[c] = fit_saturating_exponential(zs, ys)
    return BackscatterEstimate(b_inf=b_inf, beta_b=beta_b,
                               rms_residual=float(residuals.mean()))


def estimate_attenuation(observations, beta_b: np.ndarray, b_inf: np.ndarray,
                         floor_frac: float = 0.05) -> np.ndarray:
    """Fit per-channel attenuation from chart observations at known distances.

    ``observations`` is a list of ``(patch_rgb, z, reference_rgb)`` where the
    reference is the same patch captured close up (clean of water effects).
    For each channel the model gives log((I - backscatter)/J) = -beta_D * z,
    fitted through the origin by least squares.

    Observations whose backscatter-subtracted value is nonpositive, or below
    ``floor_frac`` of the backscatter term itself, carry no usable direct
    signal (any error in the backscatter estimate swamps them, and distant
    points dominate the fit); they are excluded with a warning.
    """
    beta_b = np.asarray(beta_b, dtype=np.float64)
    b_inf = np.asarray(b_inf, dtype=np.float64)
    if len(observations) < 2:
        raise EstimationError("attenuation fit needs at least 2 observations")
    if not 0.0 <= floor_frac < 1.0:
        raise ValidationError("floor_frac must lie in [0, 1)")
    beta_d = np.empty(3)
    for c in range(3):
        zs, logs = [], []
        for rgb, zi, ref in observations:
            rgb = np.asarray(rgb, dtype=np.float64)
            ref = np.asarray(ref, dtype=np.float64)
            if ref[c] <= 0:
                continue
            backscatter = b_inf[c] * (1.0 - np.exp(-beta_b[c] * float(zi)))
            direct = rgb[c] - backscatter
            if direct <= max(0.0, floor_frac * backscatter):
                warnings.warn(
                    f"attenuation fit: observation at z={zi:g} m is at or below the "
                    f"backscatter floor in channel {c}; excluded",
                    stacklevel=2,
                )
                continue
            zs.append(float(zi))
            logs.append(np.log(direct / ref[c]))
        if len(zs) < 2:
            raise EstimationError(
                f"channel {c}: fewer than 2 usable observations after rejection"
            )
        zs = np.array(zs)
        logs = np.array(logs)
        if np.ptp(zs) == 0:
            raise EstimationError(f"channel {c}: singular fit, all distances equal")
        beta_d[c] = -float(zs @ logs) / float(zs @ zs)
    return beta_d


def closeup_white_balance(i: LinearImage, white_stats: PatchStats,
                          white_reflectance: float,
                          override_processed: bool = False) -> LinearImage:
    """Global diagonal correction anchored on the white patch.

    Valid only for short, uniform imaging distances, where the water column
    adds negligible backscatter and attenuation reduces to a per-channel gain
    that the white patch measures directly.
    """
    i.require_linear("closeup_white_balance", override=override_processed)
    if not 0.0 < white_reflectance <= 1.0:
        raise ValidationError("white_reflectance must lie in (0, 1]")
    if white_stats.clipped_fraction > 0.01:
        raise ValidationError(
            f"white patch is clipped ({white_stats.clipped_fraction:.1%} of pixels); "
            "gains would be biased"
        )
    mean = np.asarray(white_stats.mean_rgb, dtype=np.float64)
    if np.any(mean < 1e-6):
        raise ValidationError("white patch mean is zero or near zero in some channel")
    gains = white_reflectance / mean
    return i.with_data(np.clip(i.data * gains, 0.0, 1.0))
