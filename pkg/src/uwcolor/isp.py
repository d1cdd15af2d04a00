"""In-camera photofinishing emulator.

Real camera pipelines are proprietary; the stages here are our own smooth,
parameterized stand-ins for the operation classes such pipelines apply
(white balance, tone mapping, saturation, gamma, quantization). They exist
to produce realistic "processed" images for negative tests: anything that
passes through a profile is tagged processed and refused by the physics
modules unless explicitly overridden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FileFormatError, ValidationError
from .image import LinearImage


@dataclass(frozen=True)
class WhiteBalance:
    """Per-channel gains, clipped back into [0, 1]."""

    gains: tuple[float, float, float]

    def __post_init__(self):
        g = tuple(float(x) for x in self.gains)
        if len(g) != 3 or any(x <= 0 for x in g):
            raise ValidationError("white balance needs 3 positive gains")
        object.__setattr__(self, "gains", g)

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a * np.asarray(self.gains), 0.0, 1.0)


@dataclass(frozen=True)
class ToneCurve:
    """Sigmoid contrast curve around a pivot; contrast 0 is the identity."""

    contrast: float = 2.0
    pivot: float = 0.4

    def __post_init__(self):
        if self.contrast < 0:
            raise ValidationError("tone curve contrast must be >= 0")
        if not 0.0 < self.pivot < 1.0:
            raise ValidationError("tone curve pivot must lie in (0, 1)")

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        return _kernels.tone_curve(a, float(self.contrast), float(self.pivot))


@dataclass(frozen=True)
class GammaEncode:
    """Power-law encoding v ** (1/gamma)."""

    gamma: float = 2.2

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValidationError("gamma must be positive")

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        return np.power(a, 1.0 / self.gamma)


@dataclass(frozen=True)
class SaturationBoost:
    """Mix each pixel away from (factor > 1) or toward (factor < 1) its
    channel mean; factor 1 is the identity."""

    factor: float = 1.3

    def __post_init__(self):
        if self.factor < 0:
            raise ValidationError("saturation factor must be >= 0")

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        mean = a.mean(axis=-1, keepdims=True)
        return np.clip(mean + self.factor * (a - mean), 0.0, 1.0)


def _quantize(a: np.ndarray, bits: int) -> np.ndarray:
    levels = float(2 ** bits - 1)
    # round half up, matching integer-encoder behavior
    return np.floor(a * levels + 0.5) / levels


@dataclass(frozen=True)
class Quantize:
    """Round to 2**bits - 1 uniform levels (half rounds up)."""

    bits: int = 8

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ValidationError("quantization bits must lie in [1, 16]")

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        return _quantize(a, self.bits)


@dataclass(frozen=True)
class LinearCompressQuantize:
    """Compression stand-in that preserves linearity: quantization only, no
    tone or gamma curve ahead of it."""

    bits: int = 12

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ValidationError("quantization bits must lie in [1, 16]")

    def apply_to(self, a: np.ndarray) -> np.ndarray:
        return _quantize(a, self.bits)


IspStage = WhiteBalance | ToneCurve | GammaEncode | SaturationBoost | Quantize | LinearCompressQuantize

_STAGE_TYPES = {
    "white_balance": WhiteBalance,
    "tone_curve": ToneCurve,
    "gamma_encode": GammaEncode,
    "saturation_boost": SaturationBoost,
    "quantize": Quantize,
    "linear_compress_quantize": LinearCompressQuantize,
}
_STAGE_NAMES = {cls: name for name, cls in _STAGE_TYPES.items()}


@dataclass(frozen=True)
class IspProfile:
    """An ordered stage sequence. Order is significant: stages do not
    commute (see the white-balance/gamma example in the tests)."""

    name: str
    stages: tuple[IspStage, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))


def apply_stage(stage: IspStage, img: LinearImage) -> LinearImage:
    """Run one photofinishing stage. Output is tagged processed."""
    data = stage.apply_to(img.data)
    return img.with_data(data, state="processed")


def apply_profile(profile: IspProfile, img: LinearImage) -> LinearImage:
    """Run a full profile in order. Even an empty profile tags its output
    processed: the data took the photofinishing path."""
    data = img.data
    for stage in profile.stages:
        data = stage.apply_to(data)
    return img.with_data(data, state="processed")


def builtin_profile(name: str) -> IspProfile:
    """The two shipped profiles: "neutral" (identity) and "vivid" (a typical
    consumer look: warm white balance, contrast, saturation, gamma, 8-bit)."""
    if name == "neutral":
        return IspProfile(name="neutral", stages=())
    if name == "vivid":
        return IspProfile(
            name="vivid",
            stages=(
                WhiteBalance(gains=(1.6, 1.0, 1.4)),
                ToneCurve(contrast=2.0, pivot=0.4),
                SaturationBoost(factor=1.3),
                GammaEncode(gamma=2.2),
                Quantize(bits=8),
            ),
        )
    raise ValidationError(f"unknown builtin profile {name!r}")


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------

def _stage_to_jsonable(stage: IspStage) -> dict:
    doc = {"type": _STAGE_NAMES[type(stage)]}
    if isinstance(stage, WhiteBalance):
        doc["gains"] = list(stage.gains)
    elif isinstance(stage, ToneCurve):
        doc["contrast"] = stage.contrast
        doc["pivot"] = stage.pivot
    elif isinstance(stage, GammaEncode):
        doc["gamma"] = stage.gamma
    elif isinstance(stage, SaturationBoost):
        doc["factor"] = stage.factor
    else:
        doc["bits"] = stage.bits
    return doc


def _stage_from_jsonable(doc: dict) -> IspStage:
    try:
        cls = _STAGE_TYPES[doc["type"]]
        params = {k: v for k, v in doc.items() if k != "type"}
        if cls is WhiteBalance and "gains" in params:
            params["gains"] = tuple(params["gains"])
        return cls(**params)
    except (KeyError, TypeError) as exc:
        raise FileFormatError(f"bad ISP stage entry {doc!r}") from exc


def load_profile(path: str | Path) -> IspProfile:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    return IspProfile(
        name=doc.get("name", Path(path).stem),
        stages=tuple(_stage_from_jsonable(s) for s in doc.get("stages", [])),
    )


def save_profile(path: str | Path, profile: IspProfile) -> None:
    doc = {"name": profile.name, "stages": [_stage_to_jsonable(s) for s in profile.stages]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
