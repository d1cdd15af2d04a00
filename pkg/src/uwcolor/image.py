"""Tagged image container.

Images carry two tags alongside their pixel data: the color space they live
in (camera-native or one of the device-independent spaces) and whether they
are still linear or have been through photofinishing. Physics operations
check the tags and refuse processed inputs by default.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ProcessedInputError, ValidationError

SPACES = ("camera", "xyz", "srgb_linear")
STATES = ("linear", "processed")


@dataclass
class LinearImage:
    """H x W x 3 floating-point image in relative linear exposure.

    ``space`` is "camera" until a color transform retags it; ``state`` flips
    to "processed" the moment any photofinishing stage touches the data.
    """

    data: np.ndarray
    space: str = "camera"
    state: str = "linear"

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValidationError("image data must have shape (H, W, 3)")
        if not np.all(np.isfinite(data)):
            raise ValidationError("image data must be finite")
        if self.space not in SPACES:
            raise ValidationError(f"unknown color space tag {self.space!r}")
        if self.state not in STATES:
            raise ValidationError(f"unknown state tag {self.state!r}")
        if self.space == "camera" and (data.min() < 0.0 or data.max() > 1.0):
            raise ValidationError("camera-space values must lie in [0, 1]")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def is_processed(self) -> bool:
        return self.state == "processed"

    def require_linear(self, operation: str, override: bool = False) -> None:
        """Refuse processed inputs unless the caller explicitly overrides.

        Photofinishing breaks the proportionality between pixel values and
        scene radiance, so physics-based corrections applied afterwards
        produce numbers, not measurements.
        """
        if self.is_processed and not override:
            raise ProcessedInputError(
                f"{operation} requires a linear image, but this one is tagged "
                "'processed'; pass the explicit override to proceed anyway "
                "(results will not be physically meaningful)"
            )

    def with_data(self, data: np.ndarray, *, space: str | None = None,
                  state: str | None = None) -> "LinearImage":
        return LinearImage(
            data=data,
            space=self.space if space is None else space,
            state=self.state if state is None else state,
        )

    def copy(self) -> "LinearImage":
        return replace(self, data=self.data.copy())
