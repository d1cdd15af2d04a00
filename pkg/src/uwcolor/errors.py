"""Exception hierarchy shared across the package.

The classes map onto the CLI exit-code contract: validation problems exit
with 2, a failed linearity gate with 3, estimation/recovery failures with 4
and file-format or I/O problems with 5.
"""


class UwcolorError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(UwcolorError):
    """Invalid input data, configuration, or violated type invariant."""


class GridMismatchError(ValidationError):
    """Spectra passed to an integration routine are not on a common grid."""


class ProcessedInputError(ValidationError):
    """A physics operation was handed a processed (non-linear) image.

    Raised unless the caller passes an explicit override flag. Processed
    images have photofinishing baked in, so their pixel values are no longer
    proportional to scene radiance and cannot be corrected physically.
    """


class NotFoundError(ValidationError):
    """A requested registry entry does not exist."""


class LinearityFailure(UwcolorError):
    """The linearity gate failed and aborted a pipeline run."""


class EstimationError(UwcolorError):
    """Water-property estimation or recovery could not be completed."""


class FileFormatError(UwcolorError):
    """A file could not be parsed as the expected format."""
