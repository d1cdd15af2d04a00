"""uwcolor: reproducible color measurement from linear underwater imagery.

The package takes minimally processed (RAW-derived, linear) captures through
chart-based calibration, radiometric linearity verification, physics-based
water-effect removal with per-pixel distance maps, and standardization into
device-independent color, with archival provenance at every step. A
photofinishing emulator is included to demonstrate, quantitatively, why the
in-camera-processed path cannot be recovered.
"""

__version__ = "0.1.0"

from .chart import (
    ChartRecord,
    ChartRegistry,
    PatchLayout,
    PatchRecord,
    PatchRegion,
    PatchRole,
    PatchStats,
    extract_patch_stats,
)
from .colorimetry import (
    CmfSet,
    ColorCalibration,
    camera_to_xyz,
    default_cmfs,
    default_d65,
    delta_e76,
    fit_ccm,
    fit_ccm_from_sensitivities,
    patch_xyz,
    white_point,
    xyz_to_lab,
    xyz_to_standard_rgb,
)
from .errors import (
    EstimationError,
    FileFormatError,
    GridMismatchError,
    LinearityFailure,
    NotFoundError,
    ProcessedInputError,
    UwcolorError,
    ValidationError,
)
from .image import LinearImage
from .isp import IspProfile, apply_profile, apply_stage, builtin_profile
from .linearity import (
    LinearityReport,
    LinearityThresholds,
    fit_linearity,
    linearity_from_exposure_series,
)
from .spectra import (
    GRID,
    CameraModel,
    SceneSample,
    Spectrum,
    SpectrumKind,
    integrate_product,
    resample,
    simulate_raw_rgb,
)
from .water import (
    DepthMap,
    RecoveryDiagnostics,
    WaterProperties,
    closeup_white_balance,
    estimate_attenuation,
    estimate_backscatter,
    forward_degrade,
    recoverability_map,
    remove_water,
)
