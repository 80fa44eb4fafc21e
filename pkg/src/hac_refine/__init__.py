"""PET/CT tumor-segmentation refinement toolkit.

Fuses CNN ensemble probability maps, scores per-case uncertainty with the
normalized surface Dice, and refines uncertain cases by minimizing a
hybrid active-contour energy with iterative convolution-thresholding.
"""

from .backend import active_backend, set_backend
from .errors import (
    BadMagicError,
    BadSpacingError,
    BadSpecError,
    CollapseError,
    ConfigError,
    EmptyInputError,
    EmptyMaskError,
    HacRefineError,
    InvertedBoxError,
    IoFailureError,
    MalformedRowError,
    MetaMismatchError,
    NoOverlapError,
    OutOfBoundsError,
    TruncatedFileError,
    UnsupportedDatatypeError,
    UnsupportedOrientationError,
)
from .gauss import HeatKernelSpec, KernelSpec, gaussian_convolve, heat_convolve
from .grid import (
    GridMeta,
    Indicator,
    ProbabilityMap,
    Volume3,
    binarize,
    crop_voxel,
    masked_mean,
)
from .hybrid_ac import (
    HybridACParams,
    RefineDiagnostics,
    SolverState,
    cnn_energy,
    ct_energy,
    edge_indicator,
    global_means,
    ictm_step,
    init_state,
    local_fit,
    pet_energy,
    refine,
    score_field,
    total_energy,
)
from .metrics import CaseMetrics, aggregate, confusion, dsc, precision, recall
from .nifti import BBoxMM, read_bbox_csv, read_nifti, write_nifti
from .phantom import MemberPerturbation, PhantomCase, PhantomSpec, make_phantom
from .preprocess import crop_world, resample, zscore
from .uncertainty import (
    EnsemblePrediction,
    SurfaceDistanceResult,
    UncertaintyReport,
    ensemble_mean,
    nsd,
    nsd_total,
    select_cases,
    surface_distances,
    uncertainty_score,
)

__version__ = "0.1.0"
