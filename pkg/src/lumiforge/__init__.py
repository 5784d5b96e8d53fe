"""Light-field toolkit: plenoptic sampling analysis and EPI super-resolution.

Two halves share one geometry. The optics side counts the distinct spatial
samples a plenoptic camera records as a function of disparity, showing the
effective resolution only collapses to the micro-lens count at the
generalized focus depths. The learning side doubles a light field's angular
and spatial resolution by running a residual CNN-LSTM over epipolar plane
images, horizontally then vertically.
"""

from .epi import (
    CONTINUITY_THRESHOLD,
    EPI,
    EpipolarLine,
    classify_continuity,
    extract_epi,
    project_to_position,
    project_to_view,
    shear,
)
from .errors import (
    CheckpointError,
    GeometryError,
    LumiforgeError,
    ManifestError,
    ShapeError,
    TrainingDiverged,
)
from .lightfield import (
    DisparityMap,
    LightField4D,
    load_light_field,
    read_image,
    save_light_field,
    write_image,
)
from .metrics import (
    AblationReport,
    MetricReport,
    boundary_margin,
    compare_ablation,
    disparity_sweep,
    epi_pair_psnr,
    evaluate_light_fields,
    psnr,
    ssim,
)
from .optics import (
    CameraConfig,
    EpiLineSketch,
    SamplePattern,
    count_recorded_points,
    disparity_of_depth,
    epi_sketch,
    gaussian_conjugate,
    is_generalized_focus,
    sample_pattern,
    sweep_counts,
)
from .pipeline import SRPlan, stitch, super_resolve, tile_epi
from .resample import cubic_kernel, sample_line, upsample_axis_double
from .scenes import (
    AugmentOp,
    GenConfig,
    LayeredScene,
    SceneLayer,
    TrainingPair,
    apply_augmentation,
    augment,
    augmentation_operations,
    gen_training_pairs,
    generate_pair,
    render_epi,
)

__all__ = [
    "AblationReport",
    "AugmentOp",
    "CONTINUITY_THRESHOLD",
    "CameraConfig",
    "CheckpointError",
    "DisparityMap",
    "EPI",
    "EpiLineSketch",
    "EpipolarLine",
    "GenConfig",
    "GeometryError",
    "LayeredScene",
    "LightField4D",
    "LumiforgeError",
    "ManifestError",
    "MetricReport",
    "SRPlan",
    "SamplePattern",
    "SceneLayer",
    "ShapeError",
    "TrainingDiverged",
    "TrainingPair",
    "apply_augmentation",
    "augment",
    "augmentation_operations",
    "boundary_margin",
    "classify_continuity",
    "compare_ablation",
    "count_recorded_points",
    "cubic_kernel",
    "disparity_of_depth",
    "disparity_sweep",
    "epi_pair_psnr",
    "epi_sketch",
    "evaluate_light_fields",
    "extract_epi",
    "gaussian_conjugate",
    "gen_training_pairs",
    "generate_pair",
    "is_generalized_focus",
    "load_light_field",
    "project_to_position",
    "project_to_view",
    "psnr",
    "read_image",
    "render_epi",
    "sample_line",
    "sample_pattern",
    "save_light_field",
    "shear",
    "ssim",
    "stitch",
    "super_resolve",
    "sweep_counts",
    "tile_epi",
    "upsample_axis_double",
    "write_image",
]
